//! Shape fields over a finite set: built-in generators, refinements (explicit
//! by projection or as extended formulations), Helly-cascade sets and the
//! sampled convexity checker.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::jet::{unity_pair, Jet};
use crate::multi_index::{JetSpace, MultiIndex};
use crate::nonneg::{nonneg_member, Decision, Flavor};
use crate::polytope::{HPoly, HPolytope, ProjectGuard};
use crate::scalar::{Rational, Scalar};
use crate::util::combinations;
use crate::whitney::{add_taylor_rows, dist_pow, transport_coeffs, NonnegBlock, Outcome, Scale, System};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Interp,
    Nonneg(Flavor),
    Lifted,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineMode {
    Explicit,
    Oracle,
}

/// Nonnegativity requirement on the jet stored at `offset` of a block.
#[derive(Clone, Debug)]
pub struct BlockNonneg {
    pub offset: usize,
    pub basepoint: Vec<f64>,
    pub m: u32,
    pub flavor: Flavor,
}

/// Rows over `[P, aux]` affine in `M`, plus optional nonnegativity requirements.
#[derive(Clone, Debug)]
pub struct Block {
    pub aux_dim: usize,
    pub poly: HPolytope,
    pub nonneg: Vec<BlockNonneg>,
}

/// `Γ(x, M)` as the set of `P` for which every block is feasible; blocks
/// share only `P`.
#[derive(Clone, Debug)]
pub struct Membership {
    pub jet_dim: usize,
    pub blocks: Vec<Block>,
}

impl Membership {
    pub fn explicit(poly: HPolytope) -> Membership {
        Membership {
            jet_dim: poly.dim,
            blocks: vec![Block {
                aux_dim: 0,
                poly,
                nonneg: Vec::new(),
            }],
        }
    }

    pub fn is_explicit(&self) -> bool {
        self.blocks
            .iter()
            .all(|b| b.aux_dim == 0 && b.nonneg.is_empty())
    }

    /// All rows as one polytope over `P` (explicit memberships only).
    pub fn as_polytope(&self) -> Option<HPolytope> {
        if !self.is_explicit() {
            return None;
        }
        let mut p = HPoly::new(self.jet_dim);
        for b in &self.blocks {
            p.rows.extend(b.poly.rows.iter().cloned());
        }
        Some(p)
    }

    pub fn aux_total(&self) -> usize {
        self.blocks.iter().map(|b| b.aux_dim).sum()
    }

    pub fn row_count(&self) -> usize {
        self.blocks.iter().map(|b| b.poly.rows.len()).sum()
    }

    fn emit_block<T: Scalar>(&self, b: &Block, sys: &mut System<T>, jet_off: usize) {
        let aux_off = sys.add_vars(b.aux_dim);
        let map = |j: usize| {
            if j < self.jet_dim {
                jet_off + j
            } else {
                aux_off + j - self.jet_dim
            }
        };
        for r in &b.poly.rows {
            let a = r
                .a
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, v)| (map(j), T::from_f64(*v)))
                .collect();
            sys.add_le(a, T::from_f64(r.b0), T::from_f64(r.b1));
        }
        for nn in &b.nonneg {
            sys.add_nonneg(NonnegBlock {
                offset: map(nn.offset),
                basepoint: nn.basepoint.clone(),
                m: nn.m,
                flavor: nn.flavor,
            });
        }
    }

    /// Adds every block to `sys` with the jet stored at `jet_off`.
    pub fn emit<T: Scalar>(&self, sys: &mut System<T>, jet_off: usize) {
        for b in &self.blocks {
            self.emit_block(b, sys, jet_off);
        }
    }

    /// Membership of `P` at scale `M`: one feasibility solve per block.
    pub fn contains(&self, p: &Jet, m: f64) -> Result<bool, Error> {
        for b in &self.blocks {
            if b.aux_dim == 0 && b.nonneg.is_empty() {
                if !b.poly.contains(&p.derivs, m, 1e-9) {
                    return Ok(false);
                }
                continue;
            }
            if b.aux_dim == 0 && b.poly.rows.is_empty() && b.nonneg.len() == 1 && b.nonneg[0].offset == 0 {
                let nn = &b.nonneg[0];
                let cert = nonneg_member(&p.with_degree(nn.m - 1), m, nn.m, nn.flavor)?;
                if cert.decision != Decision::Member {
                    return Ok(false);
                }
                continue;
            }
            let mut sys = System::<f64>::new();
            let off = sys.add_vars(self.jet_dim);
            sys.fix_jet(off, p);
            self.emit_block(b, &mut sys, off);
            if !sys.solve(Scale::Fixed(m))?.is_feasible() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Smallest `M` with `P ∈ Γ(x, M)`, or `None` when no scale works.
    pub fn min_scale(&self, p: &Jet) -> Result<Option<f64>, Error> {
        let mut sys = System::<f64>::new();
        let off = sys.add_vars(self.jet_dim);
        sys.fix_jet(off, p);
        self.emit(&mut sys, off);
        Ok(sys.solve(Scale::Minimize)?.solution().map(|s| s.scale))
    }

    /// Minimises `objective·P` over `Γ(x, M)`.
    pub fn optimize(&self, space: &Arc<JetSpace>, x: &[f64], m: f64, objective: &[f64]) -> Result<Option<Jet>, Error> {
        let mut sys = System::<f64>::new();
        let off = sys.add_vars(self.jet_dim);
        self.emit(&mut sys, off);
        let obj: Vec<(usize, f64)> = objective.iter().enumerate().map(|(k, v)| (off + k, *v)).collect();
        Ok(match sys.solve_with(Scale::Fixed(m), &obj)? {
            Outcome::Feasible(s) if s.certified => Some(Jet::from_derivs(
                space.clone(),
                x,
                s.z[off..off + self.jet_dim].to_vec(),
            )),
            _ => None,
        })
    }
}

#[derive(Clone, Debug)]
pub struct ShapeField {
    pub kind: FieldKind,
    pub space: Arc<JetSpace>,
    pub points: Vec<Vec<f64>>,
    pub sets: Vec<Membership>,
    pub level: usize,
    pub prev: Option<Arc<ShapeField>>,
    /// Per-point count of refinement blocks that stayed in oracle form after a
    /// projection guard tripped.
    pub fallbacks: usize,
}

fn check_points(points: &[Vec<f64>]) -> Result<usize, Error> {
    let n = points
        .first()
        .map(|p| p.len())
        .ok_or_else(|| Error::Input("empty point set".into()))?;
    for (i, p) in points.iter().enumerate() {
        if p.len() != n {
            return Err(Error::Input("points of different dimension".into()));
        }
        if points[..i].contains(p) {
            return Err(Error::Input(format!("duplicate point {p:?}")));
        }
    }
    Ok(n)
}

fn unit_row(dim: usize, k: usize, s: f64) -> Vec<f64> {
    let mut a = vec![0.0; dim];
    a[k] = s;
    a
}

/// `|∂^β P| ≤ M` for all stored derivatives plus `P(x) = value`.
fn box_with_value(dim: usize, value: f64) -> HPolytope {
    let mut p = HPoly::new(dim);
    for k in 0..dim {
        p.push_abs(unit_row(dim, k, 1.0), 0.0, 0.0, 1.0);
    }
    p.push_eq(unit_row(dim, 0, 1.0), value);
    p
}

impl ShapeField {
    /// Taylor order of the refinement rows: jet degree plus one.
    pub fn order(&self) -> u32 {
        self.space.degree + 1
    }

    pub fn n(&self) -> usize {
        self.space.n
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `Γ₀(x, M) = {P : |∂^β P(x)| ≤ M, P(x) = f(x)}` over jets of degree `m−1`.
    pub fn interp(points: Vec<Vec<f64>>, values: &[f64], m: u32) -> Result<ShapeField, Error> {
        let n = check_points(&points)?;
        if values.len() != points.len() || m == 0 {
            return Err(Error::Input("one value per point and m ≥ 1 required".into()));
        }
        let space = JetSpace::get(n, m - 1);
        let sets = values
            .iter()
            .map(|v| Membership::explicit(box_with_value(space.dim(), *v)))
            .collect();
        Ok(ShapeField {
            kind: FieldKind::Interp,
            space,
            points,
            sets,
            level: 0,
            prev: None,
            fallbacks: 0,
        })
    }

    /// Box and value rows plus `P(x+z) + M|z|^m ≥ 0` for all `z`.
    pub fn nonneg(points: Vec<Vec<f64>>, values: &[f64], m: u32, flavor: Flavor) -> Result<ShapeField, Error> {
        if let Some(v) = values.iter().find(|v| **v < 0.0) {
            return Err(Error::Domain(format!("negative datum {v}")));
        }
        let mut f = ShapeField::interp(points, values, m)?;
        f.kind = FieldKind::Nonneg(flavor);
        for (set, x) in f.sets.iter_mut().zip(&f.points) {
            set.blocks[0].nonneg.push(BlockNonneg {
                offset: 0,
                basepoint: x.clone(),
                m,
                flavor,
            });
        }
        Ok(f)
    }

    /// A field given by explicit polytopes (rows over the jet coefficients at
    /// each point, in the cached index order of degree `m−1`).
    pub fn custom(points: Vec<Vec<f64>>, polys: Vec<HPolytope>, m: u32) -> Result<ShapeField, Error> {
        let n = check_points(&points)?;
        let space = JetSpace::get(n, m - 1);
        if polys.len() != points.len() || polys.iter().any(|p| p.dim != space.dim()) {
            return Err(Error::Input("one polytope of dimension dim P per point required".into()));
        }
        if polys.iter().flat_map(|p| &p.rows).any(|r| r.b1 < 0.0) {
            return Err(Error::Input("rows must be nondecreasing in M (b1 ≥ 0)".into()));
        }
        Ok(ShapeField {
            kind: FieldKind::Custom,
            space,
            points,
            sets: polys.into_iter().map(Membership::explicit).collect(),
            level: 0,
            prev: None,
            fallbacks: 0,
        })
    }

    /// Field on `E × {0} ⊂ ℝ^{n+D}` over jets of degree `m`:
    /// `P(x,0) = 0`, `∇_ξ P(x,0) ∈ K(x)`, `|∂^α_x ∂^β_ξ P| ≤ M`.
    pub fn lifted(points: &[Vec<f64>], targets: &[HPolytope], m: u32) -> Result<ShapeField, Error> {
        let n = check_points(points)?;
        let d = targets
            .first()
            .map(|k| k.dim)
            .ok_or_else(|| Error::Input("no targets".into()))?;
        if targets.len() != points.len() || targets.iter().any(|k| k.dim != d) {
            return Err(Error::Input("one target of common dimension per point required".into()));
        }
        let space = JetSpace::get(n + d, m);
        let dim = space.dim();
        let grad: Vec<usize> = (0..d)
            .map(|i| space.index_of(&MultiIndex::unit(n + d, n + i)).expect("first order"))
            .collect();
        let mut sets = Vec::new();
        let mut lifted_points = Vec::new();
        for (x, k) in points.iter().zip(targets) {
            let mut p = HPoly::new(dim);
            for j in 0..dim {
                p.push_abs(unit_row(dim, j, 1.0), 0.0, 0.0, 1.0);
            }
            p.push_eq(unit_row(dim, 0, 1.0), 0.0);
            for r in &k.rows {
                if r.b1 != 0.0 {
                    return Err(Error::Input("target rows must not depend on M".into()));
                }
                let mut a = vec![0.0; dim];
                for (i, v) in r.a.iter().enumerate() {
                    a[grad[i]] = *v;
                }
                p.push(a, r.b0, 0.0);
            }
            sets.push(Membership::explicit(p));
            let mut xl = x.clone();
            xl.extend(std::iter::repeat_n(0.0, d));
            lifted_points.push(xl);
        }
        Ok(ShapeField {
            kind: FieldKind::Lifted,
            space,
            points: lifted_points,
            sets,
            level: 0,
            prev: None,
            fallbacks: 0,
        })
    }

    pub fn member(&self, i: usize, m: f64, p: &Jet) -> Result<bool, Error> {
        self.sets[i].contains(p, m)
    }

    /// The level-0 field this one was refined from.
    pub fn base(&self) -> &ShapeField {
        let mut f = self;
        while let Some(p) = &f.prev {
            f = p;
        }
        f
    }

    /// Points whose `Γ(y, M)` is empty: every refinement is then empty everywhere.
    pub fn empty_points(&self, m: f64) -> Result<Vec<usize>, Error> {
        let mut out = Vec::new();
        for (i, s) in self.sets.iter().enumerate() {
            let mut sys = System::<f64>::new();
            let off = sys.add_vars(s.jet_dim);
            s.emit(&mut sys, off);
            if !sys.solve(Scale::Fixed(m))?.is_feasible() {
                out.push(i);
            }
        }
        Ok(out)
    }

    /// Block over `[P, P′_y, aux(Γ(y))]` encoding `P′_y ∈ Γ(y, M)` and the
    /// Taylor bounds between `P` at `x` and `P′_y`.
    fn pair_block(&self, i: usize, j: usize) -> Block {
        let d = self.space.dim();
        let (x, y) = (&self.points[i], &self.points[j]);
        let target = &self.sets[j];
        let aux = d + target.aux_total();
        let dim = d + aux;
        let mut poly = HPoly::new(dim);
        let mat = transport_coeffs::<f64>(&self.space, y, x);
        let m = self.order();
        for (b, beta) in self.space.indices.iter().enumerate() {
            let mut a = vec![0.0; dim];
            a[b] = 1.0;
            for (dl, c) in mat[b].iter().enumerate() {
                a[d + dl] -= c;
            }
            let r: f64 = dist_pow(x, y, m - beta.order());
            poly.push_abs(a, 0.0, 0.0, r);
        }
        let mut nonneg = Vec::new();
        let mut cum = 2 * d;
        for blk in &target.blocks {
            let map = |k: usize| if k < d { d + k } else { cum + k - d };
            for r in &blk.poly.rows {
                let mut a = vec![0.0; dim];
                for (k, v) in r.a.iter().enumerate() {
                    a[map(k)] += v;
                }
                poly.push(a, r.b0, r.b1);
            }
            for nn in &blk.nonneg {
                nonneg.push(BlockNonneg {
                    offset: map(nn.offset),
                    ..nn.clone()
                });
            }
            cum += blk.aux_dim;
        }
        Block {
            aux_dim: aux,
            poly,
            nonneg,
        }
    }

    /// First refinement `Γ^#(x, M)`. The `y = x` term reduces to `Γ(x, M)`,
    /// whose blocks are kept directly.
    pub fn refine_once(&self, mode: RefineMode, guard: ProjectGuard) -> Result<ShapeField, Error> {
        let d = self.space.dim();
        let keep: Vec<usize> = (0..d).collect();
        let per_point: Vec<Result<(Membership, usize), Error>> = (0..self.len())
            .into_par_iter()
            .map(|i| {
                let mut fallbacks = 0;
                let mut blocks = self.sets[i].blocks.clone();
                for j in 0..self.len() {
                    if j == i {
                        continue;
                    }
                    let blk = self.pair_block(i, j);
                    if mode == RefineMode::Explicit && blk.nonneg.is_empty() {
                        match blk.poly.project(&keep, guard) {
                            Ok(p) => {
                                blocks.push(Block {
                                    aux_dim: 0,
                                    poly: p,
                                    nonneg: Vec::new(),
                                });
                                continue;
                            }
                            Err(Error::Guard(_)) => fallbacks += 1,
                            Err(e) => return Err(e),
                        }
                    }
                    blocks.push(blk);
                }
                if mode == RefineMode::Explicit {
                    blocks = merge_explicit(d, blocks, guard)?;
                }
                Ok((Membership { jet_dim: d, blocks }, fallbacks))
            })
            .collect();
        let mut sets = Vec::with_capacity(self.len());
        let mut fallbacks = 0;
        for r in per_point {
            let (s, f) = r?;
            sets.push(s);
            fallbacks += f;
        }
        Ok(ShapeField {
            kind: self.kind,
            space: self.space.clone(),
            points: self.points.clone(),
            sets,
            level: self.level + 1,
            prev: Some(Arc::new(self.clone())),
            fallbacks,
        })
    }

    /// `l`-fold refinement.
    pub fn refine(&self, l: usize, mode: RefineMode, guard: ProjectGuard) -> Result<ShapeField, Error> {
        let mut f = self.clone();
        for _ in 0..l {
            f = f.refine_once(mode, guard)?;
        }
        Ok(f)
    }

    /// For `P ∈ Γ_l(x_i, M)`, a partner `P′_y ∈ Γ_{l−1}(y, M)` at every other
    /// point satisfying the Taylor bounds, extracted from the per-`y` solve.
    pub fn refinement_witness(&self, i: usize, m: f64, p: &Jet) -> Result<Vec<(usize, Jet)>, Error> {
        (0..self.len())
            .filter(|&j| j != i)
            .map(|j| self.refinement_partner(i, j, m, p).map(|q| (j, q)))
            .collect()
    }

    /// The partner of `P ∈ Γ_l(x_i, M)` at `x_j` alone. For `j = i` the jet
    /// itself, since `Γ_l(x, M) ⊆ Γ_{l−1}(x, M)`.
    pub fn refinement_partner(&self, i: usize, j: usize, m: f64, p: &Jet) -> Result<Jet, Error> {
        let prev = self
            .prev
            .as_ref()
            .ok_or_else(|| Error::Precondition("field is not a refinement".into()))?;
        if i == j {
            return Ok(p.clone());
        }
        let d = self.space.dim();
        let mut sys = System::<f64>::new();
        let px = sys.add_vars(d);
        sys.fix_jet(px, p);
        let py = sys.add_vars(d);
        add_taylor_rows(&mut sys, &self.space, self.order(), &self.points[i], px, &self.points[j], py, &1.0);
        prev.sets[j].emit(&mut sys, py);
        match sys.solve(Scale::Fixed(m))? {
            Outcome::Feasible(s) => Ok(Jet::from_derivs(
                self.space.clone(),
                &self.points[j],
                s.z[py..py + d].to_vec(),
            )),
            Outcome::Infeasible => Err(Error::Infeasible(format!(
                "no partner at point {j}: the jet is not in the refined set"
            ))),
        }
    }
}

fn merge_explicit(d: usize, blocks: Vec<Block>, guard: ProjectGuard) -> Result<Vec<Block>, Error> {
    let mut merged = HPoly::new(d);
    let mut rest = Vec::new();
    for b in blocks {
        if b.aux_dim == 0 && b.nonneg.is_empty() {
            merged.rows.extend(b.poly.rows);
        } else {
            rest.push(b);
        }
    }
    let keep: Vec<usize> = (0..d).collect();
    let pruned = merged.project(&keep, guard)?;
    let mut out = vec![Block {
        aux_dim: 0,
        poly: pruned,
        nonneg: Vec::new(),
    }];
    out.extend(rest);
    Ok(out)
}

/// Whitney-field system on the points `idx` of the base field: a jet per
/// point, membership in `Γ₀`, and Taylor rows on every ordered pair.
/// Returns the jet offsets in the order of `idx`.
pub fn whitney_system<T: Scalar>(field: &ShapeField, idx: &[usize], sys: &mut System<T>) -> Vec<usize> {
    let d = field.space.dim();
    let offs: Vec<usize> = idx.iter().map(|_| sys.add_vars(d)).collect();
    for (&i, &off) in idx.iter().zip(&offs) {
        field.sets[i].emit(sys, off);
    }
    let one = T::one();
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            if a != b {
                add_taylor_rows(sys, &field.space, field.order(), &field.points[i], offs[a], &field.points[j], offs[b], &one);
            }
        }
    }
    offs
}

/// Number of points allowed in `S` at level `l`: `(dim P + 2)^l`, capped.
pub fn fp_budget(dim_p: usize, l: usize, cap: usize) -> usize {
    let mut k = 1usize;
    for _ in 0..l {
        k = k.saturating_mul(dim_p + 2);
        if k >= cap {
            return cap;
        }
    }
    k.min(cap)
}

/// The inclusion-maximal sets `S ∪ {x}` with `#S` within budget; other
/// subsets give larger `Γ(x, S)` and are implied.
pub fn fp_maximal_sets(len: usize, i: usize, budget: usize) -> Vec<Vec<usize>> {
    let others: Vec<usize> = (0..len).filter(|&j| j != i).collect();
    let k = budget.min(others.len());
    combinations(others.len(), k)
        .into_iter()
        .map(|c| {
            let mut s = vec![i];
            s.extend(c.iter().map(|&t| others[t]));
            s
        })
        .collect()
}

/// Every set `S ∪ {x}` with `#S ≤ budget` (brute-force enumeration).
pub fn fp_all_sets(len: usize, i: usize, budget: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for s in 0..=budget.min(len) {
        for c in combinations(len, s) {
            let mut v = vec![i];
            v.extend(c.into_iter().filter(|&j| j != i));
            v.sort_unstable();
            v.dedup();
            if !out.contains(&v) {
                out.push(v);
            }
        }
    }
    out
}

/// Options for the Helly-cascade computations.
#[derive(Clone, Copy, Debug)]
pub struct FpOptions {
    pub subset_cap: usize,
    pub exact: bool,
}

impl Default for FpOptions {
    fn default() -> Self {
        FpOptions {
            subset_cap: 6,
            exact: false,
        }
    }
}

fn fp_member_t<T: Scalar>(field: &ShapeField, sets: &[Vec<usize>], m0: f64, p: &Jet) -> Result<bool, Error> {
    for s in sets {
        let mut sys = System::<T>::new();
        let offs = whitney_system(field, s, &mut sys);
        sys.fix_jet(offs[0], p);
        if !sys.solve(Scale::Fixed(T::from_f64(m0)))?.is_feasible() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `P ∈ Γ_l^fp(x_i, M₀)`: for every admissible `S`, a Whitney field on
/// `S ∪ {x}` with seminorm ≤ `M₀`, members of `Γ₀` and `P^x = P`.
pub fn gamma_fp(field: &ShapeField, i: usize, m0: f64, l: usize, p: &Jet, opts: FpOptions) -> Result<bool, Error> {
    let field = field.base();
    let budget = fp_budget(field.space.dim(), l, opts.subset_cap);
    let sets = fp_maximal_sets(field.len(), i, budget);
    if opts.exact {
        fp_member_t::<Rational>(field, &sets, m0, p)
    } else {
        fp_member_t::<f64>(field, &sets, m0, p)
    }
}

/// Whether the sets `proj_P Γ(x, S)` for `S ∈ family` have a common point,
/// decided by one joint system; returns a common jet when they do.
pub fn fp_joint<T: Scalar>(field: &ShapeField, i: usize, m0: f64, family: &[Vec<usize>]) -> Result<Option<Vec<f64>>, Error> {
    let d = field.space.dim();
    let mut sys = System::<T>::new();
    let shared = sys.add_vars(d);
    for s in family {
        let offs = whitney_system(field, s, &mut sys);
        let pos = s.iter().position(|&v| v == i).expect("x in every set");
        for k in 0..d {
            sys.add_eq(vec![(offs[pos] + k, T::one()), (shared + k, T::one().neg())], T::zero());
        }
    }
    Ok(sys
        .solve(Scale::Fixed(T::from_f64(m0)))?
        .solution()
        .map(|s| s.z[shared..shared + d].iter().map(Scalar::to_f64).collect()))
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvexityReport {
    pub trials: usize,
    pub passed: usize,
    pub rejected: usize,
    pub c_w: f64,
    pub delta_max: f64,
    /// Smallest constant that would pass every accepted trial.
    pub empirical_c_w: f64,
}

impl ConvexityReport {
    /// Every accepted trial passed, at least one was accepted, and the
    /// measured constant is finite.
    pub fn holds(&self) -> bool {
        self.passed > 0 && self.passed + self.rejected == self.trials && self.empirical_c_w.is_finite()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConvexityParams {
    pub c_w: f64,
    pub delta_max: f64,
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.iter().map(|a| a / n).collect();
        }
    }
}

/// A member of `Γ(x, M)` (optionally within the `(wsf2)` window around
/// `anchor`): a random convex combination of LP vertices.
fn sample_member(
    field: &ShapeField,
    i: usize,
    m: f64,
    window: Option<(&Jet, f64)>,
    rng: &mut ChaCha8Rng,
) -> Result<Option<Jet>, Error> {
    let d = field.space.dim();
    let set = &field.sets[i];
    let x = &field.points[i];
    let mut verts = Vec::new();
    for _ in 0..3 {
        let dir = random_unit(rng, d);
        let mut sys = System::<f64>::new();
        let off = sys.add_vars(d);
        set.emit(&mut sys, off);
        if let Some((anchor, delta)) = window {
            for (k, beta) in field.space.indices.iter().enumerate() {
                let r = m * delta.powi((field.order() - beta.order()) as i32);
                sys.add_abs(vec![(off + k, 1.0)], anchor.derivs[k], r, 0.0);
            }
        }
        let obj: Vec<(usize, f64)> = dir.iter().enumerate().map(|(k, v)| (off + k, *v)).collect();
        match sys.solve_with(Scale::Fixed(m), &obj)? {
            Outcome::Feasible(s) if s.certified => verts.push(s.z[off..off + d].to_vec()),
            _ => {}
        }
    }
    if verts.is_empty() {
        return Ok(None);
    }
    let w: Vec<f64> = verts.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
    let tot: f64 = w.iter().sum();
    let mut c = vec![0.0; d];
    for (v, wi) in verts.iter().zip(&w) {
        for k in 0..d {
            c[k] += v[k] * wi / tot;
        }
    }
    Ok(Some(Jet::from_derivs(field.space.clone(), x, c)))
}

/// Sampled `(C_w, δ_max)`-convexity test: for random admissible tuples
/// `(x, M, δ, P1, P2, Q1, Q2)` checks `Q1²P1 + Q2²P2 ∈ Γ(x, C_w M)`.
pub fn convexity_check(field: &ShapeField, params: ConvexityParams, trials: usize, seed: u64) -> Result<ConvexityReport, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = field.space.dim();
    // Scale at which each Γ(x, ·) becomes nonempty.
    let mut floor = Vec::with_capacity(field.len());
    for s in &field.sets {
        let mut sys = System::<f64>::new();
        let off = sys.add_vars(d);
        s.emit(&mut sys, off);
        floor.push(sys.solve(Scale::Minimize)?.solution().map(|s| s.scale));
    }
    if floor.iter().all(|f| f.is_none()) {
        return Err(Error::Infeasible("every Γ(x, M) is empty".into()));
    }
    let mut passed = 0;
    let mut rejected = 0;
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let i = loop {
            let i = rng.gen_range(0..field.len());
            if floor[i].is_some() {
                break i;
            }
        };
        let m = floor[i].unwrap().max(1e-3) * rng.gen_range(1.0..4.0);
        let delta = params.delta_max * rng.gen_range(0.05..=1.0);
        let x = &field.points[i];
        let p1 = match sample_member(field, i, m, None, &mut rng)? {
            Some(p) => p,
            None => {
                rejected += 1;
                continue;
            }
        };
        let p2 = match sample_member(field, i, m, Some((&p1, delta)), &mut rng)? {
            Some(p) => p,
            None => {
                rejected += 1;
                continue;
            }
        };
        // S with |∂^β S| ≤ δ^{−|β|}; Q_i from the unity pair with c0 halved
        // until (wsf3) holds.
        let sd: Vec<f64> = field
            .space
            .indices
            .iter()
            .map(|b| rng.gen_range(-1.0..1.0) * delta.powi(-(b.order() as i32)))
            .collect();
        let s = Jet::from_derivs(field.space.clone(), x, sd);
        let mut c0 = 0.25;
        let mut pair = None;
        for _ in 0..40 {
            if let Ok((q1, q2)) = unity_pair(&s, c0) {
                let ok = [&q1, &q2].iter().all(|q| {
                    field
                        .space
                        .indices
                        .iter()
                        .zip(&q.derivs)
                        .all(|(b, v)| v.abs() <= delta.powi(-(b.order() as i32)) * (1.0 + 1e-12))
                });
                if ok {
                    pair = Some((q1, q2));
                    break;
                }
            }
            c0 *= 0.5;
        }
        let (q1, q2) = match pair {
            Some(p) => p,
            None => {
                rejected += 1;
                continue;
            }
        };
        let t1 = q1.multiply(&q1)?.multiply(&p1)?;
        let t2 = q2.multiply(&q2)?.multiply(&p2)?;
        let p = t1.add(&t2)?;
        let need = match field.sets[i].min_scale(&p)? {
            Some(v) => v,
            None => f64::INFINITY,
        };
        let ratio = need / m;
        worst = worst.max(ratio);
        if ratio <= params.c_w * (1.0 + 1e-9) {
            passed += 1;
        }
    }
    Ok(ConvexityReport {
        trials,
        passed,
        rejected,
        c_w: params.c_w,
        delta_max: params.delta_max,
        empirical_c_w: worst,
    })
}

/// Level-by-level nonemptiness of `Γ_l^fp(x, M₀)`.
#[derive(Clone, Debug, Serialize)]
pub struct FpLevel {
    pub level: usize,
    pub budget: usize,
    pub sets: usize,
    pub nonempty: bool,
    /// `(dim P + 1)`-wise feasibility of the family (exact mode only).
    pub helly_nonempty: Option<bool>,
}

pub fn gamma_fp_levels(field: &ShapeField, i: usize, m0: f64, l_max: usize, opts: FpOptions, helly: bool) -> Result<Vec<FpLevel>, Error> {
    let field = field.base();
    let d = field.space.dim();
    let mut out = Vec::new();
    for l in 0..=l_max {
        let budget = fp_budget(d, l, opts.subset_cap);
        let family = fp_maximal_sets(field.len(), i, budget);
        let nonempty = if opts.exact {
            fp_joint::<Rational>(field, i, m0, &family)?.is_some()
        } else {
            fp_joint::<f64>(field, i, m0, &family)?.is_some()
        };
        let helly_nonempty = if helly && opts.exact {
            let k = (d + 1).min(family.len());
            let mut all = true;
            for combo in combinations(family.len(), k) {
                let sub: Vec<Vec<usize>> = combo.iter().map(|&c| family[c].clone()).collect();
                if fp_joint::<Rational>(field, i, m0, &sub)?.is_none() {
                    all = false;
                    break;
                }
            }
            Some(all)
        } else {
            None
        };
        out.push(FpLevel {
            level: l,
            budget,
            sets: family.len(),
            nonempty,
            helly_nonempty,
        });
    }
    Ok(out)
}

/// Membership of `P` in the sampled shape field, flagged for fields whose
/// membership is nonlinear.
pub fn field_member_certified(field: &ShapeField, i: usize, m: f64, p: &Jet) -> Result<(bool, bool), Error> {
    let exact_lp = field.sets[i].blocks.iter().all(|b| b.nonneg.is_empty());
    Ok((field.member(i, m, p)?, exact_lp))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jet(space: &Arc<JetSpace>, x: &[f64], d: &[f64]) -> Jet {
        Jet::from_derivs(space.clone(), x, d.to_vec())
    }

    #[test]
    fn interp_examples() {
        let f = ShapeField::interp(vec![vec![0.0]], &[0.7], 1).unwrap();
        let s = f.space.clone();
        assert!(f.member(0, 1.0, &jet(&s, &[0.0], &[0.7])).unwrap());
        assert!(!f.member(0, 0.5, &jet(&s, &[0.0], &[0.7])).unwrap());
        let g = ShapeField::interp(vec![vec![0.0]], &[3.0], 2).unwrap();
        assert_eq!(g.empty_points(1.0).unwrap(), vec![0]);
    }

    #[test]
    fn refinement_examples() {
        let f = ShapeField::interp(vec![vec![0.0], vec![1.0]], &[0.4, 0.45], 1).unwrap();
        let s = f.space.clone();
        for mode in [RefineMode::Explicit, RefineMode::Oracle] {
            let r = f.refine_once(mode, ProjectGuard::default()).unwrap();
            assert!(r.member(0, 0.5, &jet(&s, &[0.0], &[0.4])).unwrap());
            let w = r.refinement_witness(0, 0.5, &jet(&s, &[0.0], &[0.4])).unwrap();
            assert!((w[0].1.value() - 0.45).abs() < 1e-12);
        }
        let f = ShapeField::interp(vec![vec![0.0], vec![1.0]], &[0.0, 10.0], 1).unwrap();
        for mode in [RefineMode::Explicit, RefineMode::Oracle] {
            let r = f.refine_once(mode, ProjectGuard::default()).unwrap();
            assert!(!r.member(0, 1.0, &jet(&s, &[0.0], &[0.0])).unwrap());
        }
    }

    #[test]
    fn nonneg_field_examples() {
        let f = ShapeField::nonneg(vec![vec![0.0]], &[0.25], 2, Flavor::Cm11).unwrap();
        let s = f.space.clone();
        assert!(f.member(0, 1.0, &jet(&s, &[0.0], &[0.25, 1.0])).unwrap());
        assert!(!f.member(0, 1.0, &jet(&s, &[0.0], &[0.25, 1.01])).unwrap());
        assert!(ShapeField::nonneg(vec![vec![0.0]], &[-1.0], 2, Flavor::Cm).is_err());
    }

    #[test]
    fn fp_sets() {
        assert_eq!(fp_budget(3, 0, 6), 1);
        assert_eq!(fp_budget(3, 1, 6), 5);
        assert_eq!(fp_budget(3, 2, 6), 6);
        assert_eq!(fp_maximal_sets(3, 1, 1), vec![vec![1, 0], vec![1, 2]]);
        assert_eq!(fp_all_sets(3, 0, 1).len(), 3);
    }

    #[test]
    fn gamma_fp_levels_for_incompatible_pair() {
        // Each point alone is fine at M = 1, but the pair needs slope 10.
        let f = ShapeField::interp(vec![vec![0.0], vec![0.1]], &[0.0, 1.0], 1).unwrap();
        let opts = FpOptions {
            subset_cap: 6,
            exact: true,
        };
        let lv = gamma_fp_levels(&f, 0, 1.0, 1, opts, true).unwrap();
        assert!(!lv[0].nonempty && !lv[1].nonempty);
        assert_eq!(lv[1].helly_nonempty, Some(false));
        assert!(f.empty_points(1.0).unwrap().is_empty());
    }

    #[test]
    fn convexity_interp_m1() {
        let f = ShapeField::interp(vec![vec![0.0], vec![1.0]], &[0.3, -0.2], 1).unwrap();
        let r = convexity_check(
            &f,
            ConvexityParams {
                c_w: 1.0,
                delta_max: 1.0,
            },
            20,
            0,
        )
        .unwrap();
        assert_eq!(r.passed + r.rejected, 20);
        assert!(r.empirical_c_w <= 1.0 + 1e-9);
    }
}
