//! Dyadic cubes, stopping-time decompositions, partitions of unity, gluing
//! and Whitney-type extension with nonnegativity-preserving witnesses.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::Serialize;

use crate::basis::{weak_basis_at, BasisQuery};
use crate::field::ShapeField;
use crate::jet::{dist, AnalyticFn, Jet, WhitneyField};
use crate::multi_index::{set_compare, IndexSet, JetSpace};
use crate::nonneg::{dyadic_coefficients, nonneg_member, Decision, Flavor, K_DYADIC};
use crate::Error;

/// `Π [2^k i_ν, 2^k (i_ν + 1))`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DyadicCube {
    pub level: i32,
    pub corner: Vec<i64>,
}

impl DyadicCube {
    pub fn containing(x: &[f64], level: i32) -> DyadicCube {
        let s = 2f64.powi(level);
        DyadicCube {
            level,
            corner: x.iter().map(|v| (v / s).floor() as i64).collect(),
        }
    }

    pub fn side(&self) -> f64 {
        2f64.powi(self.level)
    }

    pub fn n(&self) -> usize {
        self.corner.len()
    }

    pub fn center(&self) -> Vec<f64> {
        let s = self.side();
        self.corner.iter().map(|&i| (i as f64 + 0.5) * s).collect()
    }

    pub fn parent(&self) -> DyadicCube {
        DyadicCube {
            level: self.level + 1,
            corner: self.corner.iter().map(|i| i.div_euclid(2)).collect(),
        }
    }

    pub fn children(&self) -> Vec<DyadicCube> {
        let n = self.n();
        (0..1usize << n)
            .map(|mask| DyadicCube {
                level: self.level - 1,
                corner: (0..n)
                    .map(|k| 2 * self.corner[k] + ((mask >> k) & 1) as i64)
                    .collect(),
            })
            .collect()
    }

    /// Closed bounds of the dilate `aQ`.
    pub fn dilate(&self, a: f64) -> (Vec<f64>, Vec<f64>) {
        let c = self.center();
        let h = 0.5 * a * self.side();
        (c.iter().map(|v| v - h).collect(), c.iter().map(|v| v + h).collect())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let s = self.side();
        x.iter()
            .zip(&self.corner)
            .all(|(v, &i)| *v >= i as f64 * s && *v < (i + 1) as f64 * s)
    }

    pub fn dilate_contains(&self, a: f64, x: &[f64]) -> bool {
        let (lo, hi) = self.dilate(a);
        x.iter().enumerate().all(|(k, v)| *v >= lo[k] && *v <= hi[k])
    }

    /// `aQ ⊆ bQ′`.
    pub fn dilate_within(&self, a: f64, other: &DyadicCube, b: f64) -> bool {
        let (lo, hi) = self.dilate(a);
        let (lo2, hi2) = other.dilate(b);
        (0..self.n()).all(|k| lo[k] >= lo2[k] && hi[k] <= hi2[k])
    }

    /// `aQ ∩ aQ′ ≠ ∅` (closed dilates).
    pub fn dilates_meet(&self, other: &DyadicCube, a: f64) -> bool {
        let (lo, hi) = self.dilate(a);
        let (lo2, hi2) = other.dilate(a);
        (0..self.n()).all(|k| lo[k] <= hi2[k] && lo2[k] <= hi[k])
    }

    /// Whether `self` is `other` or one of its descendants.
    pub fn within(&self, other: &DyadicCube) -> bool {
        if self.level > other.level {
            return false;
        }
        let sh = (other.level - self.level) as u32;
        self.corner
            .iter()
            .zip(&other.corner)
            .all(|(a, b)| a.div_euclid(1i64 << sh.min(62)) == *b)
    }

    pub fn volume(&self) -> f64 {
        self.side().powi(self.n() as i32)
    }
}

/// Stopping predicate for the decomposition.
pub trait OkPredicate: Sync {
    fn ok(&self, q: &DyadicCube) -> Result<bool, Error>;
}

/// `#(E ∩ 5Q) ≤ 1` and `δ_Q ≤ 1`.
pub struct SimpleOk {
    pub points: Vec<Vec<f64>>,
}

impl SimpleOk {
    pub fn count_in(&self, q: &DyadicCube, a: f64) -> usize {
        self.points.iter().filter(|x| q.dilate_contains(a, x)).count()
    }
}

impl OkPredicate for SimpleOk {
    fn ok(&self, q: &DyadicCube) -> Result<bool, Error> {
        Ok(q.level <= 0 && self.count_in(q, 5.0) <= 1)
    }
}

/// Region covered by a decomposition: a set of same-level root cubes.
#[derive(Clone, Debug, Serialize)]
pub struct Region {
    pub roots: Vec<DyadicCube>,
}

impl Region {
    /// Unit cubes covering the bounding box of `points` inflated by `pad`.
    pub fn around(points: &[Vec<f64>], pad: f64) -> Region {
        let n = points[0].len();
        let lo: Vec<i64> = (0..n)
            .map(|k| (points.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min) - pad).floor() as i64)
            .collect();
        let hi: Vec<i64> = (0..n)
            .map(|k| (points.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max) + pad).ceil() as i64)
            .collect();
        Region {
            roots: lattice(&lo, &hi)
                .into_iter()
                .map(|corner| DyadicCube { level: 0, corner })
                .collect(),
        }
    }

    /// `q0` and its same-level neighbours.
    pub fn neighbourhood(q0: &DyadicCube) -> Region {
        let lo: Vec<i64> = q0.corner.iter().map(|i| i - 1).collect();
        let hi: Vec<i64> = q0.corner.iter().map(|i| i + 2).collect();
        Region {
            roots: lattice(&lo, &hi)
                .into_iter()
                .map(|corner| DyadicCube {
                    level: q0.level,
                    corner,
                })
                .collect(),
        }
    }

    pub fn volume(&self) -> f64 {
        self.roots.iter().map(DyadicCube::volume).sum()
    }

    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.roots[0].n();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for q in &self.roots {
            let (a, b) = q.dilate(1.0);
            for k in 0..n {
                lo[k] = lo[k].min(a[k]);
                hi[k] = hi[k].max(b[k]);
            }
        }
        (lo, hi)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.roots.iter().any(|q| q.contains(x))
    }
}

/// Integer lattice points in the box `[lo, hi)`.
fn lattice(lo: &[i64], hi: &[i64]) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for k in 0..lo.len() {
        let mut next = Vec::new();
        for p in &out {
            for v in lo[k]..hi[k] {
                let mut q = p.clone();
                q.push(v);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum CubeType {
    /// `E ∩ 5Q = {x_Q}`.
    Type1 { point: usize },
    /// `E ∩ 5Q = ∅`, `δ_Q < 1`; `x_Q ∈ E ∩ 5Q⁺`.
    Type2 { point: usize },
    /// `E ∩ 5Q = ∅`, `δ_Q = 1`.
    Type3,
    Unclassified,
}

#[derive(Clone, Debug, Serialize)]
pub struct Leaf {
    pub cube: DyadicCube,
    pub kind: CubeType,
}

#[derive(Clone, Debug, Serialize)]
pub struct CzTree {
    pub region: Region,
    pub leaves: Vec<Leaf>,
}

/// Maximal OK cubes below the roots, found by top-down splitting.
pub fn cz_decompose(region: &Region, ok: &dyn OkPredicate, max_depth: u32) -> Result<CzTree, Error> {
    let mut leaves = Vec::new();
    let mut stack: Vec<(DyadicCube, u32)> = region.roots.iter().rev().map(|q| (q.clone(), 0)).collect();
    while let Some((q, depth)) = stack.pop() {
        if ok.ok(&q)? {
            // Inclusion monotonicity spot check: the children of an OK cube are OK.
            for c in q.children() {
                if !ok.ok(&c)? {
                    return Err(Error::Precondition(format!(
                        "OK predicate is not inclusion-monotone at cube {:?}",
                        c
                    )));
                }
            }
            leaves.push(Leaf {
                cube: q,
                kind: CubeType::Unclassified,
            });
            continue;
        }
        if depth >= max_depth {
            return Err(Error::Guard(format!("decomposition deeper than {max_depth} levels")));
        }
        for c in q.children().into_iter().rev() {
            stack.push((c, depth + 1));
        }
    }
    Ok(CzTree {
        region: region.clone(),
        leaves,
    })
}

/// Independent check of a decomposition: each leaf is the largest OK cube
/// containing its centre (bottom-up point query), the leaves tile the region
/// and touching leaves satisfy the size ratio bound.
#[derive(Clone, Debug, Serialize)]
pub struct TreeCheck {
    pub leaves: usize,
    pub matches_oracle: bool,
    pub volume_residual: f64,
    pub disjoint: bool,
    pub good_geometry: bool,
    pub worst_neighbour_ratio: f64,
}

impl TreeCheck {
    pub fn passed(&self) -> bool {
        self.matches_oracle && self.disjoint && self.good_geometry && self.volume_residual <= 1e-12
    }
}

/// Largest OK cube containing `x` among descendants of the region roots.
pub fn maximal_ok_cube(region: &Region, ok: &dyn OkPredicate, x: &[f64], max_depth: u32) -> Result<Option<DyadicCube>, Error> {
    let Some(root) = region.roots.iter().find(|q| q.contains(x)) else {
        return Ok(None);
    };
    for d in 0..=max_depth as i32 {
        let q = DyadicCube::containing(x, root.level - d);
        if ok.ok(&q)? {
            return Ok(Some(q));
        }
    }
    Ok(None)
}

pub fn check_tree(tree: &CzTree, ok: &dyn OkPredicate, max_depth: u32) -> Result<TreeCheck, Error> {
    let mut matches = true;
    for leaf in &tree.leaves {
        let c = leaf.cube.center();
        if maximal_ok_cube(&tree.region, ok, &c, max_depth)?.as_ref() != Some(&leaf.cube) {
            matches = false;
        }
    }
    let vol: f64 = tree.leaves.iter().map(|l| l.cube.volume()).sum();
    let total = tree.region.volume();
    let mut disjoint = true;
    let mut good = true;
    let mut worst = 1.0f64;
    for (i, a) in tree.leaves.iter().enumerate() {
        for b in &tree.leaves[i + 1..] {
            if a.cube.within(&b.cube) || b.cube.within(&a.cube) {
                disjoint = false;
            }
            if a.cube.dilates_meet(&b.cube, 65.0 / 64.0) {
                let r = 2f64.powi((a.cube.level - b.cube.level).abs());
                worst = worst.max(r);
                if r > 2.0 {
                    good = false;
                }
            }
        }
    }
    Ok(TreeCheck {
        leaves: tree.leaves.len(),
        matches_oracle: matches,
        volume_residual: (vol - total).abs() / total,
        disjoint,
        good_geometry: good,
        worst_neighbour_ratio: worst,
    })
}

/// Labels leaves of a simple-predicate tree with their types.
pub fn classify(tree: &mut CzTree, points: &[Vec<f64>]) {
    for leaf in &mut tree.leaves {
        let q = &leaf.cube;
        let inside: Vec<usize> = (0..points.len()).filter(|&i| q.dilate_contains(5.0, &points[i])).collect();
        leaf.kind = if let Some(&i) = inside.first() {
            CubeType::Type1 { point: i }
        } else if q.level < 0 {
            let p = q.parent();
            let c = q.center();
            let near = (0..points.len())
                .filter(|&i| p.dilate_contains(5.0, &points[i]))
                .min_by(|&a, &b| dist(&points[a], &c).total_cmp(&dist(&points[b], &c)));
            match near {
                Some(i) => CubeType::Type2 { point: i },
                None => CubeType::Type3,
            }
        } else {
            CubeType::Type3
        };
    }
}

/// Parameters of the stopping predicate built from basis data.
#[derive(Clone, Debug)]
pub struct PaperOkParams {
    pub epsilon: f64,
    pub a: f64,
    pub m0: f64,
    pub p0: Jet,
    pub x0: Vec<f64>,
    pub q0: DyadicCube,
    pub set: IndexSet,
}

/// Certificate found for an OK cube with two or more points in `5Q`.
#[derive(Clone, Debug, Serialize)]
pub struct OkCertificate {
    pub cube: DyadicCube,
    pub hat_set: Vec<usize>,
    pub jets: Vec<(usize, Vec<f64>)>,
}

/// `5Q ⊆ 5Q₀` and either `#(E∩5Q) ≤ 1` or some `Â < 𝒜` admits, at every
/// `y ∈ E∩5Q`, a jet with a weak basis, the bound at `x₀` and agreement on `𝒜`.
/// The `Â` search is an LP per candidate, exact for polytopal fields and an
/// outer approximation for nonnegativity fields.
pub struct PaperOk<'a> {
    pub field: &'a ShapeField,
    pub params: PaperOkParams,
    pub cache: Mutex<HashMap<DyadicCube, Option<OkCertificate>>>,
    pub max_candidates: usize,
}

impl<'a> PaperOk<'a> {
    pub fn new(field: &'a ShapeField, params: PaperOkParams) -> Self {
        PaperOk {
            field,
            params,
            cache: Mutex::new(HashMap::new()),
            max_candidates: 1 << 12,
        }
    }

    /// All index sets strictly after `𝒜` in the set order.
    pub fn candidates(&self) -> Result<Vec<IndexSet>, Error> {
        let d = self.field.space.dim();
        if d >= 24 || (1usize << d) > self.max_candidates {
            return Err(Error::Guard(format!("2^{d} candidate index sets")));
        }
        let mut out: Vec<IndexSet> = (0..1u128 << d)
            .map(|bits| IndexSet { bits })
            .filter(|s| set_compare(s, &self.params.set) == std::cmp::Ordering::Greater)
            .collect();
        out.sort_by(set_compare);
        Ok(out)
    }

    fn certify(&self, q: &DyadicCube, pts: &[usize]) -> Result<Option<OkCertificate>, Error> {
        let p = &self.params;
        let delta = q.side() / p.epsilon;
        let far = p.q0.side() / p.epsilon;
        for hat in self.candidates()? {
            let mut jets = Vec::new();
            for &y in pts {
                let query = BasisQuery {
                    field: self.field,
                    point: y,
                    m0: p.m0,
                    delta,
                    c_b: p.a,
                    set: hat,
                    weak: true,
                    anchor: Some((&p.p0, p.a * p.m0, far, p.set)),
                    base: None,
                };
                match weak_basis_at(&query)? {
                    Some(found) => jets.push((y, found.base.derivs)),
                    None => break,
                }
            }
            if jets.len() == pts.len() {
                return Ok(Some(OkCertificate {
                    cube: q.clone(),
                    hat_set: hat.positions(),
                    jets,
                }));
            }
        }
        Ok(None)
    }
}

impl OkPredicate for PaperOk<'_> {
    fn ok(&self, q: &DyadicCube) -> Result<bool, Error> {
        if !q.dilate_within(5.0, &self.params.q0, 5.0) {
            return Ok(false);
        }
        let pts: Vec<usize> = (0..self.field.len())
            .filter(|&i| q.dilate_contains(5.0, &self.field.points[i]))
            .collect();
        if pts.len() <= 1 {
            return Ok(true);
        }
        if let Some(c) = self.cache.lock().expect("cache lock").get(q) {
            return Ok(c.is_some());
        }
        let cert = self.certify(q, &pts)?;
        let ok = cert.is_some();
        self.cache.lock().expect("cache lock").insert(q.clone(), cert);
        Ok(ok)
    }
}

/// Coefficients of the degree `2N+1` smoothstep: 0 at 0, 1 at 1, with
/// derivatives of order `1..=N` vanishing at both ends.
pub fn smoothstep_coeffs(order: u32) -> Vec<f64> {
    let nn = order as i64;
    let mut c = vec![0.0; (2 * nn + 2) as usize];
    for k in 0..=nn {
        let v = crate::jet::binomial((nn + k) as u32, k as u32)
            * crate::jet::binomial((2 * nn + 1) as u32, (nn - k) as u32)
            * if k % 2 == 0 { 1.0 } else { -1.0 };
        c[(nn + 1 + k) as usize] = v;
    }
    c
}

fn poly_derivs(c: &[f64], t: f64, k_max: usize) -> Vec<f64> {
    let mut cur = c.to_vec();
    let mut out = Vec::with_capacity(k_max + 1);
    for _ in 0..=k_max {
        out.push(cur.iter().rev().fold(0.0, |acc, a| acc * t + a));
        cur = cur.iter().enumerate().skip(1).map(|(j, a)| a * j as f64).collect();
        if cur.is_empty() {
            cur.push(0.0);
        }
    }
    out
}

/// One-dimensional cube profile: 1 on `|t| ≤ 1`, 0 for `|t| ≥ 65/64`.
#[derive(Clone, Debug)]
pub struct Profile {
    step: Vec<f64>,
    order: u32,
}

impl Profile {
    pub fn new(order: u32) -> Profile {
        Profile {
            step: smoothstep_coeffs(order),
            order,
        }
    }

    /// Derivatives of orders `0..=order` at `t`.
    pub fn derivs(&self, t: f64) -> Vec<f64> {
        let k = self.order as usize;
        let a = t.abs();
        let mut out = vec![0.0; k + 1];
        if a <= 1.0 {
            out[0] = 1.0;
            return out;
        }
        if a >= 65.0 / 64.0 {
            return out;
        }
        let d = poly_derivs(&self.step, (a - 1.0) * 64.0, k);
        for (j, v) in d.iter().enumerate() {
            let sign = if t < 0.0 && j % 2 == 1 { -1.0 } else { 1.0 };
            out[j] = sign * if j == 0 { 1.0 - v } else { -v * 64f64.powi(j as i32) };
        }
        out
    }
}

/// `θ_Q = ψ_Q / Σ ψ` (or `/ (Σ ψ²)^{1/2}` when squared), `ψ_Q` the tensor
/// profile scaled to `Q`.
pub struct PartitionOfUnity {
    pub cubes: Vec<DyadicCube>,
    pub squared: bool,
    pub space: Arc<JetSpace>,
    profile: Profile,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
}

impl PartitionOfUnity {
    pub fn build(tree: &CzTree, degree: u32, squared: bool) -> PartitionOfUnity {
        let cubes: Vec<DyadicCube> = tree.leaves.iter().map(|l| l.cube.clone()).collect();
        let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, q) in cubes.iter().enumerate() {
            let (lo, hi) = q.dilate(65.0 / 64.0);
            let a: Vec<i64> = lo.iter().map(|v| v.floor() as i64).collect();
            let b: Vec<i64> = hi.iter().map(|v| v.floor() as i64 + 1).collect();
            for cell in lattice(&a, &b) {
                buckets.entry(cell).or_default().push(i);
            }
        }
        let n = cubes[0].n();
        PartitionOfUnity {
            cubes,
            squared,
            space: JetSpace::get(n, degree),
            profile: Profile::new(degree),
            buckets,
        }
    }

    /// Cubes whose `(65/64)`-dilate contains `z`.
    pub fn active(&self, z: &[f64]) -> Vec<usize> {
        let cell: Vec<i64> = z.iter().map(|v| v.floor() as i64).collect();
        self.buckets
            .get(&cell)
            .map(|v| {
                v.iter()
                    .copied()
                    .filter(|&i| self.cubes[i].dilate_contains(65.0 / 64.0, z))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Jet of `ψ_Q` at `z`.
    pub fn psi(&self, i: usize, z: &[f64]) -> Jet {
        let q = &self.cubes[i];
        let c = q.center();
        let h = 0.5 * q.side();
        let per_axis: Vec<Vec<f64>> = (0..z.len()).map(|k| self.profile.derivs((z[k] - c[k]) / h)).collect();
        let derivs = self
            .space
            .indices
            .iter()
            .map(|a| {
                a.0.iter()
                    .enumerate()
                    .map(|(k, &e)| per_axis[k][e as usize] / h.powi(e as i32))
                    .product()
            })
            .collect();
        Jet::from_derivs(self.space.clone(), z, derivs)
    }

    /// Jets of the nonzero `θ_Q` at `z`.
    pub fn theta(&self, z: &[f64]) -> Result<Vec<(usize, Jet)>, Error> {
        let act = self.active(z);
        if act.is_empty() {
            return Ok(Vec::new());
        }
        let psis: Vec<(usize, Jet)> = act.into_iter().map(|i| (i, self.psi(i, z))).collect();
        let mut total = Jet::zero(self.space.clone(), z);
        for (_, p) in &psis {
            total = if self.squared {
                total.add(&p.multiply(p)?)?
            } else {
                total.add(p)?
            };
        }
        if total.value() <= 0.0 {
            return Ok(Vec::new());
        }
        let norm = if self.squared {
            total.compose(&AnalyticFn::Pow(-0.5))?
        } else {
            total.recip()?
        };
        psis.into_iter()
            .filter(|(_, p)| p.value() != 0.0 || p.max_abs() != 0.0)
            .map(|(i, p)| Ok((i, p.multiply(&norm)?)))
            .collect()
    }

    /// `|Σθ − 1|` (or `|Σθ² − 1|`) at `z`; zero-sum outside the support.
    pub fn residual(&self, z: &[f64]) -> Result<f64, Error> {
        let th = self.theta(z)?;
        if th.is_empty() {
            return Ok(f64::NAN);
        }
        let s: f64 = th
            .iter()
            .map(|(_, t)| if self.squared { t.value() * t.value() } else { t.value() })
            .sum();
        Ok((s - 1.0).abs())
    }

    /// `max |∂^β θ_Q| δ_Q^{|β|}` over the given samples.
    pub fn derivative_constant(&self, samples: &[Vec<f64>]) -> Result<f64, Error> {
        let mut best = 0.0f64;
        for z in samples {
            for (i, t) in self.theta(z)? {
                let s = self.cubes[i].side();
                for (a, v) in self.space.indices.iter().zip(&t.derivs) {
                    best = best.max(v.abs() * s.powi(a.order() as i32));
                }
            }
        }
        Ok(best)
    }
}

/// Regular grid with `per_axis` points on `[lo, hi]`.
pub fn grid(lo: &[f64], hi: &[f64], per_axis: usize) -> Vec<Vec<f64>> {
    let per = per_axis.max(2);
    let idx = lattice(&vec![0; lo.len()], &vec![per as i64; lo.len()]);
    idx.into_iter()
        .map(|i| {
            i.iter()
                .enumerate()
                .map(|(k, &t)| lo[k] + (hi[k] - lo[k]) * t as f64 / (per - 1) as f64)
                .collect()
        })
        .collect()
}

/// A smooth function known through its jets.
pub trait JetFunction: Send + Sync {
    /// Jet at `z` in the given space.
    fn jet(&self, space: &Arc<JetSpace>, z: &[f64]) -> Result<Jet, Error>;
}

/// A polynomial given by a jet.
pub struct PolyFn(pub Jet);

impl JetFunction for PolyFn {
    fn jet(&self, space: &Arc<JetSpace>, z: &[f64]) -> Result<Jet, Error> {
        Ok(self.0.transport(z).with_degree(space.degree))
    }
}

/// Local data on a leaf.
#[derive(Clone)]
pub enum Payload {
    Zero,
    Func(Arc<dyn JetFunction>),
}

/// `F = Σ θ_Q F_Q` (or `Σ θ_Q² F_Q` for a squared partition).
pub struct Glued {
    pub pou: PartitionOfUnity,
    pub payloads: Vec<Payload>,
}

impl Glued {
    pub fn new(pou: PartitionOfUnity, payloads: Vec<Payload>) -> Result<Glued, Error> {
        if payloads.len() != pou.cubes.len() {
            return Err(Error::Input("one payload per leaf required".into()));
        }
        Ok(Glued { pou, payloads })
    }

    /// Jet of `F` at `z` (degree of the partition); zero off the region.
    pub fn jet(&self, z: &[f64]) -> Result<Jet, Error> {
        let space = self.pou.space.clone();
        let mut out = Jet::zero(space.clone(), z);
        for (i, th) in self.pou.theta(z)? {
            let w = if self.pou.squared { th.multiply(&th)? } else { th };
            if let Payload::Func(f) = &self.payloads[i] {
                out = out.add(&w.multiply(&f.jet(&space, z)?)?)?;
            }
        }
        Ok(out)
    }

    pub fn value(&self, z: &[f64]) -> Result<f64, Error> {
        Ok(self.jet(z)?.value())
    }
}

/// Radial profile `h(|w|²)` equal to 1 below `a` and 0 above `b`.
fn radial_step(r2: &Jet, a: f64, b: f64, step: &[f64], rising: bool) -> Result<Jet, Error> {
    let t = (r2.value() - a) / (b - a);
    let space = r2.space.clone();
    let z = r2.basepoint.clone();
    let s = if t <= 0.0 {
        Jet::zero(space, &z)
    } else if t >= 1.0 {
        Jet::constant(space, &z, 1.0)
    } else {
        r2.add_constant(-a).scale(1.0 / (b - a)).compose(&AnalyticFn::Poly(step.to_vec()))?
    };
    Ok(if rising { s } else { s.scale(-1.0).add_constant(1.0) })
}

fn squared_distance(space: &Arc<JetSpace>, z: &[f64], x: &[f64]) -> Result<Jet, Error> {
    let mut r2 = Jet::zero(space.clone(), z);
    for k in 0..z.len() {
        let w = Jet::coordinate(space.clone(), z, k).add_constant(-x[k]);
        r2 = r2.add(&w.multiply(&w)?)?;
    }
    Ok(r2)
}

/// Globally nonnegative function with prescribed jet at its basepoint.
pub struct NonnegWitness {
    pub jet: Jet,
    pub scale: f64,
    pub m: u32,
    pub flavor: Flavor,
    /// Dyadic correction coefficients (`C^m` flavor).
    pub b: Vec<f64>,
    step: Vec<f64>,
}

impl NonnegWitness {
    /// Requires a certified membership of `P` at scale `M`.
    pub fn new(p: &Jet, scale: f64, m: u32, flavor: Flavor) -> Result<NonnegWitness, Error> {
        let cert = nonneg_member(p, scale, m, flavor)?;
        if cert.decision != Decision::Member {
            return Err(Error::Precondition(format!(
                "jet is not a certified nonnegative member at scale {scale} ({:?})",
                cert.decision
            )));
        }
        let b = match flavor {
            Flavor::Cm => dyadic_coefficients(p, K_DYADIC)?,
            Flavor::Cm11 => Vec::new(),
        };
        Ok(NonnegWitness {
            jet: p.clone(),
            scale,
            m,
            flavor,
            b,
            step: smoothstep_coeffs(m + 1),
        })
    }

    /// Radius outside which the witness vanishes.
    pub fn support_radius(&self) -> f64 {
        match self.flavor {
            Flavor::Cm11 => 1.0,
            Flavor::Cm => 0.5,
        }
    }

    /// `b_{K}·sup φ`, the size of the first omitted correction term.
    pub fn truncation_bound(&self) -> f64 {
        self.b.last().copied().unwrap_or(0.0)
    }
}

impl JetFunction for NonnegWitness {
    fn jet(&self, space: &Arc<JetSpace>, z: &[f64]) -> Result<Jet, Error> {
        let x = &self.jet.basepoint;
        let r2 = squared_distance(space, z, x)?;
        let rs = self.support_radius();
        if r2.value() >= rs * rs {
            return Ok(Jet::zero(space.clone(), z));
        }
        let p = self.jet.transport(z).with_degree(space.degree);
        match self.flavor {
            Flavor::Cm11 => {
                let chi = radial_step(&r2, 0.25, 1.0, &self.step, false)?;
                let reg = if r2.value() == 0.0 {
                    Jet::zero(space.clone(), z)
                } else if self.m % 2 == 0 {
                    let mut acc = Jet::constant(space.clone(), z, 1.0);
                    for _ in 0..self.m / 2 {
                        acc = acc.multiply(&r2)?;
                    }
                    acc
                } else {
                    r2.compose(&AnalyticFn::Pow(self.m as f64 / 2.0))?
                };
                chi.multiply(&p.add(&reg.scale(self.scale))?)
            }
            Flavor::Cm => {
                let chi = radial_step(&r2, 1.0 / 16.0, 0.25, &self.step, false)?;
                let mut inner = p;
                for (k, bk) in self.b.iter().enumerate() {
                    if *bk == 0.0 {
                        continue;
                    }
                    let s = 4f64.powi(k as i32);
                    let scaled = r2.scale(s);
                    let v = scaled.value();
                    if v <= 1.0 / 16.0 || v >= 16.0 {
                        continue;
                    }
                    let up = radial_step(&scaled, 1.0 / 16.0, 0.25, &self.step, true)?;
                    let down = radial_step(&scaled, 4.0, 16.0, &self.step, false)?;
                    inner = inner.add(&up.multiply(&down)?.scale(*bk))?;
                }
                chi.multiply(&inner)
            }
        }
    }
}

/// How local payloads are chosen in [`whitney_extend`].
#[derive(Clone, Copy, Debug)]
pub enum ExtendMode {
    /// Type 1/2 cubes carry the polynomial `P^{x_Q}`.
    Plain,
    /// Type 1/2 cubes carry a certified nonnegative witness of `P^{x_Q}` at scale `M`.
    Nonneg { flavor: Flavor, scale: f64 },
}

pub struct Extension {
    pub tree: CzTree,
    pub glued: Glued,
    pub field: WhitneyField,
    pub m: u32,
}

/// Region padding around the data used by [`whitney_extend`].
pub const REGION_PAD: f64 = 3.0;
const MAX_DEPTH: u32 = 48;

/// Extension of a Whitney field (jets of degree `m−1`) through the simple
/// stopping predicate, cube types and a partition of unity of degree `m`.
pub fn whitney_extend(w: &WhitneyField, mode: ExtendMode) -> Result<Extension, Error> {
    let first = w.jets.first().ok_or_else(|| Error::Input("empty Whitney field".into()))?;
    let m = first.degree() + 1;
    let points: Vec<Vec<f64>> = w.jets.iter().map(|j| j.basepoint.clone()).collect();
    let semi = w.seminorm();
    if !semi.is_finite() {
        return Err(Error::Domain("Whitney field has infinite seminorm".into()));
    }
    let region = Region::around(&points, REGION_PAD);
    let ok = SimpleOk { points: points.clone() };
    let mut tree = cz_decompose(&region, &ok, MAX_DEPTH)?;
    classify(&mut tree, &points);
    let mut cache: HashMap<usize, Payload> = HashMap::new();
    let mut payloads = Vec::with_capacity(tree.leaves.len());
    for leaf in &tree.leaves {
        let idx = match leaf.kind {
            CubeType::Type1 { point } | CubeType::Type2 { point } => point,
            _ => {
                payloads.push(Payload::Zero);
                continue;
            }
        };
        if let Some(p) = cache.get(&idx) {
            payloads.push(p.clone());
            continue;
        }
        let p = match mode {
            ExtendMode::Plain => Payload::Func(Arc::new(PolyFn(w.jets[idx].clone()))),
            ExtendMode::Nonneg { flavor, scale } => {
                Payload::Func(Arc::new(NonnegWitness::new(&w.jets[idx], scale, m, flavor)?))
            }
        };
        cache.insert(idx, p.clone());
        payloads.push(p);
    }
    let pou = PartitionOfUnity::build(&tree, m, false);
    Ok(Extension {
        tree,
        glued: Glued::new(pou, payloads)?,
        field: w.clone(),
        m,
    })
}

/// Grid measurements of an extension.
#[derive(Clone, Debug, Serialize)]
pub struct ExtensionStats {
    pub samples: usize,
    pub min_value: f64,
    /// `max |∂^β F|` over `|β| ≤ m−1`.
    pub sup_jet: f64,
    /// `max |∂^β F|` over `|β| = m` (closed-form, where defined).
    pub sup_top: f64,
    pub pou_residual: f64,
}

impl Extension {
    pub fn jet(&self, z: &[f64]) -> Result<Jet, Error> {
        self.glued.jet(z)
    }

    /// Largest deviation of `J_x F` (degree `m−1`) from the data jets.
    pub fn data_residual(&self) -> Result<f64, Error> {
        let mut worst = 0.0f64;
        for p in &self.field.jets {
            let j = self.jet(&p.basepoint)?.with_degree(self.m - 1);
            worst = worst.max(j.max_diff(p));
        }
        Ok(worst)
    }

    pub fn default_samples(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let (lo, hi) = self.tree.region.bounds();
        grid(&lo, &hi, per_axis)
    }

    pub fn stats(&self, samples: &[Vec<f64>]) -> Result<ExtensionStats, Error> {
        let res: Result<Vec<(f64, f64, f64, f64)>, Error> = samples
            .par_iter()
            .map(|z| {
                let j = self.jet(z)?;
                let mut low = 0.0f64;
                let mut top = 0.0f64;
                for (a, v) in j.space.indices.iter().zip(&j.derivs) {
                    if a.order() < self.m {
                        low = low.max(v.abs());
                    } else {
                        top = top.max(v.abs());
                    }
                }
                let r = if self.glued.pou.tree_covers(z) {
                    self.glued.pou.residual(z)?
                } else {
                    0.0
                };
                Ok((j.value(), low, top, r))
            })
            .collect();
        let res = res?;
        Ok(ExtensionStats {
            samples: samples.len(),
            min_value: res.iter().map(|r| r.0).fold(f64::INFINITY, f64::min),
            sup_jet: res.iter().map(|r| r.1).fold(0.0, f64::max),
            sup_top: res.iter().map(|r| r.2).fold(0.0, f64::max),
            pou_residual: res.iter().map(|r| r.3).filter(|v| v.is_finite()).fold(0.0, f64::max),
        })
    }
}

impl PartitionOfUnity {
    /// Whether `z` lies in some cube (not just a dilate).
    pub fn tree_covers(&self, z: &[f64]) -> bool {
        self.active(z).iter().any(|&i| self.cubes[i].dilate_contains(1.0, z))
    }
}

/// CSV export: `x_1..x_n, F, d_(β)` for the requested `β`.
pub fn grid_csv(ext: &Extension, samples: &[Vec<f64>], betas: &[crate::multi_index::MultiIndex]) -> Result<String, Error> {
    let n = ext.glued.pou.space.n;
    let mut out = String::new();
    let mut header: Vec<String> = (1..=n).map(|k| format!("x_{k}")).collect();
    header.push("F".into());
    for b in betas {
        header.push(format!("d_{}", b.key().replace(',', "_")));
    }
    out.push_str(&header.join(","));
    out.push('\n');
    let rows: Result<Vec<String>, Error> = samples
        .par_iter()
        .map(|z| {
            let j = ext.jet(z)?;
            let mut cols: Vec<String> = z.iter().map(|v| format!("{v:.12e}")).collect();
            cols.push(format!("{:.12e}", j.value()));
            for b in betas {
                cols.push(format!("{:.12e}", j.deriv(b)));
            }
            Ok(cols.join(","))
        })
        .collect();
    for r in rows? {
        let _ = writeln!(out, "{r}");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_geometry() {
        let q = DyadicCube::containing(&[0.3, -0.2], -1);
        assert_eq!(q.corner, vec![0, -1]);
        assert_eq!(q.parent().corner, vec![0, -1]);
        assert_eq!(q.children().len(), 4);
        assert!(q.children()[0].within(&q));
        assert!(q.dilate_contains(5.0, &[1.2, 0.0]));
    }

    #[test]
    fn empty_set_gives_unit_cubes() {
        let ok = SimpleOk { points: vec![] };
        let region = Region::around(&[vec![0.0, 0.0]], 1.0);
        let t = cz_decompose(&region, &ok, 10).unwrap();
        assert!(t.leaves.iter().all(|l| l.cube.level == 0));
        assert_eq!(t.leaves.len(), 4);
    }

    #[test]
    fn two_points_match_oracle() {
        let pts = vec![vec![0.1], vec![0.9]];
        let ok = SimpleOk { points: pts.clone() };
        let region = Region::around(&pts, 3.0);
        let t = cz_decompose(&region, &ok, 30).unwrap();
        let c = check_tree(&t, &ok, 30).unwrap();
        assert!(c.passed(), "{c:?}");
        assert!(t.leaves.iter().any(|l| l.cube.level < -2));
    }

    #[test]
    fn smoothstep_profile() {
        let c = smoothstep_coeffs(2);
        let d0 = poly_derivs(&c, 0.0, 2);
        let d1 = poly_derivs(&c, 1.0, 2);
        assert_eq!(d0, vec![0.0, 0.0, 0.0]);
        assert!((d1[0] - 1.0).abs() < 1e-12 && d1[1].abs() < 1e-9 && d1[2].abs() < 1e-9);
        let p = Profile::new(2);
        assert_eq!(p.derivs(0.5)[0], 1.0);
        assert_eq!(p.derivs(1.1)[0], 0.0);
    }

    #[test]
    fn single_leaf_partition() {
        let t = CzTree {
            region: Region {
                roots: vec![DyadicCube {
                    level: 0,
                    corner: vec![0],
                }],
            },
            leaves: vec![Leaf {
                cube: DyadicCube {
                    level: 0,
                    corner: vec![0],
                },
                kind: CubeType::Type3,
            }],
        };
        let pou = PartitionOfUnity::build(&t, 2, false);
        let th = pou.theta(&[0.4]).unwrap();
        assert_eq!(th.len(), 1);
        assert!((th[0].1.value() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cm11_witness() {
        let sp = JetSpace::get(1, 1);
        let p = Jet::from_derivs(sp, &[0.0], vec![0.25, 1.0]);
        let w = NonnegWitness::new(&p, 1.0, 2, Flavor::Cm11).unwrap();
        let s2 = JetSpace::get(1, 2);
        let j = w.jet(&s2, &[0.0]).unwrap();
        assert!((j.value() - 0.25).abs() < 1e-15 && (j.derivs[1] - 1.0).abs() < 1e-15);
        for i in 0..=400 {
            let z = -2.0 + i as f64 * 0.01;
            assert!(w.jet(&s2, &[z]).unwrap().value() >= -1e-15);
        }
    }
}
