//! Linear systems over Whitney fields: jets at several points, Taylor
//! compatibility rows, membership rows affine in a scale `M`, and a cutting
//! plane loop for nonnegativity blocks.

use crate::jet::Jet;
use crate::lp::{solve_auto, solve_fast, Lp, LpResult};
use crate::multi_index::JetSpace;
use crate::nonneg::{nonneg_member, Decision, Flavor};
use crate::scalar::Scalar;
use crate::Error;

/// `a·z ≤ b0 + M·b1` (or `=` when `eq`), with `a` sparse.
#[derive(Clone, Debug)]
pub struct SysRow<T> {
    pub a: Vec<(usize, T)>,
    pub b0: T,
    pub b1: T,
    pub eq: bool,
}

/// Requires the jet stored at `offset..offset+dim` (degree `m−1`, based at
/// `basepoint`) to satisfy `P(x+z) + M|z|^m ≥ 0` for all `z`.
#[derive(Clone, Debug)]
pub struct NonnegBlock {
    pub offset: usize,
    pub basepoint: Vec<f64>,
    pub m: u32,
    pub flavor: Flavor,
}

#[derive(Clone, Debug)]
pub enum Scale<T> {
    Fixed(T),
    /// `M` becomes a nonnegative variable and is minimised.
    Minimize,
}

#[derive(Clone, Debug)]
pub struct Solution<T> {
    pub z: Vec<T>,
    pub scale: T,
    /// False when a nonnegativity block is only satisfied on its cutting planes.
    pub certified: bool,
    pub cut_rounds: usize,
}

#[derive(Clone, Debug)]
pub enum Outcome<T> {
    Feasible(Solution<T>),
    Infeasible,
}

impl<T> Outcome<T> {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Outcome::Feasible(_))
    }

    pub fn solution(self) -> Option<Solution<T>> {
        match self {
            Outcome::Feasible(s) => Some(s),
            Outcome::Infeasible => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct System<T> {
    pub nvars: usize,
    pub rows: Vec<SysRow<T>>,
    pub nonneg: Vec<NonnegBlock>,
    pub fixed: Vec<Option<T>>,
    pub cut_rounds: usize,
}

impl<T: Scalar> Default for System<T> {
    fn default() -> Self {
        System::new()
    }
}

impl<T: Scalar> System<T> {
    pub fn new() -> Self {
        System {
            nvars: 0,
            rows: Vec::new(),
            nonneg: Vec::new(),
            fixed: Vec::new(),
            cut_rounds: 50,
        }
    }

    /// Allocates `k` fresh variables and returns the first index.
    pub fn add_vars(&mut self, k: usize) -> usize {
        let off = self.nvars;
        self.nvars += k;
        self.fixed.resize(self.nvars, None);
        off
    }

    pub fn add_le(&mut self, a: Vec<(usize, T)>, b0: T, b1: T) {
        self.rows.push(SysRow {
            a,
            b0,
            b1,
            eq: false,
        });
    }

    pub fn add_eq(&mut self, a: Vec<(usize, T)>, value: T) {
        self.rows.push(SysRow {
            a,
            b0: value,
            b1: T::zero(),
            eq: true,
        });
    }

    /// `|a·z − center| ≤ r0 + M·r1`.
    pub fn add_abs(&mut self, a: Vec<(usize, T)>, center: T, r0: T, r1: T) {
        let neg = a.iter().map(|(i, v)| (*i, v.neg())).collect();
        self.add_le(a, center.add(&r0), r1.clone());
        self.add_le(neg, r0.sub(&center), r1);
    }

    pub fn fix(&mut self, var: usize, value: T) {
        self.fixed[var] = Some(value);
    }

    pub fn fix_jet(&mut self, offset: usize, jet: &Jet) {
        for (k, v) in jet.derivs.iter().enumerate() {
            self.fix(offset + k, T::from_f64(*v));
        }
    }

    pub fn add_nonneg(&mut self, block: NonnegBlock) {
        self.nonneg.push(block);
    }

    /// Appends another system's variables, rows and blocks; returns the
    /// variable offset applied.
    pub fn append(&mut self, other: &System<T>) -> usize {
        let off = self.add_vars(other.nvars);
        for (k, f) in other.fixed.iter().enumerate() {
            if let Some(v) = f {
                self.fix(off + k, v.clone());
            }
        }
        for r in &other.rows {
            self.rows.push(SysRow {
                a: r.a.iter().map(|(i, v)| (i + off, v.clone())).collect(),
                b0: r.b0.clone(),
                b1: r.b1.clone(),
                eq: r.eq,
            });
        }
        for b in &other.nonneg {
            let mut b = b.clone();
            b.offset += off;
            self.nonneg.push(b);
        }
        off
    }

    pub fn solve(&self, scale: Scale<T>) -> Result<Outcome<T>, Error> {
        self.solve_with(scale, &[])
    }

    /// Solves with an optional linear objective (ignored when minimising `M`).
    pub fn solve_with(&self, scale: Scale<T>, objective: &[(usize, T)]) -> Result<Outcome<T>, Error> {
        let mut cuts: Vec<Vec<Vec<f64>>> = self.nonneg.iter().map(initial_cuts).collect();
        let mut round = 0usize;
        let mut last: Option<(Vec<T>, f64)> = None;
        loop {
            // Once a feasible iterate exists, a float run that is not
            // conclusive falls back on it instead of an exact re-solve.
            let fast = last.is_some() && matches!(scale, Scale::Minimize) && !T::EXACT;
            let lp_out = self.solve_linear(&scale, objective, &cuts, fast)?;
            let (z, m) = match (lp_out, last.take()) {
                (Some(v), _) => v,
                // Cuts are implied by the constraints, so a later infeasible
                // verdict in minimise mode is a float artefact.
                (None, Some((z, m))) if matches!(scale, Scale::Minimize) && !T::EXACT => {
                    return self.repair_scale(z, m, round);
                }
                (None, _) => return Ok(Outcome::Infeasible),
            };
            if self.nonneg.is_empty() {
                return Ok(Outcome::Feasible(Solution {
                    z,
                    scale: m,
                    certified: true,
                    cut_rounds: 0,
                }));
            }
            let m_f = m.to_f64();
            let mut all_ok = true;
            for (bi, b) in self.nonneg.iter().enumerate() {
                let jet = self.block_jet(b, &z);
                let cert = nonneg_member(&jet, m_f * (1.0 + 1e-12), b.m, b.flavor)?;
                if cert.decision != Decision::Member {
                    all_ok = false;
                    let all_fixed = (0..jet.derivs.len()).all(|k| self.fixed[b.offset + k].is_some());
                    if all_fixed && matches!(scale, Scale::Fixed(_)) {
                        return Ok(Outcome::Infeasible);
                    }
                    let zc = cert.min.argmin.clone();
                    if zc.iter().all(|v| v.is_finite()) && !cuts[bi].iter().any(|c| c == &zc) {
                        cuts[bi].push(zc);
                    }
                }
            }
            if all_ok {
                return Ok(Outcome::Feasible(Solution {
                    z,
                    scale: m,
                    certified: true,
                    cut_rounds: round,
                }));
            }
            last = Some((z.clone(), m_f));
            round += 1;
            if round >= self.cut_rounds {
                return match scale {
                    Scale::Minimize => self.repair_scale(z, m_f, round),
                    Scale::Fixed(_) => Ok(Outcome::Feasible(Solution {
                        z,
                        scale: m,
                        certified: false,
                        cut_rounds: round,
                    })),
                };
            }
        }
    }

    /// Whether the variable is pinned to zero, by fixing or by an equality row.
    fn value_is_zero(&self, var: usize) -> bool {
        if let Some(v) = &self.fixed[var] {
            return v.is_exact_zero();
        }
        // Sign of the coefficient on `var` in a one-variable row `c·z ≤ 0`.
        let sign = |r: &SysRow<T>| match r.a.as_slice() {
            [(i, c)] if *i == var && r.b0.is_exact_zero() && r.b1.is_exact_zero() => c.sign(0.0),
            _ => 0,
        };
        self.rows.iter().any(|r| r.eq && sign(r) != 0)
            || (self.rows.iter().any(|r| sign(r) > 0) && self.rows.iter().any(|r| sign(r) < 0))
    }

    fn block_jet(&self, b: &NonnegBlock, z: &[T]) -> Jet {
        let space = JetSpace::get(b.basepoint.len(), b.m - 1);
        let derivs = (0..space.dim()).map(|k| z[b.offset + k].to_f64()).collect();
        Jet::from_derivs(space, &b.basepoint, derivs)
    }

    /// Raises `M` until every nonnegativity block certifies; the remaining
    /// rows have `b1 ≥ 0` in every field built here, so they stay satisfied.
    fn repair_scale(&self, z: Vec<T>, m: f64, rounds: usize) -> Result<Outcome<T>, Error> {
        let mut need = m;
        for b in &self.nonneg {
            let jet = self.block_jet(b, &z);
            need = need.max(min_certified_scale(&jet, b.m, b.flavor, m)?);
        }
        if self.rows.iter().any(|r| r.b1.sign(0.0) < 0) {
            return Err(Error::Verification {
                stage: "cutting planes".into(),
                detail: "scale repair needs rows monotone in M".into(),
            });
        }
        Ok(Outcome::Feasible(Solution {
            z,
            scale: T::from_f64(need),
            certified: true,
            cut_rounds: rounds,
        }))
    }

    fn solve_linear(
        &self,
        scale: &Scale<T>,
        objective: &[(usize, T)],
        cuts: &[Vec<Vec<f64>>],
        fast: bool,
    ) -> Result<Option<(Vec<T>, T)>, Error> {
        let mut map = vec![usize::MAX; self.nvars];
        let mut nfree = 0;
        for (i, f) in self.fixed.iter().enumerate() {
            if f.is_none() {
                map[i] = nfree;
                nfree += 1;
            }
        }
        let minimize = matches!(scale, Scale::Minimize);
        let ncols = nfree + usize::from(minimize);
        let mut lp = Lp::new(ncols);
        if minimize {
            lp.nonneg[nfree] = true;
            lp.cost[nfree] = T::one();
        } else {
            for (i, c) in objective {
                if map[*i] != usize::MAX {
                    lp.cost[map[*i]] = lp.cost[map[*i]].add(c);
                }
            }
        }
        let mut emit = |a: &[(usize, T)], b0: &T, b1: &T, eq: bool| -> bool {
            let mut row = vec![T::zero(); ncols];
            let mut rhs = b0.clone();
            let mut mag = b0.to_f64().abs();
            let mut any = false;
            for (i, v) in a {
                match &self.fixed[*i] {
                    Some(val) => {
                        let t = v.mul(val);
                        mag += t.to_f64().abs();
                        rhs = rhs.sub(&t);
                    }
                    None => {
                        row[map[*i]] = row[map[*i]].add(v);
                        any = true;
                    }
                }
            }
            match scale {
                Scale::Fixed(m) => {
                    let t = b1.mul(m);
                    mag += t.to_f64().abs();
                    rhs = rhs.add(&t);
                }
                Scale::Minimize => {
                    if !b1.is_exact_zero() {
                        row[nfree] = b1.neg();
                        any = true;
                    }
                }
            }
            if !any {
                let tol = if T::EXACT { 0.0 } else { 1e-9 * (1.0 + mag) };
                return if eq {
                    rhs.sign(tol) == 0
                } else {
                    rhs.sign(tol) >= 0
                };
            }
            if eq {
                lp.add_eq(row, rhs);
            } else {
                lp.add_le(row, rhs);
            }
            true
        };
        for r in &self.rows {
            if !emit(&r.a, &r.b0, &r.b1, r.eq) {
                return Ok(None);
            }
        }
        for b in &self.nonneg {
            if !self.value_is_zero(b.offset) {
                continue;
            }
            // A zero of P(x+·) + M|·|^m at the basepoint forces the first
            // derivatives to vanish and the pure second ones to be ≥ 0.
            let space = JetSpace::get(b.basepoint.len(), b.m - 1);
            for (k, al) in space.indices.iter().enumerate() {
                let a = vec![(b.offset + k, T::one())];
                match (al.order(), al.0.iter().any(|e| *e == 2)) {
                    (1, _) => {
                        if !emit(&a, &T::zero(), &T::zero(), true) {
                            return Ok(None);
                        }
                    }
                    (2, true) => {
                        if !emit(&[(b.offset + k, T::one().neg())], &T::zero(), &T::zero(), false) {
                            return Ok(None);
                        }
                    }
                    _ => {}
                }
            }
        }
        for (b, pts) in self.nonneg.iter().zip(cuts) {
            let space = JetSpace::get(b.basepoint.len(), b.m - 1);
            for zc in pts {
                let a: Vec<(usize, T)> = space
                    .indices
                    .iter()
                    .enumerate()
                    .map(|(k, al)| (b.offset + k, T::from_f64(-al.monomial(zc) / al.factorial())))
                    .collect();
                let r = zc.iter().map(|v| v * v).sum::<f64>().sqrt().powi(b.m as i32);
                if !emit(&a, &T::zero(), &T::from_f64(r), false) {
                    return Ok(None);
                }
            }
        }
        let res = if fast {
            match solve_fast(&lp)? {
                Some(r) => r,
                None => return Ok(None),
            }
        } else {
            solve_auto(&lp)?
        };
        match res {
            LpResult::Optimal { x, .. } => {
                let mut z = Vec::with_capacity(self.nvars);
                for (i, f) in self.fixed.iter().enumerate() {
                    z.push(match f {
                        Some(v) => v.clone(),
                        None => x[map[i]].clone(),
                    });
                }
                let m = match scale {
                    Scale::Fixed(m) => m.clone(),
                    Scale::Minimize => x[nfree].clone(),
                };
                Ok(Some((z, m)))
            }
            LpResult::Infeasible => Ok(None),
            LpResult::Unbounded => Err(Error::Unbounded("objective unbounded on the system".into())),
        }
    }
}

fn initial_cuts(b: &NonnegBlock) -> Vec<Vec<f64>> {
    let n = b.basepoint.len();
    let radii = [0.125, 0.25, 0.5, 1.0, 2.0];
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    if n == 1 {
        dirs.push(vec![1.0]);
        dirs.push(vec![-1.0]);
    } else {
        for i in 0..n {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; n];
                e[i] = s;
                dirs.push(e);
            }
        }
        if n == 2 {
            let h = std::f64::consts::FRAC_1_SQRT_2;
            for (a, c) in [(h, h), (h, -h), (-h, h), (-h, -h)] {
                dirs.push(vec![a, c]);
            }
        }
    }
    let mut out = Vec::new();
    for d in &dirs {
        for r in radii {
            out.push(d.iter().map(|v| v * r).collect());
        }
    }
    out
}

/// Smallest `M ≥ lo` (to relative precision 1e−9) at which the jet certifies.
pub fn min_certified_scale(jet: &Jet, m: u32, flavor: Flavor, lo: f64) -> Result<f64, Error> {
    let ok = |s: f64| -> Result<bool, Error> {
        Ok(nonneg_member(jet, s, m, flavor)?.decision == Decision::Member)
    };
    if ok(lo)? {
        return Ok(lo);
    }
    let mut hi = lo.max(1e-12) * 2.0;
    let mut steps = 0;
    while !ok(hi)? {
        hi *= 2.0;
        steps += 1;
        if steps > 200 {
            return Err(Error::Verification {
                stage: "nonnegativity".into(),
                detail: "jet is not certifiable at any scale".into(),
            });
        }
    }
    let mut a = lo;
    while hi - a > 1e-9 * hi {
        let mid = 0.5 * (a + hi);
        if ok(mid)? {
            hi = mid;
        } else {
            a = mid;
        }
    }
    Ok(hi)
}

fn factorial_t<T: Scalar>(k: u32) -> T {
    T::from_f64(crate::multi_index::factorial(k))
}

/// `out[β][δ]`: derivative `β` at `to` equals `Σ_δ out[β][δ]·∂^δ P(from)`,
/// computed in the scalar type (exact for rationals).
pub fn transport_coeffs<T: Scalar>(space: &JetSpace, from: &[f64], to: &[f64]) -> Vec<Vec<T>> {
    let dz: Vec<T> = to
        .iter()
        .zip(from)
        .map(|(a, b)| T::from_f64(*a).sub(&T::from_f64(*b)))
        .collect();
    let mono: Vec<T> = space
        .indices
        .iter()
        .map(|g| {
            let mut v = T::one();
            let mut fact = T::one();
            for (e, d) in g.0.iter().zip(&dz) {
                for _ in 0..*e {
                    v = v.mul(d);
                }
                fact = fact.mul(&factorial_t::<T>(*e));
            }
            v.div(&fact)
        })
        .collect();
    let d = space.dim();
    let mut mat = vec![vec![T::zero(); d]; d];
    for &(b, bg, g) in &space.shifts {
        mat[b][bg] = mat[b][bg].add(&mono[g]);
    }
    mat
}

/// `|a − b|^p`; exact for `n = 1` and for even `p`, otherwise rounded in `f64`.
pub fn dist_pow<T: Scalar>(a: &[f64], b: &[f64], p: u32) -> T {
    let diffs: Vec<T> = a
        .iter()
        .zip(b)
        .map(|(x, y)| T::from_f64(*x).sub(&T::from_f64(*y)))
        .collect();
    let pow = |base: T, e: u32| {
        let mut v = T::one();
        for _ in 0..e {
            v = v.mul(&base);
        }
        v
    };
    if diffs.len() == 1 {
        return pow(diffs[0].abs(), p);
    }
    if p % 2 == 0 {
        let sq = diffs.iter().fold(T::zero(), |s, d| s.add(&d.mul(d)));
        return pow(sq, p / 2);
    }
    T::from_f64(crate::jet::dist(a, b).powi(p as i32))
}

/// Taylor compatibility between the jet at `x` (variables from `off_x`) and
/// the jet at `y` (from `off_y`):
/// `|∂^β(P^x − T_{y→x} P^y)(x)| ≤ factor · M · |x−y|^{m−|β|}`.
#[allow(clippy::too_many_arguments)]
pub fn add_taylor_rows<T: Scalar>(
    sys: &mut System<T>,
    space: &JetSpace,
    m: u32,
    x: &[f64],
    off_x: usize,
    y: &[f64],
    off_y: usize,
    factor: &T,
) {
    let mat = transport_coeffs::<T>(space, y, x);
    for (b, beta) in space.indices.iter().enumerate() {
        let mut a = vec![(off_x + b, T::one())];
        for (dl, c) in mat[b].iter().enumerate() {
            if !c.is_exact_zero() {
                a.push((off_y + dl, c.neg()));
            }
        }
        let r = dist_pow::<T>(x, y, m - beta.order()).mul(factor);
        sys.add_abs(a, T::zero(), T::zero(), r);
    }
}

/// `|∂^β P(x)| ≤ factor·M` for every stored derivative.
pub fn add_box_rows<T: Scalar>(sys: &mut System<T>, dim: usize, off: usize, factor: &T) {
    for k in 0..dim {
        sys.add_abs(vec![(off + k, T::one())], T::zero(), T::zero(), factor.clone());
    }
}

pub fn extract_jet<T: Scalar>(z: &[T], space: std::sync::Arc<JetSpace>, x: &[f64], off: usize) -> Jet {
    let derivs = (0..space.dim()).map(|k| z[off + k].to_f64()).collect();
    Jet::from_derivs(space, x, derivs)
}
