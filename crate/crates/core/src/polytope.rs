//! H-polytopes `{c : a·c ≤ b0 + M·b1}` affine in a scale `M`, with feasibility,
//! optimisation, Fourier–Motzkin projection, Chebyshev centers and Helly checks.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::lp::{farkas_certificate, solve_auto, solve_fast, Lp, LpResult, TAU_LP};
use crate::scalar::{dot, Rational, Scalar};
use crate::util::combinations;
use crate::Error;

#[derive(Clone, Debug, PartialEq)]
pub struct Row<T> {
    pub a: Vec<T>,
    pub b0: T,
    pub b1: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HPoly<T> {
    pub dim: usize,
    pub rows: Vec<Row<T>>,
}

pub type HPolytope = HPoly<f64>;

#[derive(Clone, Debug)]
pub struct FeasibilityResult<T> {
    pub feasible: bool,
    pub witness: Option<Vec<T>>,
    /// Nonnegative row multipliers proving infeasibility (exact mode only).
    pub certificate: Option<Vec<Rational>>,
}

/// Limits for Fourier–Motzkin projection.
#[derive(Clone, Copy, Debug)]
pub struct ProjectGuard {
    pub max_eliminated: usize,
    pub max_rows: usize,
}

impl Default for ProjectGuard {
    fn default() -> Self {
        ProjectGuard {
            max_eliminated: 12,
            max_rows: 4000,
        }
    }
}

impl<T: Scalar> HPoly<T> {
    pub fn new(dim: usize) -> Self {
        HPoly {
            dim,
            rows: Vec::new(),
        }
    }

    /// The empty set, encoded as `0 ≤ −1`.
    pub fn empty(dim: usize) -> Self {
        let mut p = HPoly::new(dim);
        p.push(vec![T::zero(); dim], T::one().neg(), T::zero());
        p
    }

    pub fn push(&mut self, a: Vec<T>, b0: T, b1: T) {
        assert_eq!(a.len(), self.dim, "row dimension");
        self.rows.push(Row { a, b0, b1 });
    }

    /// Adds `lo ≤ a·c ≤ hi` style two-sided rows: `|a·c − center| ≤ r0 + M·r1`.
    pub fn push_abs(&mut self, a: Vec<T>, center: T, r0: T, r1: T) {
        let neg = a.iter().map(|v| v.neg()).collect();
        self.push(a, center.add(&r0), r1.clone());
        self.push(neg, r0.sub(&center), r1);
    }

    pub fn push_eq(&mut self, a: Vec<T>, value: T) {
        self.push_abs(a, value, T::zero(), T::zero());
    }

    pub fn instantiate(&self, m: &T) -> Vec<(Vec<T>, T)> {
        self.rows
            .iter()
            .map(|r| (r.a.clone(), r.b0.add(&r.b1.mul(m))))
            .collect()
    }

    pub fn intersect(&self, other: &HPoly<T>) -> Result<HPoly<T>, Error> {
        if self.dim != other.dim {
            return Err(Error::Domain("dimension mismatch".into()));
        }
        let mut out = self.clone();
        out.rows.extend(other.rows.iter().cloned());
        Ok(out)
    }

    fn lp(&self, m: &T) -> Lp<T> {
        let mut lp = Lp::new(self.dim);
        for (a, b) in self.instantiate(m) {
            lp.add_le(a, b);
        }
        lp
    }

    pub fn feasible(&self, m: &T) -> Result<FeasibilityResult<T>, Error> {
        let lp = self.lp(m);
        let res = solve_auto(&lp)?;
        Ok(match res {
            LpResult::Optimal { x, .. } => FeasibilityResult {
                feasible: true,
                witness: Some(x),
                certificate: None,
            },
            LpResult::Infeasible => {
                let certificate = if T::EXACT {
                    let rows: Vec<(Vec<Rational>, Rational)> = self
                        .instantiate(m)
                        .iter()
                        .map(|(a, b)| {
                            (a.iter().map(Scalar::to_rational).collect(), b.to_rational())
                        })
                        .collect();
                    farkas_certificate(&rows, self.dim)
                } else {
                    None
                };
                FeasibilityResult {
                    feasible: false,
                    witness: None,
                    certificate,
                }
            }
            LpResult::Unbounded => unreachable!("zero objective cannot be unbounded"),
        })
    }

    pub fn minimize_linear(&self, objective: &[T], m: &T) -> Result<(T, Vec<T>), Error> {
        if objective.len() != self.dim {
            return Err(Error::Domain("objective dimension mismatch".into()));
        }
        let mut lp = self.lp(m);
        lp.cost = objective.to_vec();
        match solve_auto(&lp)? {
            LpResult::Optimal { x, value } => Ok((value, x)),
            LpResult::Infeasible => Err(Error::Infeasible("polytope is empty".into())),
            LpResult::Unbounded => Err(Error::Unbounded("objective unbounded below".into())),
        }
    }

    /// Fourier–Motzkin projection onto the coordinates in `keep` (in the given
    /// order). The scale `M` is carried along as an extra kept coordinate so
    /// the result stays affine in `M` and valid for every `M ≥ 0`.
    pub fn project(&self, keep: &[usize], guard: ProjectGuard) -> Result<HPoly<T>, Error> {
        let mut keep_mask = vec![false; self.dim];
        for &k in keep {
            if k >= self.dim {
                return Err(Error::Domain("kept coordinate out of range".into()));
            }
            keep_mask[k] = true;
        }
        let elim: Vec<usize> = (0..self.dim).filter(|&j| !keep_mask[j]).collect();
        let mut fm = Fm::lift(self);
        fm.run(&elim, guard)?;
        Ok(fm.lower(keep))
    }

    pub fn to_rational(&self) -> HPoly<Rational> {
        HPoly {
            dim: self.dim,
            rows: self
                .rows
                .iter()
                .map(|r| Row {
                    a: r.a.iter().map(Scalar::to_rational).collect(),
                    b0: r.b0.to_rational(),
                    b1: r.b1.to_rational(),
                })
                .collect(),
        }
    }

    pub fn to_f64(&self) -> HPolytope {
        HPoly {
            dim: self.dim,
            rows: self
                .rows
                .iter()
                .map(|r| Row {
                    a: r.a.iter().map(Scalar::to_f64).collect(),
                    b0: r.b0.to_f64(),
                    b1: r.b1.to_f64(),
                })
                .collect(),
        }
    }
}

impl HPolytope {
    /// Membership with residual tolerance `tol` (relative to row scale).
    pub fn contains(&self, c: &[f64], m: f64, tol: f64) -> bool {
        self.rows.iter().all(|r| {
            let lhs = dot(&r.a, c);
            let rhs = r.b0 + m * r.b1;
            let scale = 1.0 + rhs.abs() + r.a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
            lhs <= rhs + tol * scale
        })
    }

    /// Smallest normalised slack `(b − a·c)/‖a‖` over rows with nonzero normal;
    /// negative when `c` is outside.
    pub fn margin(&self, c: &[f64], m: f64) -> f64 {
        let mut best = f64::INFINITY;
        for r in &self.rows {
            let norm = r.a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let slack = r.b0 + m * r.b1 - dot(&r.a, c);
            if norm < 1e-14 {
                if slack < 0.0 {
                    return f64::NEG_INFINITY;
                }
                continue;
            }
            best = best.min(slack / norm);
        }
        best
    }

    /// Center of the largest inscribed ball, measured inside the affine hull
    /// cut out by explicit equality pairs; ties broken lexicographically.
    pub fn chebyshev_center(&self, m: f64) -> Result<Vec<f64>, Error> {
        self.chebyshev(m, true).map(|(c, _)| c)
    }

    /// Center and radius without the lexicographic tie-break.
    pub fn chebyshev_ball(&self, m: f64) -> Result<(Vec<f64>, f64), Error> {
        self.chebyshev(m, false)
    }

    fn chebyshev(&self, m: f64, lexicographic: bool) -> Result<(Vec<f64>, f64), Error> {
        let rows = self.instantiate(&m);
        let (eq_rows, ineq_rows) = split_equalities(&rows);
        // Orthonormal basis of the equality normals for projected norms.
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for (a, _) in &eq_rows {
            let mut v = a.clone();
            for q in &basis {
                let d = dot(&v, q);
                for (x, y) in v.iter_mut().zip(q) {
                    *x -= d * y;
                }
            }
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nv > 1e-12 {
                basis.push(v.iter().map(|x| x / nv).collect());
            }
        }
        let d = self.dim;
        let mut lp = Lp::new(d + 1);
        lp.nonneg[d] = true;
        for (a, b) in &eq_rows {
            let mut row = a.clone();
            row.push(0.0);
            lp.add_eq(row, *b);
        }
        for (a, b) in &ineq_rows {
            let mut v = a.clone();
            for q in &basis {
                let dd = dot(&v, q);
                for (x, y) in v.iter_mut().zip(q) {
                    *x -= dd * y;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut row = a.clone();
            row.push(norm);
            lp.add_le(row, *b);
        }
        lp.cost[d] = -1.0;
        let (x, r) = match lp.solve_robust()? {
            LpResult::Optimal { x, .. } => {
                let r = x[d];
                (x, r)
            }
            LpResult::Infeasible => return Err(Error::Infeasible("polytope is empty".into())),
            LpResult::Unbounded => {
                return Err(Error::Unbounded("polytope contains arbitrarily large balls".into()))
            }
        };
        let mut center = x[..d].to_vec();
        if lexicographic {
            let mut lp2 = lp.clone();
            let mut floor = vec![0.0; d + 1];
            floor[d] = -1.0;
            lp2.add_le(floor, -(r - 1e-10 * (1.0 + r)));
            lp2.cost = vec![0.0; d + 1];
            for i in 0..d {
                lp2.cost = vec![0.0; d + 1];
                lp2.cost[i] = 1.0;
                match lp2.solve_robust()? {
                    LpResult::Optimal { x, .. } => {
                        center = x[..d].to_vec();
                        let mut pin = vec![0.0; d + 1];
                        pin[i] = 1.0;
                        lp2.add_le(pin, x[i] + 1e-12 * (1.0 + x[i].abs()));
                    }
                    LpResult::Unbounded => {
                        return Err(Error::Unbounded("unbounded set of centers".into()))
                    }
                    LpResult::Infeasible => break,
                }
            }
        }
        Ok((center, r))
    }
}

/// Separates rows that appear as an exact opposite pair (an equality) from
/// ordinary inequalities.
fn split_equalities(rows: &[(Vec<f64>, f64)]) -> (Vec<(Vec<f64>, f64)>, Vec<(Vec<f64>, f64)>) {
    let mut used = vec![false; rows.len()];
    let mut eqs = Vec::new();
    for i in 0..rows.len() {
        if used[i] {
            continue;
        }
        for j in (i + 1)..rows.len() {
            if used[j] {
                continue;
            }
            let (ai, bi) = &rows[i];
            let (aj, bj) = &rows[j];
            let scale = 1.0 + ai.iter().fold(0.0f64, |s, v| s.max(v.abs()));
            let opposite = ai
                .iter()
                .zip(aj)
                .all(|(x, y)| (x + y).abs() <= 1e-12 * scale);
            if opposite && (bi + bj).abs() <= 1e-12 * (1.0 + bi.abs()) {
                used[i] = true;
                used[j] = true;
                eqs.push(rows[i].clone());
                break;
            }
        }
    }
    let ineqs = rows
        .iter()
        .zip(&used)
        .filter(|(_, u)| !**u)
        .map(|(r, _)| r.clone())
        .collect();
    (eqs, ineqs)
}

/// Lifted Fourier–Motzkin state over `(c, M)`; each row is `z·coef ≤ rhs`.
struct Fm<T> {
    nvar: usize,
    rows: Vec<FmRow<T>>,
    infeasible: bool,
}

#[derive(Clone)]
struct FmRow<T> {
    coef: Vec<T>,
    rhs: T,
    hist: Vec<u64>,
}

fn hist_union(a: &[u64], b: &[u64]) -> Vec<u64> {
    a.iter().zip(b).map(|(x, y)| x | y).collect()
}

fn hist_count(a: &[u64]) -> usize {
    a.iter().map(|w| w.count_ones() as usize).sum()
}

impl<T: Scalar> Fm<T> {
    fn lift(p: &HPoly<T>) -> Fm<T> {
        let nvar = p.dim + 1;
        let mut rows = Vec::with_capacity(p.rows.len() + 1);
        for r in &p.rows {
            let mut coef = r.a.clone();
            coef.push(r.b1.neg());
            rows.push(FmRow {
                coef,
                rhs: r.b0.clone(),
                hist: Vec::new(),
            });
        }
        let mut mrow = vec![T::zero(); nvar];
        mrow[p.dim] = T::one().neg();
        rows.push(FmRow {
            coef: mrow,
            rhs: T::zero(),
            hist: Vec::new(),
        });
        let mut fm = Fm {
            nvar,
            rows,
            infeasible: false,
        };
        fm.reset_history();
        fm
    }

    fn reset_history(&mut self) {
        let words = self.rows.len().div_ceil(64).max(1);
        for (i, r) in self.rows.iter_mut().enumerate() {
            let mut h = vec![0u64; words];
            h[i / 64] |= 1u64 << (i % 64);
            r.hist = h;
        }
    }

    fn normalize(&self, row: &mut FmRow<T>) {
        let mut amax = T::zero();
        for v in &row.coef {
            let av = v.abs();
            if av.cmp_val(&amax).is_gt() {
                amax = av;
            }
        }
        if amax.is_exact_zero() {
            return;
        }
        if !T::EXACT {
            let s = 1.0 / amax.to_f64();
            for v in row.coef.iter_mut() {
                let x = v.to_f64() * s;
                *v = T::from_f64(if x.abs() < 1e-12 { 0.0 } else { x });
            }
            row.rhs = T::from_f64(row.rhs.to_f64() * s);
        } else {
            for v in row.coef.iter_mut() {
                *v = v.div(&amax);
            }
            row.rhs = row.rhs.div(&amax);
        }
    }

    fn is_zero_row(&self, row: &FmRow<T>) -> bool {
        row.coef.iter().all(|v| v.sign(1e-12) == 0)
    }

    /// Drops trivial rows, detects `0 ≤ negative`, merges duplicates.
    fn tidy(&mut self) {
        let mut kept: Vec<FmRow<T>> = Vec::with_capacity(self.rows.len());
        let rows = std::mem::take(&mut self.rows);
        for mut r in rows {
            self.normalize(&mut r);
            if self.is_zero_row(&r) {
                if r.rhs.sign(1e-9) < 0 {
                    self.infeasible = true;
                }
                continue;
            }
            let dup = kept.iter_mut().find(|k| {
                k.coef
                    .iter()
                    .zip(&r.coef)
                    .all(|(x, y)| x.sub(y).sign(1e-12) == 0)
            });
            match dup {
                Some(k) => {
                    if r.rhs.cmp_val(&k.rhs).is_lt() {
                        k.rhs = r.rhs;
                        k.hist = r.hist;
                    }
                }
                None => kept.push(r),
            }
        }
        self.rows = kept;
    }

    fn find_equality(&self, elim: &[usize]) -> Option<(usize, usize, usize)> {
        for i in 0..self.rows.len() {
            for j in (i + 1)..self.rows.len() {
                let (ri, rj) = (&self.rows[i], &self.rows[j]);
                let opp = ri
                    .coef
                    .iter()
                    .zip(&rj.coef)
                    .all(|(x, y)| x.add(y).sign(1e-12) == 0)
                    && ri.rhs.add(&rj.rhs).sign(1e-12) == 0;
                if !opp {
                    continue;
                }
                let best = elim
                    .iter()
                    .copied()
                    .filter(|&e| ri.coef[e].sign(1e-9) != 0)
                    .max_by(|&a, &b| ri.coef[a].abs().cmp_val(&ri.coef[b].abs()));
                if let Some(e) = best {
                    return Some((i, j, e));
                }
            }
        }
        None
    }

    fn run(&mut self, elim: &[usize], guard: ProjectGuard) -> Result<(), Error> {
        let mut remaining: Vec<usize> = elim.to_vec();
        let mut fm_steps = 0usize;
        let mut since_reset = 0usize;
        self.tidy();
        while !remaining.is_empty() && !self.infeasible {
            if let Some((i, j, e)) = self.find_equality(&remaining) {
                let eq = self.rows[i].clone();
                let pivot = eq.coef[e].clone();
                let mut next = Vec::with_capacity(self.rows.len());
                for (k, r) in self.rows.iter().enumerate() {
                    if k == i || k == j {
                        continue;
                    }
                    let f = r.coef[e].div(&pivot);
                    let mut nr = r.clone();
                    if !f.is_exact_zero() {
                        for (v, w) in nr.coef.iter_mut().zip(&eq.coef) {
                            *v = v.sub(&f.mul(w));
                        }
                        nr.rhs = nr.rhs.sub(&f.mul(&eq.rhs));
                    }
                    nr.coef[e] = T::zero();
                    next.push(nr);
                }
                self.rows = next;
                remaining.retain(|&v| v != e);
                self.tidy();
                self.reset_history();
                since_reset = 0;
                continue;
            }
            // Pick the variable with the smallest pairwise blow-up.
            let (pos_e, _) = remaining
                .iter()
                .enumerate()
                .map(|(k, &e)| {
                    let p = self.rows.iter().filter(|r| r.coef[e].sign(1e-12) > 0).count();
                    let q = self.rows.iter().filter(|r| r.coef[e].sign(1e-12) < 0).count();
                    (k, (p * q) as i64 - (p + q) as i64)
                })
                .min_by_key(|&(_, cost)| cost)
                .expect("nonempty");
            let e = remaining.remove(pos_e);
            fm_steps += 1;
            since_reset += 1;
            if fm_steps > guard.max_eliminated {
                return Err(Error::Guard(format!(
                    "projection eliminates more than {} coordinates",
                    guard.max_eliminated
                )));
            }
            let mut pos = Vec::new();
            let mut neg = Vec::new();
            let mut next = Vec::new();
            for r in self.rows.drain(..) {
                match r.coef[e].sign(1e-12) {
                    1 => pos.push(r),
                    -1 => neg.push(r),
                    _ => {
                        let mut r = r;
                        r.coef[e] = T::zero();
                        next.push(r);
                    }
                }
            }
            for p in &pos {
                for q in &neg {
                    let hist = hist_union(&p.hist, &q.hist);
                    if hist_count(&hist) > since_reset + 1 {
                        continue;
                    }
                    let lp_ = q.coef[e].neg();
                    let lq = p.coef[e].clone();
                    let coef: Vec<T> = p
                        .coef
                        .iter()
                        .zip(&q.coef)
                        .map(|(x, y)| x.mul(&lp_).add(&y.mul(&lq)))
                        .collect();
                    let rhs = p.rhs.mul(&lp_).add(&q.rhs.mul(&lq));
                    let mut row = FmRow { coef, rhs, hist };
                    row.coef[e] = T::zero();
                    next.push(row);
                    if next.len() > guard.max_rows * 4 {
                        return Err(Error::Guard("projection row blow-up".into()));
                    }
                }
            }
            self.rows = next;
            self.tidy();
            if self.rows.len() > 2 * self.nvar {
                self.prune()?;
            }
            if self.rows.len() > guard.max_rows {
                return Err(Error::Guard(format!(
                    "projection exceeds {} rows",
                    guard.max_rows
                )));
            }
        }
        if !self.infeasible {
            self.prune()?;
        }
        Ok(())
    }

    /// Removes rows implied by the others (one LP per row).
    fn prune(&mut self) -> Result<(), Error> {
        let nv = self.nvar;
        // Whole system infeasible: keep a single contradiction.
        let mut all = Lp::new(nv);
        for r in &self.rows {
            all.add_le(r.coef.clone(), r.rhs.clone());
        }
        if matches!(solve_auto(&all)?, LpResult::Infeasible) {
            self.infeasible = true;
            return Ok(());
        }
        let mut i = 0;
        while i < self.rows.len() {
            let mut lp = Lp::new(nv);
            for (k, r) in self.rows.iter().enumerate() {
                if k != i {
                    lp.add_le(r.coef.clone(), r.rhs.clone());
                }
            }
            // maximize coef·z  <=> minimize −coef·z; cap to keep it bounded
            lp.cost = self.rows[i].coef.iter().map(|v| v.neg()).collect();
            let cap = self.rows[i].rhs.add(&T::one());
            lp.add_le(self.rows[i].coef.clone(), cap);
            // An inconclusive float run keeps the row; extra rows are harmless.
            let redundant = match solve_fast(&lp)? {
                Some(LpResult::Optimal { value, .. }) => {
                    let max = value.neg();
                    let tol = if T::EXACT {
                        0.0
                    } else {
                        TAU_LP * (1.0 + self.rows[i].rhs.to_f64().abs())
                    };
                    max.sub(&self.rows[i].rhs).sign(tol) <= 0
                }
                _ => false,
            };
            if redundant {
                self.rows.remove(i);
            } else {
                i += 1;
            }
        }
        Ok(())
    }

    fn lower(&self, keep: &[usize]) -> HPoly<T> {
        let dim = keep.len();
        if self.infeasible {
            return HPoly::empty(dim);
        }
        let mcol = self.nvar - 1;
        let mut out = HPoly::new(dim);
        for r in &self.rows {
            let a: Vec<T> = keep.iter().map(|&k| r.coef[k].clone()).collect();
            let b1 = r.coef[mcol].neg();
            // drop the bare `M ≥ 0` row
            if a.iter().all(|v| v.is_exact_zero()) && r.rhs.sign(0.0) == 0 && b1.sign(0.0) > 0 {
                continue;
            }
            out.push(a, r.rhs.clone(), b1);
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HellyReport {
    pub arity: usize,
    pub all_subfamilies_feasible: bool,
    pub failing_subfamily: Option<Vec<usize>>,
    pub full_feasible: bool,
    /// All `k`-subfamilies meet, `k ≥ d+1`, yet the whole family does not.
    pub counterexample: bool,
}

/// Checks every `k`-subfamily and the full family at scale `M`.
pub fn helly_check<T: Scalar>(sets: &[HPoly<T>], k: usize, m: &T) -> Result<HellyReport, Error> {
    if sets.is_empty() {
        return Ok(HellyReport {
            arity: k,
            all_subfamilies_feasible: true,
            failing_subfamily: None,
            full_feasible: true,
            counterexample: false,
        });
    }
    let d = sets[0].dim;
    if sets.iter().any(|s| s.dim != d) {
        return Err(Error::Domain("sets of different dimension".into()));
    }
    let feasible_of = |idx: &[usize]| -> Result<bool, Error> {
        let mut p = HPoly::new(d);
        for &i in idx {
            p.rows.extend(sets[i].rows.iter().cloned());
        }
        Ok(p.feasible(m)?.feasible)
    };
    let arity = k.min(sets.len());
    let mut failing = None;
    for combo in combinations(sets.len(), arity) {
        if !feasible_of(&combo)? {
            failing = Some(combo);
            break;
        }
    }
    let all: Vec<usize> = (0..sets.len()).collect();
    let full = feasible_of(&all)?;
    Ok(HellyReport {
        arity: k,
        all_subfamilies_feasible: failing.is_none(),
        failing_subfamily: failing.clone(),
        full_feasible: full,
        counterexample: failing.is_none() && !full && k > d,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RowJson {
    a: Vec<f64>,
    b0: f64,
    #[serde(default)]
    b1: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolyJson {
    dim: usize,
    rows: Vec<RowJson>,
}

impl Serialize for HPoly<f64> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PolyJson {
            dim: self.dim,
            rows: self
                .rows
                .iter()
                .map(|r| RowJson {
                    a: r.a.clone(),
                    b0: r.b0,
                    b1: r.b1,
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for HPoly<f64> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let p = PolyJson::deserialize(d)?;
        let mut out = HPoly::new(p.dim);
        for r in p.rows {
            if r.a.len() != p.dim {
                return Err(D::Error::custom("row length differs from dim"));
            }
            out.push(r.a, r.b0, r.b1);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval(lo: f64, hi: f64) -> HPolytope {
        let mut p = HPoly::new(1);
        p.push(vec![1.0], hi, 0.0);
        p.push(vec![-1.0], -lo, 0.0);
        p
    }

    #[test]
    fn feasibility_examples() {
        let p = interval(-1.0, 1.0);
        let r = p.feasible(&3.0).unwrap();
        assert!(r.feasible && r.witness.unwrap()[0].abs() <= 1.0);
        let mut q = HPoly::new(1);
        q.push(vec![1.0], -1.0, 0.0);
        q.push(vec![-1.0], -1.0, 0.0);
        assert!(!q.feasible(&1.0).unwrap().feasible);
        let qr = q.to_rational();
        let res = qr.feasible(&Rational::from_f64(1.0)).unwrap();
        assert!(!res.feasible && res.certificate.is_some());
        let mut b = HPoly::new(2);
        for i in 0..2 {
            let mut e = vec![0.0; 2];
            e[i] = 1.0;
            b.push_abs(e, 0.0, 0.0, 1.0);
        }
        assert!(b.contains(&[0.0, 0.0], 2.0, 0.0));
    }

    #[test]
    fn minimize_examples() {
        let p = interval(-1.0, 1.0);
        assert_eq!(p.minimize_linear(&[1.0], &0.0).unwrap().0, -1.0);
        assert_eq!(p.minimize_linear(&[0.0], &0.0).unwrap().0, 0.0);
        let mut h = HPoly::new(1);
        h.push(vec![-1.0], 0.0, 0.0);
        assert!(matches!(
            h.minimize_linear(&[-1.0], &0.0),
            Err(Error::Unbounded(_))
        ));
    }

    #[test]
    fn projection_example() {
        let mut p = HPoly::new(2);
        p.push(vec![1.0, 1.0], 1.0, 0.0);
        p.push(vec![1.0, -1.0], 1.0, 0.0);
        p.push(vec![-1.0, 0.0], 0.0, 0.0);
        let q = p.project(&[0], ProjectGuard::default()).unwrap();
        for (x, inside) in [(-0.1, false), (0.0, true), (0.5, true), (1.0, true), (1.1, false)] {
            assert_eq!(q.contains(&[x], 1.0, 1e-12), inside, "x = {x}");
        }
        let ident = p.project(&[0, 1], ProjectGuard::default()).unwrap();
        assert_eq!(ident.rows.len(), 3);
    }

    #[test]
    fn projection_keeps_scale_dependence() {
        // |c0| ≤ M, |c0 − c1| ≤ 2M  projected to c1: |c1| ≤ 3M
        let mut p = HPoly::new(2);
        p.push_abs(vec![1.0, 0.0], 0.0, 0.0, 1.0);
        p.push_abs(vec![1.0, -1.0], 0.0, 0.0, 2.0);
        let q = p.project(&[1], ProjectGuard::default()).unwrap();
        for m in [0.5, 1.0, 4.0] {
            assert!(q.contains(&[3.0 * m - 1e-9], m, 0.0));
            assert!(!q.contains(&[3.0 * m + 1e-6], m, 0.0));
        }
    }

    #[test]
    fn chebyshev_examples() {
        let mut b = HPoly::new(2);
        for i in 0..2 {
            let mut e = vec![0.0; 2];
            e[i] = 1.0;
            b.push_abs(e, 0.0, 1.0, 0.0);
        }
        let c = b.chebyshev_center(0.0).unwrap();
        assert!(c[0].abs() < 1e-9 && c[1].abs() < 1e-9);
        assert!((interval(0.0, 4.0).chebyshev_center(0.0).unwrap()[0] - 2.0).abs() < 1e-9);
        let mut s = HPoly::new(2);
        s.push(vec![-1.0, 0.0], 0.0, 0.0);
        s.push(vec![0.0, -1.0], 0.0, 0.0);
        s.push(vec![1.0, 1.0], 1.0, 0.0);
        let c = s.chebyshev_center(0.0).unwrap();
        let want = 1.0 - 1.0 / 2f64.sqrt();
        assert!((c[0] - want).abs() < 1e-6 && (c[1] - want).abs() < 1e-6);
    }

    #[test]
    fn helly_examples() {
        let sets = vec![interval(0.0, 2.0), interval(1.0, 3.0), interval(2.0, 4.0)];
        let r = helly_check(&sets, 2, &0.0).unwrap();
        assert!(r.all_subfamilies_feasible && r.full_feasible && !r.counterexample);
        let r = helly_check(&[interval(0.0, 1.0), interval(2.0, 3.0)], 2, &0.0).unwrap();
        assert!(!r.all_subfamilies_feasible && !r.full_feasible);
        let r = helly_check(&[interval(0.0, 1.0)], 2, &0.0).unwrap();
        assert!(r.full_feasible && !r.counterexample);
    }

    #[test]
    fn json_round_trip() {
        let p = interval(-1.0, 2.0);
        let text = serde_json::to_string(&p).unwrap();
        let back: HPolytope = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
    }
}
