//! Dense two-phase primal simplex over a generic scalar.

use crate::linalg::solve_augmented;
use crate::scalar::{dot, Rational, Scalar};
use crate::Error;

const PIVOT_EPS: f64 = 1e-10;
const COST_EPS: f64 = 1e-10;
/// Residual tolerance accepted on float solutions (relative to row scale).
pub const TAU_LP: f64 = 1e-9;

/// `min cost·x` subject to `A_le x ≤ b_le`, `A_eq x = b_eq`; variables are free
/// unless flagged nonnegative.
#[derive(Clone, Debug)]
pub struct Lp<T> {
    pub nvars: usize,
    pub nonneg: Vec<bool>,
    pub le: Vec<(Vec<T>, T)>,
    pub eq: Vec<(Vec<T>, T)>,
    pub cost: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpResult<T> {
    Optimal { x: Vec<T>, value: T },
    Infeasible,
    Unbounded,
}

impl<T: Scalar> Lp<T> {
    pub fn new(nvars: usize) -> Self {
        Lp {
            nvars,
            nonneg: vec![false; nvars],
            le: Vec::new(),
            eq: Vec::new(),
            cost: vec![T::zero(); nvars],
        }
    }

    pub fn add_le(&mut self, a: Vec<T>, b: T) {
        debug_assert_eq!(a.len(), self.nvars);
        self.le.push((a, b));
    }

    pub fn add_eq(&mut self, a: Vec<T>, b: T) {
        debug_assert_eq!(a.len(), self.nvars);
        self.eq.push((a, b));
    }

    /// Adds `|a·x − c| ≤ b` as two inequalities.
    pub fn add_abs_le(&mut self, a: Vec<T>, c: T, b: T) {
        let neg: Vec<T> = a.iter().map(|v| v.neg()).collect();
        self.le.push((a, b.add(&c)));
        self.le.push((neg, b.sub(&c)));
    }

    pub fn solve(&self) -> Result<LpResult<T>, Error> {
        Tableau::build(self).run(self)
    }

    /// Largest violation of any constraint at `x` (in row units).
    pub fn max_violation(&self, x: &[T]) -> f64 {
        let mut worst = 0.0f64;
        for (a, b) in &self.le {
            worst = worst.max(dot(a, x).sub(b).to_f64());
        }
        for (a, b) in &self.eq {
            worst = worst.max(dot(a, x).sub(b).to_f64().abs());
        }
        for (j, nn) in self.nonneg.iter().enumerate() {
            if *nn {
                worst = worst.max(-x[j].to_f64());
            }
        }
        worst
    }

    pub fn to_rational(&self) -> Lp<Rational> {
        let conv = |rows: &Vec<(Vec<T>, T)>| -> Vec<(Vec<Rational>, Rational)> {
            rows.iter()
                .map(|(a, b)| {
                    (
                        a.iter().map(|v| Rational::from_f64(v.to_f64())).collect(),
                        Rational::from_f64(b.to_f64()),
                    )
                })
                .collect()
        };
        Lp {
            nvars: self.nvars,
            nonneg: self.nonneg.clone(),
            le: conv(&self.le),
            eq: conv(&self.eq),
            cost: self
                .cost
                .iter()
                .map(|v| Rational::from_f64(v.to_f64()))
                .collect(),
        }
    }
}

impl Lp<f64> {
    /// Float solve with an exact fallback when the float run stalls or its
    /// answer fails the residual check.
    pub fn solve_robust(&self) -> Result<LpResult<f64>, Error> {
        match self.solve() {
            Ok(LpResult::Optimal { x, value }) => {
                let scale = self.row_scale();
                if self.max_violation(&x) <= TAU_LP * scale {
                    return Ok(LpResult::Optimal { x, value });
                }
            }
            Ok(other) => return Ok(other),
            Err(_) => {}
        }
        let exact = self.to_rational().solve()?;
        Ok(match exact {
            LpResult::Optimal { x, value } => LpResult::Optimal {
                x: x.iter().map(Scalar::to_f64).collect(),
                value: value.to_f64(),
            },
            LpResult::Infeasible => LpResult::Infeasible,
            LpResult::Unbounded => LpResult::Unbounded,
        })
    }

    fn row_scale(&self) -> f64 {
        let mut s = 1.0f64;
        for (a, b) in self.le.iter().chain(&self.eq) {
            s = s.max(b.abs());
            for v in a {
                s = s.max(v.abs());
            }
        }
        s
    }
}

impl<T: Scalar> Lp<T> {
    fn to_f64(&self) -> Lp<f64> {
        let conv = |rows: &Vec<(Vec<T>, T)>| -> Vec<(Vec<f64>, f64)> {
            rows.iter()
                .map(|(a, b)| (a.iter().map(Scalar::to_f64).collect(), b.to_f64()))
                .collect()
        };
        Lp::<f64> {
            nvars: self.nvars,
            nonneg: self.nonneg.clone(),
            le: conv(&self.le),
            eq: conv(&self.eq),
            cost: self.cost.iter().map(Scalar::to_f64).collect(),
        }
    }
}

fn lift_result<T: Scalar>(r: LpResult<f64>) -> LpResult<T> {
    match r {
        LpResult::Optimal { x, value } => LpResult::Optimal {
            x: x.into_iter().map(T::from_f64).collect(),
            value: T::from_f64(value),
        },
        LpResult::Infeasible => LpResult::Infeasible,
        LpResult::Unbounded => LpResult::Unbounded,
    }
}

/// Exact solve for rationals, robust float solve otherwise.
pub fn solve_auto<T: Scalar>(lp: &Lp<T>) -> Result<LpResult<T>, Error> {
    if T::EXACT {
        return lp.solve();
    }
    Ok(lift_result(lp.to_f64().solve_robust()?))
}

/// Exact solve for rationals; for floats a single float run whose optimum
/// passes the residual check, `None` when that run is inconclusive.
pub fn solve_fast<T: Scalar>(lp: &Lp<T>) -> Result<Option<LpResult<T>>, Error> {
    if T::EXACT {
        return lp.solve().map(Some);
    }
    let f = lp.to_f64();
    Ok(match f.solve() {
        Ok(LpResult::Optimal { x, value }) if f.max_violation(&x) <= TAU_LP * f.row_scale() => {
            Some(lift_result(LpResult::Optimal { x, value }))
        }
        Ok(LpResult::Optimal { .. }) | Err(_) => None,
        Ok(other) => Some(lift_result(other)),
    })
}

struct Tableau<T> {
    rows: Vec<Vec<T>>,
    obj: Vec<T>,
    basis: Vec<usize>,
    ncols: usize,
    /// first artificial column
    art_start: usize,
    /// column map: variable j -> (u column, optional v column)
    var_cols: Vec<(usize, Option<usize>)>,
    infeasible_row: bool,
    rhs_scale: f64,
    /// float mode: the starting rows, kept to recompute the final basic solution
    orig: Vec<Vec<T>>,
    /// original index of each current row
    row_ids: Vec<usize>,
}

impl<T: Scalar> Tableau<T> {
    fn build(lp: &Lp<T>) -> Tableau<T> {
        let mut var_cols = Vec::with_capacity(lp.nvars);
        let mut col = 0;
        for j in 0..lp.nvars {
            if lp.nonneg[j] {
                var_cols.push((col, None));
                col += 1;
            } else {
                var_cols.push((col, Some(col + 1)));
                col += 2;
            }
        }
        let nstruct = col;
        // Normalize rows in float mode; drop empty rows after checking them.
        let mut infeasible_row = false;
        let mut prepared: Vec<(Vec<T>, T, bool)> = Vec::new();
        let mut rhs_scale = 1.0f64;
        for (is_eq, (a, b)) in lp
            .le
            .iter()
            .map(|r| (false, r))
            .chain(lp.eq.iter().map(|r| (true, r)))
        {
            let amax = a.iter().fold(0.0f64, |m, v| m.max(v.to_f64().abs()));
            if a.iter().all(|v| v.is_exact_zero()) || (!T::EXACT && amax < 1e-14) {
                let bad = if is_eq {
                    b.sign(TAU_LP * (1.0 + b.to_f64().abs())) != 0
                } else {
                    b.sign(TAU_LP) < 0
                };
                infeasible_row |= bad;
                continue;
            }
            if T::EXACT {
                prepared.push((a.clone(), b.clone(), is_eq));
            } else {
                let s = T::from_f64(1.0 / amax);
                let a2: Vec<T> = a.iter().map(|v| v.mul(&s)).collect();
                let b2 = b.mul(&s);
                rhs_scale = rhs_scale.max(b2.to_f64().abs());
                prepared.push((a2, b2, is_eq));
            }
        }
        let nle = prepared.iter().filter(|r| !r.2).count();
        let slack_start = nstruct;
        let art_start = slack_start + nle;
        let mut nart = 0;
        let mut needs_art = Vec::with_capacity(prepared.len());
        {
            for (_, b, is_eq) in &prepared {
                let neg = b.sign(0.0) < 0;
                let need = *is_eq || neg;
                needs_art.push(need);
                if need {
                    nart += 1;
                }
            }
        }
        let ncols = art_start + nart;
        let mut rows = Vec::with_capacity(prepared.len());
        let mut basis = Vec::with_capacity(prepared.len());
        let mut slack = slack_start;
        let mut art = art_start;
        for (k, (a, b, is_eq)) in prepared.into_iter().enumerate() {
            let mut row = vec![T::zero(); ncols + 1];
            let flip = b.sign(0.0) < 0;
            for (j, v) in a.iter().enumerate() {
                if v.is_exact_zero() {
                    continue;
                }
                let v = if flip { v.neg() } else { v.clone() };
                let (u, w) = var_cols[j];
                if let Some(w) = w {
                    row[w] = v.neg();
                }
                row[u] = v;
            }
            if !is_eq {
                row[slack] = if flip { T::one().neg() } else { T::one() };
                if !needs_art[k] {
                    basis.push(slack);
                }
                slack += 1;
            }
            if needs_art[k] {
                row[art] = T::one();
                basis.push(art);
                art += 1;
            }
            row[ncols] = if flip { b.neg() } else { b };
            rows.push(row);
        }
        let orig = if T::EXACT { Vec::new() } else { rows.clone() };
        let row_ids = (0..rows.len()).collect();
        Tableau {
            orig,
            row_ids,
            rows,
            obj: vec![T::zero(); ncols + 1],
            basis,
            ncols,
            art_start,
            var_cols,
            infeasible_row,
            rhs_scale,
        }
    }

    /// Basic values from a fresh factorisation of the starting rows, plus one
    /// refinement step; undoes the drift of the updated tableau.
    fn resolve_basic(&self) -> Result<Vec<f64>, Error> {
        let rhs = self.ncols;
        let rows: Vec<&Vec<T>> = self.row_ids.iter().map(|&i| &self.orig[i]).collect();
        let system = |b: &dyn Fn(usize) -> f64| -> Vec<Vec<f64>> {
            rows.iter()
                .enumerate()
                .map(|(i, r)| {
                    let mut line: Vec<f64> = self.basis.iter().map(|&c| r[c].to_f64()).collect();
                    line.push(b(i));
                    line
                })
                .collect()
        };
        let mut x = solve_augmented(system(&|i| rows[i][rhs].to_f64()))?;
        let resid: Vec<f64> = rows
            .iter()
            .map(|r| {
                let ax: f64 = self.basis.iter().zip(&x).map(|(&c, v)| r[c].to_f64() * v).sum();
                r[rhs].to_f64() - ax
            })
            .collect();
        let d = solve_augmented(system(&|i| resid[i]))?;
        for (v, dv) in x.iter_mut().zip(d) {
            *v += dv;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("nonfinite basic solution".into()));
        }
        Ok(x)
    }

    /// Largest equation residual or negativity of basic values `x`.
    fn basic_error(&self, x: &[f64]) -> f64 {
        let rhs = self.ncols;
        let mut err = x.iter().fold(0.0f64, |m, v| m.max(-v));
        for &i in &self.row_ids {
            let r = &self.orig[i];
            let ax: f64 = self.basis.iter().zip(x).map(|(&c, v)| r[c].to_f64() * v).sum();
            err = err.max((r[rhs].to_f64() - ax).abs());
        }
        err
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c].clone();
        let width = self.ncols + 1;
        let nz: Vec<usize> = (0..width)
            .filter(|&k| !self.rows[r][k].is_exact_zero())
            .collect();
        {
            let row = &mut self.rows[r];
            for &k in &nz {
                row[k] = row[k].div(&p);
            }
            row[c] = T::one();
        }
        let prow = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c].clone();
            if f.is_exact_zero() {
                continue;
            }
            for &k in &nz {
                row[k] = row[k].sub(&f.mul(&prow[k]));
                if !T::EXACT && row[k].to_f64().abs() < 1e-15 {
                    row[k] = T::zero();
                }
            }
            row[c] = T::zero();
        }
        let f = self.obj[c].clone();
        if !f.is_exact_zero() {
            for &k in &nz {
                self.obj[k] = self.obj[k].sub(&f.mul(&prow[k]));
            }
            self.obj[c] = T::zero();
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations on the current objective row; `limit_col`
    /// excludes columns at or beyond it from entering.
    fn iterate(&mut self, limit_col: usize) -> Result<bool, Error> {
        let max_iter = 50 * (self.rows.len() + self.ncols) + 1000;
        let mut degenerate_streak = 0usize;
        for _ in 0..max_iter {
            let bland = T::EXACT && degenerate_streak > 8 || degenerate_streak > 30;
            let mut enter = None;
            let mut best = T::zero();
            for j in 0..limit_col {
                let d = &self.obj[j];
                if d.sign(COST_EPS) < 0 {
                    if bland {
                        enter = Some(j);
                        break;
                    }
                    if enter.is_none() || d.cmp_val(&best).is_lt() {
                        best = d.clone();
                        enter = Some(j);
                    }
                }
            }
            let Some(c) = enter else {
                return Ok(true);
            };
            let rhs = self.ncols;
            let mut leave: Option<usize> = None;
            let mut best_ratio = T::zero();
            for (i, row) in self.rows.iter().enumerate() {
                let a = &row[c];
                if a.sign(PIVOT_EPS) <= 0 {
                    continue;
                }
                let ratio = row[rhs].div(a);
                match leave {
                    None => {
                        leave = Some(i);
                        best_ratio = ratio;
                    }
                    Some(l) => {
                        let ord = if T::EXACT {
                            ratio.cmp_val(&best_ratio)
                        } else {
                            let diff = ratio.to_f64() - best_ratio.to_f64();
                            let tol = 1e-12 * (1.0 + best_ratio.to_f64().abs());
                            if diff < -tol {
                                std::cmp::Ordering::Less
                            } else if diff > tol {
                                std::cmp::Ordering::Greater
                            } else {
                                std::cmp::Ordering::Equal
                            }
                        };
                        let take = match ord {
                            std::cmp::Ordering::Less => true,
                            std::cmp::Ordering::Greater => false,
                            std::cmp::Ordering::Equal => {
                                if bland || T::EXACT {
                                    self.basis[i] < self.basis[l]
                                } else {
                                    a.to_f64().abs() > self.rows[l][c].to_f64().abs()
                                }
                            }
                        };
                        if take {
                            leave = Some(i);
                            best_ratio = ratio;
                        }
                    }
                }
            }
            let Some(r) = leave else {
                return Ok(false);
            };
            if best_ratio.sign(1e-13) == 0 {
                degenerate_streak += 1;
            } else {
                degenerate_streak = 0;
            }
            self.pivot(r, c);
        }
        Err(Error::Numeric("simplex iteration limit reached".into()))
    }

    fn run(mut self, lp: &Lp<T>) -> Result<LpResult<T>, Error> {
        if self.infeasible_row {
            return Ok(LpResult::Infeasible);
        }
        let rhs = self.ncols;
        // Phase 1.
        if self.art_start < self.ncols {
            for j in self.art_start..self.ncols {
                self.obj[j] = T::one();
            }
            for i in 0..self.rows.len() {
                if self.basis[i] >= self.art_start {
                    let row = self.rows[i].clone();
                    for (k, v) in row.iter().enumerate() {
                        if !v.is_exact_zero() {
                            self.obj[k] = self.obj[k].sub(v);
                        }
                    }
                }
            }
            self.iterate(self.ncols)?;
            let infeas = self.obj[rhs].neg();
            let tol = if T::EXACT { 0.0 } else { TAU_LP * self.rhs_scale };
            if infeas.sign(tol) > 0 {
                return Ok(LpResult::Infeasible);
            }
            // Drive artificials out of the basis; drop redundant rows.
            let mut i = 0;
            while i < self.rows.len() {
                if self.basis[i] >= self.art_start {
                    let c = (0..self.art_start).find(|&k| self.rows[i][k].sign(1e-9) != 0);
                    match c {
                        Some(c) => {
                            self.pivot(i, c);
                            i += 1;
                        }
                        None => {
                            self.rows.remove(i);
                            self.basis.remove(i);
                            self.row_ids.remove(i);
                        }
                    }
                } else {
                    i += 1;
                }
            }
        }
        // Phase 2.
        let mut obj = vec![T::zero(); self.ncols + 1];
        for (j, c) in lp.cost.iter().enumerate() {
            let (u, w) = self.var_cols[j];
            obj[u] = c.clone();
            if let Some(w) = w {
                obj[w] = c.neg();
            }
        }
        for i in 0..self.rows.len() {
            let b = self.basis[i];
            let cb = obj[b].clone();
            if cb.is_exact_zero() {
                continue;
            }
            for k in 0..=self.ncols {
                let v = &self.rows[i][k];
                if !v.is_exact_zero() {
                    obj[k] = obj[k].sub(&cb.mul(v));
                }
            }
        }
        self.obj = obj;
        if !self.iterate(self.art_start)? {
            return Ok(LpResult::Unbounded);
        }
        let mut colval = vec![T::zero(); self.ncols];
        for (i, &b) in self.basis.iter().enumerate() {
            colval[b] = self.rows[i][rhs].clone();
        }
        if !T::EXACT {
            let current: Vec<f64> = self.basis.iter().map(|&b| colval[b].to_f64()).collect();
            let err = self.basic_error(&current);
            if err > TAU_LP * self.rhs_scale {
                if let Ok(v) = self.resolve_basic() {
                    if self.basic_error(&v) < err {
                        for (&b, v) in self.basis.iter().zip(v) {
                            colval[b] = T::from_f64(v);
                        }
                    }
                }
            }
        }
        let x: Vec<T> = self
            .var_cols
            .iter()
            .map(|&(u, w)| match w {
                Some(w) => colval[u].sub(&colval[w]),
                None => colval[u].clone(),
            })
            .collect();
        let value = dot(&lp.cost, &x);
        Ok(LpResult::Optimal { x, value })
    }
}

/// A Farkas certificate for `A x ≤ b` (free `x`): `y ≥ 0`, `yᵀA = 0`, `yᵀb = −1`.
pub fn farkas_certificate(rows: &[(Vec<Rational>, Rational)], nvars: usize) -> Option<Vec<Rational>> {
    let m = rows.len();
    let mut lp: Lp<Rational> = Lp::new(m);
    lp.nonneg = vec![true; m];
    for j in 0..nvars {
        lp.add_eq(rows.iter().map(|(a, _)| a[j].clone()).collect(), Rational::zero());
    }
    lp.add_eq(
        rows.iter().map(|(_, b)| b.clone()).collect(),
        Rational::one().neg(),
    );
    match lp.solve() {
        Ok(LpResult::Optimal { x, .. }) => Some(x),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(v: i64) -> Rational {
        Rational::from_integer(v.into())
    }

    #[test]
    fn small_float_lp() {
        // min −x − y, x + 2y ≤ 4, 3x + y ≤ 6, x,y ≥ 0 → (1.6, 1.2)
        let mut lp = Lp::new(2);
        lp.nonneg = vec![true, true];
        lp.add_le(vec![1.0, 2.0], 4.0);
        lp.add_le(vec![3.0, 1.0], 6.0);
        lp.cost = vec![-1.0, -1.0];
        match lp.solve().unwrap() {
            LpResult::Optimal { x, value } => {
                assert!((x[0] - 1.6).abs() < 1e-12 && (x[1] - 1.2).abs() < 1e-12);
                assert!((value + 2.8).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn free_variables_and_equalities() {
        // min x subject to x = y − 3, y ≥ −1 → x = −4
        let mut lp = Lp::new(2);
        lp.add_eq(vec![1.0, -1.0], -3.0);
        lp.add_le(vec![0.0, -1.0], 1.0);
        lp.cost = vec![1.0, 0.0];
        match lp.solve().unwrap() {
            LpResult::Optimal { x, .. } => assert!((x[0] + 4.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = Lp::new(1);
        lp.add_le(vec![1.0], -1.0);
        lp.add_le(vec![-1.0], -1.0);
        assert_eq!(lp.solve().unwrap(), LpResult::Infeasible);
        let mut lp = Lp::new(1);
        lp.add_le(vec![-1.0], 0.0);
        lp.cost = vec![-1.0];
        assert_eq!(lp.solve().unwrap(), LpResult::Unbounded);
    }

    #[test]
    fn exact_certificate() {
        let rows = vec![(vec![r(1)], r(-1)), (vec![r(-1)], r(-1))];
        let y = farkas_certificate(&rows, 1).unwrap();
        let comb: Rational = rows.iter().zip(&y).map(|((a, _), yi)| &a[0] * yi).sum();
        let rhs: Rational = rows.iter().zip(&y).map(|((_, b), yi)| b * yi).sum();
        assert_eq!(comb, r(0));
        assert_eq!(rhs, r(-1));
        let feasible = vec![(vec![r(1)], r(1)), (vec![r(-1)], r(1))];
        assert!(farkas_certificate(&feasible, 1).is_none());
    }
}
