//! Jets stored as raw derivatives at a basepoint, with truncated products,
//! analytic composition, Taylor transport and Whitney seminorms.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::multi_index::{JetSpace, MultiIndex};
use crate::Error;

/// `∂^α P(basepoint)` for every `|α| ≤ degree`, in the order of the jet space.
#[derive(Clone, Debug)]
pub struct Jet {
    pub space: Arc<JetSpace>,
    pub basepoint: Vec<f64>,
    pub derivs: Vec<f64>,
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        self.space.n == other.space.n
            && self.space.degree == other.space.degree
            && self.basepoint == other.basepoint
            && self.derivs == other.derivs
    }
}

impl Jet {
    pub fn zero(space: Arc<JetSpace>, basepoint: &[f64]) -> Jet {
        assert_eq!(space.n, basepoint.len(), "basepoint dimension");
        let d = space.dim();
        Jet {
            space,
            basepoint: basepoint.to_vec(),
            derivs: vec![0.0; d],
        }
    }

    pub fn constant(space: Arc<JetSpace>, basepoint: &[f64], c: f64) -> Jet {
        let mut j = Jet::zero(space, basepoint);
        j.derivs[0] = c;
        j
    }

    pub fn from_derivs(space: Arc<JetSpace>, basepoint: &[f64], derivs: Vec<f64>) -> Jet {
        assert_eq!(space.dim(), derivs.len(), "derivative count");
        assert_eq!(space.n, basepoint.len(), "basepoint dimension");
        Jet {
            space,
            basepoint: basepoint.to_vec(),
            derivs,
        }
    }

    /// Jet of `coef · (z − basepoint)^α`.
    pub fn monomial(space: Arc<JetSpace>, basepoint: &[f64], alpha: &MultiIndex, coef: f64) -> Jet {
        let mut j = Jet::zero(space.clone(), basepoint);
        if let Some(i) = space.index_of(alpha) {
            j.derivs[i] = coef * alpha.factorial();
        }
        j
    }

    /// Jet of the affine coordinate function `z ↦ z_i` at the basepoint.
    pub fn coordinate(space: Arc<JetSpace>, basepoint: &[f64], i: usize) -> Jet {
        let n = space.n;
        let mut j = Jet::constant(space.clone(), basepoint, basepoint[i]);
        if space.degree >= 1 {
            let k = space.index_of(&MultiIndex::unit(n, i)).expect("unit index");
            j.derivs[k] = 1.0;
        }
        j
    }

    pub fn degree(&self) -> u32 {
        self.space.degree
    }

    pub fn n(&self) -> usize {
        self.space.n
    }

    pub fn value(&self) -> f64 {
        self.derivs[0]
    }

    pub fn deriv(&self, alpha: &MultiIndex) -> f64 {
        self.space
            .index_of(alpha)
            .map(|i| self.derivs[i])
            .unwrap_or(0.0)
    }

    fn same_base(&self, other: &Jet) -> Result<(), Error> {
        if self.basepoint != other.basepoint {
            return Err(Error::Domain("jets at different basepoints".into()));
        }
        if self.space.n != other.space.n || self.space.degree != other.space.degree {
            return Err(Error::Domain("jets of different spaces".into()));
        }
        Ok(())
    }

    pub fn add(&self, other: &Jet) -> Result<Jet, Error> {
        self.same_base(other)?;
        let mut out = self.clone();
        for (a, b) in out.derivs.iter_mut().zip(&other.derivs) {
            *a += b;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Jet) -> Result<Jet, Error> {
        self.same_base(other)?;
        let mut out = self.clone();
        for (a, b) in out.derivs.iter_mut().zip(&other.derivs) {
            *a -= b;
        }
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> Jet {
        let mut out = self.clone();
        out.derivs.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// `self + c · other`.
    pub fn axpy(&self, c: f64, other: &Jet) -> Result<Jet, Error> {
        self.same_base(other)?;
        let mut out = self.clone();
        for (a, b) in out.derivs.iter_mut().zip(&other.derivs) {
            *a += c * b;
        }
        Ok(out)
    }

    pub fn add_constant(&self, c: f64) -> Jet {
        let mut out = self.clone();
        out.derivs[0] += c;
        out
    }

    /// `P ⊙_x Q`: jet of the product, truncated to the degree.
    pub fn multiply(&self, other: &Jet) -> Result<Jet, Error> {
        self.same_base(other)?;
        let mut out = vec![0.0; self.derivs.len()];
        for &(i, j, k, c) in &self.space.products {
            out[k] += c * self.derivs[i] * other.derivs[j];
        }
        Ok(Jet {
            space: self.space.clone(),
            basepoint: self.basepoint.clone(),
            derivs: out,
        })
    }

    /// Jet of `f ∘ P` for an analytic `f`, by Horner evaluation of the
    /// truncated Taylor series of `f` at `P(basepoint)`.
    pub fn compose(&self, f: &AnalyticFn) -> Result<Jet, Error> {
        let s0 = self.value();
        let d = self.space.degree as usize;
        let coeffs = f.taylor(s0, d)?;
        let mut t = self.clone();
        t.derivs[0] = 0.0;
        let mut acc = Jet::constant(self.space.clone(), &self.basepoint, coeffs[d]);
        for k in (0..d).rev() {
            acc = acc.multiply(&t)?.add_constant(coeffs[k]);
        }
        Ok(acc)
    }

    pub fn sqrt(&self) -> Result<Jet, Error> {
        self.compose(&AnalyticFn::Pow(0.5))
    }

    pub fn recip(&self) -> Result<Jet, Error> {
        self.compose(&AnalyticFn::Pow(-1.0))
    }

    /// Re-expansion of the same polynomial at `y`.
    pub fn transport(&self, y: &[f64]) -> Jet {
        assert_eq!(y.len(), self.space.n, "target dimension");
        let dz: Vec<f64> = y.iter().zip(&self.basepoint).map(|(a, b)| a - b).collect();
        let mono: Vec<f64> = self
            .space
            .indices
            .iter()
            .map(|g| g.monomial(&dz) / g.factorial())
            .collect();
        let mut out = vec![0.0; self.derivs.len()];
        for &(b, bg, g) in &self.space.shifts {
            out[b] += self.derivs[bg] * mono[g];
        }
        Jet {
            space: self.space.clone(),
            basepoint: y.to_vec(),
            derivs: out,
        }
    }

    /// Value of the polynomial at `z`.
    pub fn eval(&self, z: &[f64]) -> f64 {
        let dz: Vec<f64> = z.iter().zip(&self.basepoint).map(|(a, b)| a - b).collect();
        self.space
            .indices
            .iter()
            .zip(&self.derivs)
            .map(|(a, v)| v * a.monomial(&dz) / a.factorial())
            .sum()
    }

    /// Same polynomial viewed in a jet space of another degree: truncates or
    /// pads with zero derivatives.
    pub fn with_degree(&self, degree: u32) -> Jet {
        let space = JetSpace::get(self.space.n, degree);
        let derivs = space.indices.iter().map(|a| self.deriv(a)).collect();
        Jet {
            space,
            basepoint: self.basepoint.clone(),
            derivs,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.derivs.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_diff(&self, other: &Jet) -> f64 {
        self.derivs
            .iter()
            .zip(&other.derivs)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Univariate analytic functions usable in [`Jet::compose`].
#[derive(Clone, Debug)]
pub enum AnalyticFn {
    /// `t ↦ t^p`; non-integer or negative `p` require `t > 0` (or `t ≠ 0` for negative integers).
    Pow(f64),
    /// `t ↦ Σ c_k t^k`.
    Poly(Vec<f64>),
    Exp,
}

impl AnalyticFn {
    /// `f^{(k)}(t0)/k!` for `k = 0..=d`.
    pub fn taylor(&self, t0: f64, d: usize) -> Result<Vec<f64>, Error> {
        match self {
            AnalyticFn::Pow(p) => {
                let p = *p;
                let is_int = p.fract() == 0.0;
                if !t0.is_finite() {
                    return Err(Error::Domain("non-finite argument".into()));
                }
                if (!is_int && t0 <= 0.0) || (is_int && p < 0.0 && t0 == 0.0) {
                    return Err(Error::Domain(format!(
                        "power {p} outside its domain at {t0}"
                    )));
                }
                let mut out = Vec::with_capacity(d + 1);
                let mut binom = 1.0;
                for k in 0..=d {
                    let e = p - k as f64;
                    let base = if is_int && e >= 0.0 {
                        t0.powi(e as i32)
                    } else {
                        t0.powf(e)
                    };
                    out.push(binom * base);
                    binom *= (p - k as f64) / (k as f64 + 1.0);
                }
                Ok(out)
            }
            AnalyticFn::Poly(c) => {
                // Taylor shift of the coefficient vector to t0.
                let mut out = vec![0.0; d + 1];
                for (k, slot) in out.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for (j, cj) in c.iter().enumerate().skip(k) {
                        s += cj * binomial(j as u32, k as u32) * t0.powi((j - k) as i32);
                    }
                    *slot = s;
                }
                Ok(out)
            }
            AnalyticFn::Exp => {
                let e = t0.exp();
                let mut out = Vec::with_capacity(d + 1);
                let mut fact = 1.0;
                for k in 0..=d {
                    if k > 0 {
                        fact *= k as f64;
                    }
                    out.push(e / fact);
                }
                Ok(out)
            }
        }
    }
}

pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut r = 1.0;
    for i in 0..k {
        r = r * f64::from(n - i) / f64::from(i + 1);
    }
    r
}

/// Jets `Q1 = √(½ + c0·S)`, `Q2 = √(½ − c0·S)` with `Q1⊙Q1 + Q2⊙Q2 = 1`.
pub fn unity_pair(s: &Jet, c0: f64) -> Result<(Jet, Jet), Error> {
    if !((c0 * s.value()).abs() < 0.5) {
        return Err(Error::Domain(format!(
            "|c0·S(x)| = {} is not below 1/2",
            (c0 * s.value()).abs()
        )));
    }
    let q1 = s.scale(c0).add_constant(0.5).sqrt()?;
    let q2 = s.scale(-c0).add_constant(0.5).sqrt()?;
    Ok((q1, q2))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JetRepr {
    basepoint: Vec<f64>,
    degree: u32,
    derivs: BTreeMap<String, f64>,
}

impl Serialize for Jet {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let derivs = self
            .space
            .indices
            .iter()
            .zip(&self.derivs)
            .map(|(a, v)| (a.key(), *v))
            .collect();
        JetRepr {
            basepoint: self.basepoint.clone(),
            degree: self.space.degree,
            derivs,
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Jet {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = JetRepr::deserialize(de)?;
        let n = r.basepoint.len();
        if n == 0 {
            return Err(D::Error::custom("empty basepoint"));
        }
        let space = JetSpace::get(n, r.degree);
        let mut derivs = vec![0.0; space.dim()];
        let mut seen = vec![false; space.dim()];
        for (k, v) in &r.derivs {
            let a = MultiIndex::parse_key(k)
                .ok_or_else(|| D::Error::custom(format!("bad multi-index key {k}")))?;
            let i = space
                .index_of(&a)
                .ok_or_else(|| D::Error::custom(format!("multi-index {k} outside the jet space")))?;
            derivs[i] = *v;
            seen[i] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(D::Error::custom(format!(
                "missing derivative {}",
                space.indices[i].key()
            )));
        }
        Ok(Jet {
            space,
            basepoint: r.basepoint,
            derivs,
        })
    }
}

/// A jet per point, each based at its own point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WhitneyField {
    pub jets: Vec<Jet>,
}

impl WhitneyField {
    pub fn new(jets: Vec<Jet>) -> Result<WhitneyField, Error> {
        for (i, a) in jets.iter().enumerate() {
            for b in &jets[..i] {
                if a.basepoint == b.basepoint {
                    return Err(Error::Domain(format!(
                        "duplicate point {:?} in Whitney field",
                        a.basepoint
                    )));
                }
            }
        }
        Ok(WhitneyField { jets })
    }

    /// Seminorm with smoothness order `m = degree + 1`.
    pub fn seminorm(&self) -> f64 {
        match self.jets.first() {
            Some(j) => self.seminorm_order(j.degree() + 1),
            None => 0.0,
        }
    }

    /// `max |∂^α(P^x − P^y)(x)| / |x−y|^{m−|α|}` over ordered pairs.
    pub fn seminorm_order(&self, m: u32) -> f64 {
        let mut best = 0.0f64;
        for px in &self.jets {
            for py in &self.jets {
                if px.basepoint == py.basepoint {
                    continue;
                }
                let moved = py.transport(&px.basepoint);
                let r = dist(&px.basepoint, &py.basepoint);
                for (i, a) in px.space.indices.iter().enumerate() {
                    let v = (px.derivs[i] - moved.derivs[i]).abs()
                        / r.powi((m - a.order()) as i32);
                    best = best.max(v);
                }
            }
        }
        best
    }
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Central-difference weights for the `k`-th derivative on offsets `−p..=p`.
fn central_weights(k: u32) -> (i32, Vec<f64>) {
    let p = ((k + 1) / 2).max(1) as i32;
    let pts: Vec<f64> = (-p..=p).map(f64::from).collect();
    let s = pts.len();
    // Solve Σ_j w_j t_j^r = r!·[r == k] for r = 0..s−1.
    let mut a = vec![vec![0.0; s + 1]; s];
    for (r, row) in a.iter_mut().enumerate() {
        for (j, t) in pts.iter().enumerate() {
            row[j] = t.powi(r as i32);
        }
        row[s] = if r as u32 == k {
            crate::multi_index::factorial(k)
        } else {
            0.0
        };
    }
    let w = crate::linalg::solve_augmented(a).expect("Vandermonde system is regular");
    (p, w)
}

/// Finite-difference jet of `f` at `x` (tensor-product central stencils, step `h`).
pub fn jet_of_function<F: Fn(&[f64]) -> f64>(
    f: F,
    x: &[f64],
    degree: u32,
    h: f64,
) -> Result<Jet, Error> {
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::Domain("grid spacing must be positive".into()));
    }
    let n = x.len();
    let space = JetSpace::get(n, degree);
    let stencils: Vec<(i32, Vec<f64>)> = (0..=degree).map(central_weights).collect();
    let mut derivs = Vec::with_capacity(space.dim());
    for a in &space.indices {
        let mut total = 0.0;
        let mut idx = vec![0usize; n];
        loop {
            let mut w = 1.0;
            let mut z = x.to_vec();
            for i in 0..n {
                let (p, ws) = &stencils[a.0[i] as usize];
                if a.0[i] == 0 {
                    continue;
                }
                w *= ws[idx[i]];
                z[i] += (idx[i] as i32 - p) as f64 * h;
            }
            if w != 0.0 {
                total += w * f(&z);
            }
            // advance the odometer over the active axes
            let mut carry = true;
            for i in 0..n {
                if !carry {
                    break;
                }
                if a.0[i] == 0 {
                    continue;
                }
                idx[i] += 1;
                if idx[i] < stencils[a.0[i] as usize].1.len() {
                    carry = false;
                } else {
                    idx[i] = 0;
                }
            }
            if carry {
                break;
            }
        }
        derivs.push(total / h.powi(a.order() as i32));
    }
    Ok(Jet::from_derivs(space, x, derivs))
}

/// Values of a function on a regular grid.
#[derive(Clone, Debug)]
pub struct GridSamples {
    pub origin: Vec<f64>,
    pub h: f64,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl GridSamples {
    pub fn sample<F: Fn(&[f64]) -> f64>(origin: &[f64], h: f64, shape: &[usize], f: F) -> Self {
        let total: usize = shape.iter().product();
        let mut values = Vec::with_capacity(total);
        for flat in 0..total {
            let z = Self::node(origin, h, shape, flat);
            values.push(f(&z));
        }
        GridSamples {
            origin: origin.to_vec(),
            h,
            shape: shape.to_vec(),
            values,
        }
    }

    fn node(origin: &[f64], h: f64, shape: &[usize], mut flat: usize) -> Vec<f64> {
        let mut z = origin.to_vec();
        for (i, &s) in shape.iter().enumerate() {
            z[i] += (flat % s) as f64 * h;
            flat /= s;
        }
        z
    }

    /// Jet at the grid node nearest to `x`; errors if `x` is not a node or the
    /// stencil leaves the grid.
    pub fn jet_at(&self, x: &[f64], degree: u32) -> Result<Jet, Error> {
        let n = self.shape.len();
        let mut node = Vec::with_capacity(n);
        for i in 0..n {
            let t = (x[i] - self.origin[i]) / self.h;
            let r = t.round();
            if (t - r).abs() > 1e-6 || r < 0.0 || r as usize >= self.shape[i] {
                return Err(Error::Domain(format!("point {x:?} is not a grid node")));
            }
            node.push(r as i64);
        }
        let reach = ((degree + 1) / 2).max(1) as i64;
        for i in 0..n {
            if degree > 0 && (node[i] < reach || node[i] + reach >= self.shape[i] as i64) {
                return Err(Error::Domain("insufficient grid around the point".into()));
            }
        }
        let lookup = |z: &[f64]| -> f64 {
            let mut flat = 0usize;
            let mut stride = 1usize;
            for i in 0..n {
                let k = ((z[i] - self.origin[i]) / self.h).round() as usize;
                flat += k * stride;
                stride *= self.shape[i];
            }
            self.values[flat]
        };
        let base: Vec<f64> = (0..n)
            .map(|i| self.origin[i] + node[i] as f64 * self.h)
            .collect();
        jet_of_function(lookup, &base, degree, self.h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn j1(derivs: &[f64]) -> Jet {
        Jet::from_derivs(JetSpace::get(1, derivs.len() as u32 - 1), &[0.0], derivs.to_vec())
    }

    #[test]
    fn product_truncates() {
        let p = j1(&[1.0, 1.0]);
        assert_eq!(p.multiply(&p).unwrap().derivs, vec![1.0, 2.0]);
        let x = j1(&[0.0, 1.0, 0.0]);
        // x·x = x², whose second derivative is 2
        assert_eq!(x.multiply(&x).unwrap().derivs, vec![0.0, 0.0, 2.0]);
        let one = j1(&[1.0, 0.0, 0.0]);
        assert_eq!(x.multiply(&one).unwrap(), x);
    }

    #[test]
    fn sqrt_examples() {
        let four = Jet::constant(JetSpace::get(2, 3), &[0.3, 0.1], 4.0);
        assert_eq!(four.sqrt().unwrap().derivs[0], 2.0);
        assert!(four.sqrt().unwrap().derivs[1..].iter().all(|v| *v == 0.0));
        let s = j1(&[1.0, 1.0]).sqrt().unwrap();
        assert_abs_diff_eq!(s.derivs[1], 0.5, epsilon = 1e-15);
        assert!(j1(&[0.0, 1.0]).sqrt().is_err());
    }

    #[test]
    fn unity_pair_examples() {
        let zero = j1(&[0.0, 0.0]);
        let (q1, q2) = unity_pair(&zero, 0.3).unwrap();
        assert_abs_diff_eq!(q1.value(), 0.5f64.sqrt(), epsilon = 1e-15);
        assert_eq!(q1, q2);
        let x = j1(&[0.0, 1.0]);
        let (q1, q2) = unity_pair(&x, 0.1).unwrap();
        // √(0.5+0.1x): value √0.5, slope 0.05/√0.5
        assert_abs_diff_eq!(q1.derivs[1], 0.05 / 0.5f64.sqrt(), epsilon = 1e-15);
        let s = q1.multiply(&q1).unwrap().add(&q2.multiply(&q2).unwrap()).unwrap();
        assert_abs_diff_eq!(s.derivs[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.derivs[1], 0.0, epsilon = 1e-15);
        assert!(unity_pair(&j1(&[6.0, 0.0]), 0.1).is_err());
    }

    #[test]
    fn transport_examples() {
        let p = j1(&[0.0, 1.0]);
        let moved = p.transport(&[1.0]);
        assert_eq!(moved.derivs, vec![1.0, 1.0]);
        assert_eq!(p.transport(&[0.0]), p);
    }

    #[test]
    fn seminorm_examples() {
        let s = JetSpace::get(1, 1);
        let w = WhitneyField::new(vec![
            Jet::from_derivs(s.clone(), &[0.0], vec![0.0, 0.0]),
            Jet::from_derivs(s.clone(), &[1.0], vec![1.0, 0.0]),
        ])
        .unwrap();
        assert_abs_diff_eq!(w.seminorm(), 1.0, epsilon = 1e-15);
        let single = WhitneyField::new(vec![Jet::constant(s.clone(), &[2.0], 5.0)]).unwrap();
        assert_eq!(single.seminorm(), 0.0);
        let dup = WhitneyField::new(vec![
            Jet::constant(s.clone(), &[2.0], 5.0),
            Jet::constant(s, &[2.0], 1.0),
        ]);
        assert!(dup.is_err());
    }

    #[test]
    fn finite_difference_polynomial() {
        let f = |z: &[f64]| 1.0 + 2.0 * z[0] - z[1] + 0.5 * z[0] * z[1] + 3.0 * z[1] * z[1];
        let j = jet_of_function(f, &[0.3, -0.2], 2, 1e-3).unwrap();
        let want = [
            f(&[0.3, -0.2]),
            -1.0 + 0.5 * 0.3 + 6.0 * -0.2,
            2.0 + 0.5 * -0.2,
            6.0,
            0.5,
            0.0,
        ];
        let s = &j.space;
        let idx = |v: &[u32]| s.index_of(&MultiIndex(v.to_vec())).unwrap();
        let got = [
            j.derivs[idx(&[0, 0])],
            j.derivs[idx(&[0, 1])],
            j.derivs[idx(&[1, 0])],
            j.derivs[idx(&[0, 2])],
            j.derivs[idx(&[1, 1])],
            j.derivs[idx(&[2, 0])],
        ];
        for (g, w) in got.iter().zip(&want) {
            assert_abs_diff_eq!(*g, *w, epsilon = 1e-8);
        }
        let c = jet_of_function(|_| 7.0, &[0.0], 3, 1e-2).unwrap();
        assert_eq!(c.derivs[0], 7.0);
        assert!(c.derivs[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn grid_samples_reject_outside() {
        let g = GridSamples::sample(&[0.0], 0.01, &[101], |z| z[0] * z[0]);
        assert!(g.jet_at(&[2.0], 2).is_err());
        assert!(g.jet_at(&[0.0], 2).is_err());
        let j = g.jet_at(&[0.5], 2).unwrap();
        assert_abs_diff_eq!(j.derivs[1], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(j.derivs[2], 2.0, epsilon = 1e-6);
    }

    #[test]
    fn json_round_trip() {
        let s = JetSpace::get(2, 2);
        let j = Jet::from_derivs(s, &[0.5, 1.0], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let text = serde_json::to_string(&j).unwrap();
        assert!(text.contains("\"(1,0)\""));
        let back: Jet = serde_json::from_str(&text).unwrap();
        assert_eq!(back, j);
    }
}
