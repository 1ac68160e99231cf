//! Basis certificates at a point of a shape field, their verification, and
//! the constructions that turn one certificate into another: rescaling,
//! relabeling to a monotonic set, the control step and transport to a nearby
//! point. Every construction re-checks its output before returning it.

use serde::{Deserialize, Serialize};

use crate::field::ShapeField;
use crate::jet::{dist, unity_pair, Jet};
use crate::linalg::{invert, solve_augmented};
use crate::multi_index::{is_monotonic, set_compare, IndexSet, JetSpace, MultiIndex};
use crate::whitney::{transport_coeffs, Outcome, Scale, System};
use crate::Error;

/// Absolute tolerance on Kronecker and agreement identities in float mode.
pub const IDENTITY_TOL: f64 = 1e-9;
/// Largest exponent in the measured-constant grid `{2^0, …, 2^20}`.
pub const C_GRID_MAX: i32 = 20;

fn slack(m: f64) -> f64 {
    m * (1.0 + 1e-9) + 1e-12
}

fn ord(space: &JetSpace, k: usize) -> i32 {
    space.order_of(k) as i32
}

/// `λ^β` for `λ = 2^{−j}` componentwise.
fn lambda_pow(j: &[u32], beta: &MultiIndex) -> f64 {
    let e: u64 = j.iter().zip(&beta.0).map(|(a, b)| u64::from(*a) * u64::from(*b)).sum();
    2f64.powi(-(e as i32))
}

fn lambda_pow_real(lambda: &[f64], beta: &MultiIndex) -> f64 {
    lambda.iter().zip(&beta.0).map(|(l, b)| l.powi(*b as i32)).product()
}

mod positions {
    use super::IndexSet;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(s: &IndexSet, ser: S) -> Result<S::Ok, S::Error> {
        s.positions().serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<IndexSet, D::Error> {
        let v = Vec::<usize>::deserialize(de)?;
        if v.iter().any(|&p| p >= 128) {
            return Err(serde::de::Error::custom("index position out of range"));
        }
        Ok(IndexSet::from_positions(&v))
    }
}

/// A family `(P_α)_{α∈𝒜}` claimed to be an `(𝒜, δ, C_B)`-basis at
/// `(x₀, M₀, P⁰)`. Vectors are listed in increasing index order and stored
/// as jets at `x₀`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisCertificate {
    #[serde(with = "positions")]
    pub set: IndexSet,
    pub delta: f64,
    pub c_b: f64,
    pub point: usize,
    pub m0: f64,
    pub base: Jet,
    pub vectors: Vec<Jet>,
    pub weak: bool,
}

impl BasisCertificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, Error> {
        serde_json::from_str(text).map_err(|e| Error::Input(e.to_string()))
    }

    /// The vector attached to index position `k`.
    pub fn vector(&self, k: usize) -> Option<&Jet> {
        self.set.positions().iter().position(|&p| p == k).map(|i| &self.vectors[i])
    }

    fn shape_ok(&self, field: &ShapeField) -> Result<(), Error> {
        if self.point >= field.len() {
            return Err(Error::Input(format!("base point {} outside E", self.point)));
        }
        if self.vectors.len() != self.set.len() {
            return Err(Error::Input("one vector per index required".into()));
        }
        if self.base.basepoint != field.points[self.point] {
            return Err(Error::Input("base jet is not anchored at x₀".into()));
        }
        if !(self.delta > 0.0 && self.m0 > 0.0 && self.c_b > 0.0) {
            return Err(Error::Input("δ, M₀ and C_B must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ConditionCheck {
    pub name: String,
    pub passed: bool,
    /// Largest ratio of observed to allowed size; `≤ 1` passes for bounds,
    /// absolute residual for identities.
    pub worst: f64,
}

impl ConditionCheck {
    fn bound(name: &str, worst: f64) -> Self {
        ConditionCheck {
            name: name.into(),
            passed: worst <= 1.0 + 1e-9,
            worst,
        }
    }

    fn identity(name: &str, residual: f64, scale: f64) -> Self {
        ConditionCheck {
            name: name.into(),
            passed: residual <= IDENTITY_TOL * scale.max(1.0),
            worst: residual,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BasisReport {
    pub conditions: Vec<ConditionCheck>,
    pub passed: bool,
    /// Smallest `C ∈ {2^0, …, 2^20}` for which every condition holds.
    pub measured_c_b: Option<f64>,
}

impl BasisReport {
    pub fn failed(&self) -> Vec<&str> {
        self.conditions.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}

/// Size of `P` relative to `Γ(x, scale)`: the minimal admissible scale over
/// `scale`, infinite when no scale works.
fn membership_ratio(field: &ShapeField, i: usize, scale: f64, p: &Jet) -> Result<f64, Error> {
    Ok(match field.sets[i].min_scale(p)? {
        Some(s) => s.max(0.0) / scale,
        None => f64::INFINITY,
    })
}

fn perturbed(cert: &BasisCertificate, c: f64, k: usize, sigma: f64) -> Result<Jet, Error> {
    let space = &cert.base.space;
    let pos = cert.set.positions()[k];
    let m = space.degree as i32 + 1;
    let h = cert.m0 * cert.delta.powi(m - ord(space, pos)) / c;
    cert.base.axpy(sigma * h, &cert.vectors[k])
}

fn kronecker_residual(cert: &BasisCertificate) -> f64 {
    let pos = cert.set.positions();
    let mut worst = 0.0f64;
    for (k, &a) in pos.iter().enumerate() {
        for &b in &pos {
            let want = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((cert.vectors[k].derivs[b] - want).abs());
        }
    }
    worst
}

fn size_ratio(cert: &BasisCertificate, c: f64) -> f64 {
    let space = &cert.base.space;
    let mut worst = 0.0f64;
    for (k, &a) in cert.set.positions().iter().enumerate() {
        for b in 0..space.dim() {
            if cert.weak && b < a {
                continue;
            }
            let allowed = c * cert.delta.powi(ord(space, a) - ord(space, b));
            worst = worst.max(cert.vectors[k].derivs[b].abs() / allowed);
        }
    }
    worst
}

/// Every condition at the constant `c` by membership tests only.
fn passes_at(cert: &BasisCertificate, field: &ShapeField, c: f64) -> Result<bool, Error> {
    if kronecker_residual(cert) > IDENTITY_TOL || size_ratio(cert, c) > 1.0 + 1e-9 {
        return Ok(false);
    }
    let scale = slack(c * cert.m0);
    if !field.member(cert.point, scale, &cert.base)? {
        return Ok(false);
    }
    for k in 0..cert.vectors.len() {
        for sigma in [1.0, -1.0] {
            if !field.member(cert.point, scale, &perturbed(cert, c, k, sigma)?)? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Smallest `2^k`, `0 ≤ k ≤ 20`, at which `cert` passes. Passing is monotone
/// in the constant, so a bisection over the exponent suffices.
pub fn measured_constant(cert: &BasisCertificate, field: &ShapeField) -> Result<Option<f64>, Error> {
    let at = |k: i32| passes_at(cert, field, 2f64.powi(k));
    if !at(C_GRID_MAX)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (-1, C_GRID_MAX);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if at(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(2f64.powi(hi)))
}

/// Checks the four basis conditions at the certificate's own constant and
/// measures the smallest grid constant that would pass.
pub fn check_basis(cert: &BasisCertificate, field: &ShapeField) -> Result<BasisReport, Error> {
    cert.shape_ok(field)?;
    let c = cert.c_b;
    let scale = c * cert.m0;
    let mut conditions = Vec::new();
    let base_ratio = membership_ratio(field, cert.point, scale, &cert.base)?;
    let base_in = field.member(cert.point, slack(scale), &cert.base)?;
    conditions.push(ConditionCheck {
        name: "pb1".into(),
        passed: base_in,
        worst: base_ratio,
    });
    let mut worst = 0.0f64;
    let mut all_in = true;
    for k in 0..cert.vectors.len() {
        for sigma in [1.0, -1.0] {
            let q = perturbed(cert, c, k, sigma)?;
            worst = worst.max(membership_ratio(field, cert.point, scale, &q)?);
            all_in &= field.member(cert.point, slack(scale), &q)?;
        }
    }
    conditions.push(ConditionCheck {
        name: "pb2".into(),
        passed: all_in,
        worst,
    });
    conditions.push(ConditionCheck::identity("pb3", kronecker_residual(cert), 1.0));
    conditions.push(ConditionCheck::bound("pb4", size_ratio(cert, c)));
    let passed = conditions.iter().all(|c| c.passed);
    Ok(BasisReport {
        passed,
        measured_c_b: measured_constant(cert, field)?,
        conditions,
    })
}

/// The certificate with `c_b` replaced by its measured value, or a
/// verification error naming `stage`.
fn verified(mut cert: BasisCertificate, field: &ShapeField, stage: &str) -> Result<(BasisCertificate, BasisReport), Error> {
    cert.shape_ok(field)?;
    let c = measured_constant(&cert, field)?.ok_or_else(|| Error::Verification {
        stage: stage.into(),
        detail: format!("no constant up to 2^{C_GRID_MAX} makes the family a basis"),
    })?;
    cert.c_b = c;
    let report = check_basis(&cert, field)?;
    if !report.passed {
        return Err(Error::Verification {
            stage: stage.into(),
            detail: format!("conditions {:?} fail", report.failed()),
        });
    }
    Ok((cert, report))
}

/// Search for a basis at one point of the field by a single LP.
///
/// The unknowns are the base jet, the vectors and the two perturbed jets per
/// vector; Kronecker entries are fixed and the size bounds enter as boxes.
/// With `anchor = (P⁰, bound, r, 𝒜)` the base jet also agrees with `P⁰` on
/// `𝒜` at the anchor's basepoint and stays within `bound · r^{m−|β|}` there.
pub struct BasisQuery<'a> {
    pub field: &'a ShapeField,
    pub point: usize,
    pub m0: f64,
    pub delta: f64,
    pub c_b: f64,
    pub set: IndexSet,
    pub weak: bool,
    pub anchor: Option<(&'a Jet, f64, f64, IndexSet)>,
    /// Fixes the base jet instead of searching for it.
    pub base: Option<&'a Jet>,
}

pub fn weak_basis_at(q: &BasisQuery) -> Result<Option<BasisCertificate>, Error> {
    let field = q.field;
    let space = field.space.clone();
    let d = space.dim();
    let m = field.order() as i32;
    let x = &field.points[q.point];
    let set = &field.sets[q.point];
    let mut sys = System::<f64>::new();
    let pb = sys.add_vars(d);
    if let Some(b) = q.base {
        if b.basepoint != *x {
            return Err(Error::Input("fixed base jet is not anchored at the point".into()));
        }
        sys.fix_jet(pb, b);
    }
    set.emit(&mut sys, pb);
    let positions = q.set.positions();
    let mut offs = Vec::with_capacity(positions.len());
    for &a in &positions {
        let pa = sys.add_vars(d);
        offs.push(pa);
        let h = q.m0 * q.delta.powi(m - ord(&space, a)) / q.c_b;
        for sigma in [1.0, -1.0] {
            let w = sys.add_vars(d);
            for k in 0..d {
                sys.add_eq(vec![(w + k, 1.0), (pb + k, -1.0), (pa + k, -sigma * h)], 0.0);
            }
            set.emit(&mut sys, w);
        }
        for b in 0..d {
            if q.set.contains(b) {
                sys.fix(pa + b, if a == b { 1.0 } else { 0.0 });
            } else if !(q.weak && b < a) {
                let r = q.c_b * q.delta.powi(ord(&space, a) - ord(&space, b));
                sys.add_abs(vec![(pa + b, 1.0)], 0.0, r, 0.0);
            }
        }
    }
    if let Some((p0, bound, r, agree)) = &q.anchor {
        let mat = transport_coeffs::<f64>(&space, x, &p0.basepoint);
        for (b, row) in mat.iter().enumerate() {
            let a: Vec<(usize, f64)> = row
                .iter()
                .enumerate()
                .filter(|(_, c)| **c != 0.0)
                .map(|(k, c)| (pb + k, *c))
                .collect();
            if agree.contains(b) {
                sys.add_eq(a, p0.derivs[b]);
            } else {
                let rad = bound * r.powi(m - ord(&space, b));
                sys.add_abs(a, p0.derivs[b], rad, 0.0);
            }
        }
    }
    let sol = match sys.solve(Scale::Fixed(q.c_b * q.m0))? {
        Outcome::Feasible(s) if s.certified => s,
        _ => return Ok(None),
    };
    let jet_at = |off: usize| Jet::from_derivs(space.clone(), x, sol.z[off..off + d].to_vec());
    Ok(Some(BasisCertificate {
        set: q.set,
        delta: q.delta,
        c_b: q.c_b,
        point: q.point,
        m0: q.m0,
        base: jet_at(pb),
        vectors: offs.iter().map(|&o| jet_at(o)).collect(),
        weak: q.weak,
    }))
}

/// Output of the grid search for scaling factors.
#[derive(Clone, Debug, Serialize)]
pub struct RescalingResult {
    /// `λ_i = 2^{−j_i}`.
    pub lambda: Vec<f64>,
    pub exponents: Vec<u32>,
    /// `(α, φ(α))` as index positions.
    pub phi: Vec<(usize, usize)>,
    pub a: f64,
    /// `min_i λ_i`, the recorded lower bound for this run.
    pub c_a: f64,
    /// Largest `|F̂_{α,β}| / (a |F̂_{α,φ(α)}|)` over `β ≠ φ(α)`.
    pub worst_ratio: f64,
}

pub const RESCALE_J_MAX: u32 = 64;
const RESCALE_BUDGET: usize = 5_000_000;

/// Evaluates one grid point. Returns `(φ, worst ratio)` or the violation.
fn rescale_at(f: &[Vec<f64>], set: &IndexSet, space: &JetSpace, j: &[u32], a: f64) -> (Option<Vec<(usize, usize)>>, f64) {
    let pos = set.positions();
    let lam: Vec<f64> = space.indices.iter().map(|b| lambda_pow(j, b)).collect();
    let mut phi = Vec::with_capacity(pos.len());
    let mut worst = 0.0f64;
    let mut ok = true;
    for (row, &alpha) in f.iter().zip(&pos) {
        let hat: Vec<f64> = row.iter().zip(&lam).map(|(v, l)| v * l).collect();
        let mut arg = 0;
        for (b, v) in hat.iter().enumerate() {
            if v.abs() > hat[arg].abs() {
                arg = b;
            }
        }
        if arg > alpha || (arg != alpha && set.contains(arg)) {
            ok = false;
            worst = f64::INFINITY;
        }
        let top = hat[arg].abs();
        for (b, v) in hat.iter().enumerate() {
            if b != arg {
                let r = if top > 0.0 { v.abs() / (a * top) } else { f64::INFINITY };
                worst = worst.max(r);
            }
        }
        phi.push((alpha, arg));
    }
    if worst > 1.0 {
        ok = false;
    }
    (ok.then_some(phi), worst)
}

/// Visits every `j ∈ {0..=J}^n` with `Σ j = s` in lexicographic order.
fn for_each_composition(n: usize, s: u32, cap: u32, f: &mut dyn FnMut(&[u32]) -> bool) -> bool {
    fn rec(cur: &mut Vec<u32>, n: usize, left: u32, cap: u32, f: &mut dyn FnMut(&[u32]) -> bool) -> bool {
        if cur.len() == n - 1 {
            if left > cap {
                return false;
            }
            cur.push(left);
            let stop = f(cur);
            cur.pop();
            return stop;
        }
        for v in 0..=left.min(cap) {
            cur.push(v);
            let stop = rec(cur, n, left - v, cap, f);
            cur.pop();
            if stop {
                return true;
            }
        }
        false
    }
    rec(&mut Vec::with_capacity(n), n, s, cap, f)
}

/// Finds `λ ∈ {2^{−j} : 0 ≤ j ≤ 64}ⁿ` such that `φ(α) = argmax_β |λ^β F_{α,β}|`
/// satisfies `φ(α) ≤ α`, `φ(α) ∈ {α} ∪ 𝒜ᶜ` and dominates every other entry by
/// the factor `a`. Grid points are visited by increasing `Σ j`.
///
/// Rows of `f` follow the positions of `set`; columns run over all of ℳ.
pub fn rescale(f: &[Vec<f64>], set: &IndexSet, space: &JetSpace, a: f64, c: f64) -> Result<RescalingResult, Error> {
    let pos = set.positions();
    if f.len() != pos.len() || f.iter().any(|r| r.len() != space.dim()) {
        return Err(Error::Input("F must have one row per index and one column per multi-index".into()));
    }
    if !(a > 0.0 && c > 0.0) {
        return Err(Error::Input("a and C must be positive".into()));
    }
    for (row, &alpha) in f.iter().zip(&pos) {
        let diag = row[alpha].abs();
        if diag == 0.0 {
            return Err(Error::Precondition(format!("F vanishes on the diagonal at {alpha}")));
        }
        for (b, v) in row.iter().enumerate() {
            if b >= alpha && v.abs() > c * diag * (1.0 + 1e-9) {
                return Err(Error::Precondition(format!("|F[{alpha}][{b}]| exceeds C·|F[{alpha}][{alpha}]|")));
            }
            if b != alpha && set.contains(b) && v.abs() > IDENTITY_TOL * diag {
                return Err(Error::Precondition(format!("F[{alpha}][{b}] ≠ 0 inside 𝒜")));
            }
        }
    }
    let n = space.n;
    if pos.is_empty() {
        return Ok(RescalingResult {
            lambda: vec![1.0; n],
            exponents: vec![0; n],
            phi: Vec::new(),
            a,
            c_a: 1.0,
            worst_ratio: 0.0,
        });
    }
    let mut best = f64::INFINITY;
    let mut found = None;
    let mut visited = 0usize;
    let mut exhausted = false;
    for s in 0..=(n as u32 * RESCALE_J_MAX) {
        let stop = for_each_composition(n, s, RESCALE_J_MAX, &mut |j: &[u32]| {
            visited += 1;
            if visited > RESCALE_BUDGET {
                exhausted = true;
                return true;
            }
            let (phi, worst) = rescale_at(f, set, space, j, a);
            best = best.min(worst);
            if let Some(phi) = phi {
                found = Some((j.to_vec(), phi, worst));
                return true;
            }
            false
        });
        if stop {
            break;
        }
    }
    match found {
        Some((j, phi, worst)) => {
            let lambda: Vec<f64> = j.iter().map(|&e| 2f64.powi(-(e as i32))).collect();
            let c_a = lambda.iter().cloned().fold(1.0, f64::min);
            Ok(RescalingResult {
                lambda,
                exponents: j,
                phi,
                a,
                c_a,
                worst_ratio: worst,
            })
        }
        None if exhausted => Err(Error::Guard(format!(
            "rescaling grid budget of {RESCALE_BUDGET} points exhausted (best ratio {best:e})"
        ))),
        None => Err(Error::Verification {
            stage: "rescale".into(),
            detail: format!("no grid point within J_max = {RESCALE_J_MAX}; best ratio {best:e}"),
        }),
    }
}

/// Product of a multiplier with a member perturbation, realised as the
/// sum-of-squares combination `Q1²(P⁰ + P̂/C) + Q2²(P⁰ − P̂/C)` whose exact
/// value is `P⁰ + (2c₀/C)·Ŝ⊙P̂`.
#[derive(Clone, Debug, Serialize)]
pub struct ProductCheck {
    pub index: usize,
    pub c0: f64,
    /// `max |combination − (P⁰ + (2c₀/C)Ŝ⊙P̂)|`.
    pub identity_residual: f64,
    /// Minimal scale of the combination over `M₀`.
    pub scale_ratio: f64,
}

/// Halves `c0` from `1/4` until the square roots exist and the multipliers
/// obey `|∂^β Q| ≤ C δ^{−|β|}` with `C = 4`.
fn sos_pair(s: &Jet, delta: f64) -> Option<(f64, Jet, Jet)> {
    let mut c0 = 0.25;
    for _ in 0..60 {
        if let Ok((q1, q2)) = unity_pair(s, c0) {
            let small = [&q1, &q2].iter().all(|q| {
                q.space
                    .indices
                    .iter()
                    .zip(&q.derivs)
                    .all(|(b, v)| v.is_finite() && v.abs() <= 4.0 * delta.powi(-(b.order() as i32)))
            });
            if small {
                return Some((c0, q1, q2));
            }
        }
        c0 *= 0.5;
    }
    None
}

fn product_check(
    field: &ShapeField,
    point: usize,
    p0: &Jet,
    s_hat: &Jet,
    p_hat: &Jet,
    c1: f64,
    m0: f64,
    delta: f64,
    index: usize,
) -> Result<ProductCheck, Error> {
    let (c0, q1, q2) = sos_pair(s_hat, delta).ok_or_else(|| Error::Verification {
        stage: "unity pair".into(),
        detail: "no admissible c0 down to 2^-60".into(),
    })?;
    let p1 = p0.axpy(1.0 / c1, p_hat)?;
    let p2 = p0.axpy(-1.0 / c1, p_hat)?;
    let comb = q1.multiply(&q1)?.multiply(&p1)?.add(&q2.multiply(&q2)?.multiply(&p2)?)?;
    let want = p0.axpy(2.0 * c0 / c1, &s_hat.multiply(p_hat)?)?;
    let identity_residual = comb.max_diff(&want);
    let scale_ratio = membership_ratio(field, point, m0, &comb)?;
    Ok(ProductCheck {
        index,
        c0,
        identity_residual,
        scale_ratio,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct RelabelOptions {
    /// Domination factor handed to the rescaling search.
    pub a: f64,
    /// Entries `δ^{|β|−|α|}|∂^β P_α|` above this count as large; `None`
    /// uses `1/a`.
    pub threshold: Option<f64>,
}

impl Default for RelabelOptions {
    fn default() -> Self {
        RelabelOptions { a: 0.1, threshold: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RelabelResult {
    pub cert: BasisCertificate,
    pub report: BasisReport,
    pub rescaling: RescalingResult,
    /// `φ(𝒜)`.
    #[serde(with = "positions")]
    pub image: IndexSet,
    /// `(α̂, χ(α̂), ω(α̂))` with `α̂ = χ + ω`.
    pub split: Vec<(usize, usize, MultiIndex)>,
    pub max_entry: f64,
    pub threshold: f64,
    pub strict_drop: bool,
    pub products: Vec<ProductCheck>,
    /// Pivot ratio of the final linear solve.
    pub conditioning: f64,
}

/// From a weak basis at `(x₀, M₀, P⁰)` builds a full basis for a monotonic
/// `Â ≤ 𝒜` at the same base: rescale, normalise the dominant entries, close
/// `φ(𝒜)` upward, multiply by monomials and solve for Kronecker form.
pub fn relabel(cert: &BasisCertificate, field: &ShapeField, opts: RelabelOptions) -> Result<RelabelResult, Error> {
    cert.shape_ok(field)?;
    let space = field.space.clone();
    let d = space.dim();
    let m = field.order() as i32;
    let delta = cert.delta;
    let x0 = cert.base.basepoint.clone();
    let pos = cert.set.positions();
    let threshold = opts.threshold.unwrap_or(1.0 / opts.a);

    let f: Vec<Vec<f64>> = pos
        .iter()
        .zip(&cert.vectors)
        .map(|(&a, v)| (0..d).map(|b| delta.powi(ord(&space, b) - ord(&space, a)) * v.derivs[b]).collect())
        .collect();
    let max_entry = f.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    let rescaling = rescale(&f, &cert.set, &space, opts.a, cert.c_b)?;
    let lambda = rescaling.lambda.clone();

    let mut image = IndexSet::empty();
    let mut psi: Vec<(usize, usize)> = Vec::new();
    for &(alpha, bar) in &rescaling.phi {
        if !image.contains(bar) {
            image.insert(bar);
            psi.push((bar, alpha));
        }
    }
    psi.sort();
    // P̄_ᾱ = b_ᾱ δ^{|ᾱ|−|ψ(ᾱ)|} P_{ψ(ᾱ)} with ∂^ᾱ(P̄_ᾱ ∘ T)(x₀) = 1.
    let mut bar_jets = Vec::with_capacity(psi.len());
    for &(bar, alpha) in &psi {
        let k = pos.iter().position(|&p| p == alpha).expect("α in 𝒜");
        let e = ord(&space, bar) - ord(&space, alpha);
        let lead = delta.powi(e) * lambda_pow_real(&lambda, &space.indices[bar]) * cert.vectors[k].derivs[bar];
        if lead == 0.0 || !lead.is_finite() {
            return Err(Error::Verification {
                stage: "normalisation".into(),
                detail: format!("dominant entry at {bar} vanishes"),
            });
        }
        bar_jets.push((bar, cert.vectors[k].scale(delta.powi(e) / lead)));
    }

    // Â = φ(𝒜) + ℳ, with the largest admissible χ per element.
    let mut hat = IndexSet::empty();
    let mut split = Vec::new();
    for (i, idx) in space.indices.iter().enumerate() {
        let chi = psi
            .iter()
            .rev()
            .find_map(|&(bar, _)| idx.checked_sub(&space.indices[bar]).map(|w| (bar, w)));
        if let Some((bar, w)) = chi {
            hat.insert(i);
            split.push((i, bar, w));
        }
    }

    let mut products = Vec::with_capacity(split.len());
    let mut prods = Vec::with_capacity(split.len());
    for (i, bar, w) in &split {
        let chi = &space.indices[*bar];
        let coef = chi.factorial() / space.indices[*i].factorial() / lambda_pow_real(&lambda, w);
        let s = Jet::monomial(space.clone(), &x0, w, coef);
        let pbar = &bar_jets.iter().find(|(b, _)| b == bar).expect("χ in φ(𝒜)").1;
        let q = s.multiply(pbar)?;
        let s_hat = s.scale(delta.powi(-(w.order() as i32)));
        let p_hat = pbar.scale(cert.m0 * delta.powi(m - ord(&space, *bar)));
        products.push(product_check(field, cert.point, &cert.base, &s_hat, &p_hat, cert.c_b, cert.m0, delta, *i)?);
        prods.push(q);
    }

    let hat_pos = hat.positions();
    let mat: Vec<Vec<f64>> = split
        .iter()
        .zip(&prods)
        .map(|((i, _, _), q)| {
            hat_pos
                .iter()
                .map(|&b| {
                    delta.powi(ord(&space, b) - ord(&space, *i))
                        * lambda_pow_real(&lambda, &space.indices[b])
                        * q.derivs[b]
                })
                .collect()
        })
        .collect();
    let (b, conditioning) = if hat_pos.is_empty() {
        (Vec::new(), 1.0)
    } else {
        invert(&mat).map_err(|e| Error::Verification {
            stage: "relabel solve".into(),
            detail: e.to_string(),
        })?
    };
    let mut vectors = Vec::with_capacity(hat_pos.len());
    for (g, &gamma) in hat_pos.iter().enumerate() {
        let mut acc = Jet::zero(space.clone(), &x0);
        for (k, ((i, _, _), q)) in split.iter().zip(&prods).enumerate() {
            acc = acc.axpy(b[g][k] * delta.powi(ord(&space, gamma) - ord(&space, *i)), q)?;
        }
        vectors.push(acc.scale(lambda_pow_real(&lambda, &space.indices[gamma])));
    }
    let out = BasisCertificate {
        set: hat,
        delta,
        c_b: cert.c_b,
        point: cert.point,
        m0: cert.m0,
        base: cert.base.clone(),
        vectors,
        weak: false,
    };
    if !is_monotonic(&space, &hat) {
        return Err(Error::Verification {
            stage: "relabel".into(),
            detail: format!("{} is not monotonic", hat.describe(&space)),
        });
    }
    if set_compare(&hat, &cert.set) == std::cmp::Ordering::Greater {
        return Err(Error::Verification {
            stage: "relabel".into(),
            detail: "output set is above the input set".into(),
        });
    }
    let (cert_out, report) = verified(out, field, "relabel output")?;
    let strict_drop = set_compare(&hat, &cert.set) == std::cmp::Ordering::Less && max_entry > threshold;
    Ok(RelabelResult {
        cert: cert_out,
        report,
        rescaling,
        image,
        split,
        max_entry,
        threshold,
        strict_drop,
        products,
        conditioning,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GammaStep {
    #[serde(with = "positions")]
    pub hat_set: IndexSet,
    pub p_hat0: Jet,
    /// The new index `γ ∉ 𝒜`.
    pub gamma: usize,
    /// Weight `t` with the clipped jet `P⁰ + t(P − P⁰)`.
    pub weight: f64,
    pub cert: BasisCertificate,
    pub relabel: RelabelResult,
    /// The five conclusions, named after the properties they check.
    pub conclusions: Vec<ConditionCheck>,
}

/// One step of control by a basis: `P ∈ Γ(x₀, C_B M₀)` agreeing with `P⁰`
/// on `𝒜` but far from it elsewhere yields a basis for a strictly smaller
/// monotonic set at the midpoint.
pub fn control_gamma_step(cert: &BasisCertificate, p: &Jet, field: &ShapeField, opts: RelabelOptions) -> Result<GammaStep, Error> {
    cert.shape_ok(field)?;
    let space = field.space.clone();
    let d = space.dim();
    let m = field.order() as i32;
    let delta = cert.delta;
    if cert.weak {
        return Err(Error::Precondition("the control step needs a full basis".into()));
    }
    if p.basepoint != cert.base.basepoint {
        return Err(Error::Input("P must be a jet at x₀".into()));
    }
    if !field.member(cert.point, slack(cert.c_b * cert.m0), p)? {
        return Err(Error::Precondition("P ∉ Γ(x₀, C_B M₀)".into()));
    }
    let diff = p.sub(&cert.base)?;
    let size = diff.max_abs().max(cert.base.max_abs()).max(1.0);
    for a in cert.set.positions() {
        if diff.derivs[a].abs() > IDENTITY_TOL * size {
            return Err(Error::Precondition(format!("P and P⁰ differ on 𝒜 at {a}")));
        }
    }
    let weighted: Vec<f64> = (0..d).map(|b| delta.powi(ord(&space, b)) * diff.derivs[b].abs()).collect();
    let top = weighted.iter().cloned().fold(0.0, f64::max);
    let need = cert.m0 * delta.powi(m);
    if top < need * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!(
            "max δ^|β| |∂^β(P − P⁰)| = {top:e} is below M₀δ^m = {need:e}"
        )));
    }
    let weight = need / top;
    let diff = diff.scale(weight);
    let mut gamma = 0;
    for b in 0..d {
        if weighted[b] > weighted[gamma] {
            gamma = b;
        }
    }
    if cert.set.contains(gamma) {
        return Err(Error::Precondition("the dominant derivative lies in 𝒜".into()));
    }
    let p_hat0 = cert.base.axpy(0.5, &diff)?;
    let p_gamma = diff.scale(1.0 / diff.derivs[gamma]);
    let mut enlarged = cert.set;
    enlarged.insert(gamma);
    let mut vectors = Vec::with_capacity(enlarged.len());
    for k in enlarged.positions() {
        if k == gamma {
            vectors.push(p_gamma.clone());
        } else {
            let v = cert.vector(k).expect("α in 𝒜");
            vectors.push(v.axpy(-v.derivs[gamma], &p_gamma)?);
        }
    }
    let mid = BasisCertificate {
        set: enlarged,
        delta,
        c_b: cert.c_b,
        point: cert.point,
        m0: cert.m0,
        base: p_hat0.clone(),
        vectors,
        weak: false,
    };
    let (mid, _) = verified(mid, field, "enlarged basis")?;
    let rel = relabel(&mid, field, opts)?;
    let hat = rel.cert.set;
    let shift = p_hat0.sub(&cert.base)?;
    let agree = cert.set.positions().iter().fold(0.0f64, |s, &a| s.max(shift.derivs[a].abs()));
    let bound = (0..d).fold(0.0f64, |s, b| {
        s.max(shift.derivs[b].abs() / (cert.m0 * delta.powi(m - ord(&space, b))))
    });
    let conclusions = vec![
        ConditionCheck {
            name: "monotonic".into(),
            passed: is_monotonic(&space, &hat),
            worst: 0.0,
        },
        ConditionCheck {
            name: "strictly_smaller".into(),
            passed: set_compare(&hat, &cert.set) == std::cmp::Ordering::Less,
            worst: 0.0,
        },
        ConditionCheck {
            name: "basis".into(),
            passed: rel.report.passed,
            worst: rel.cert.c_b,
        },
        ConditionCheck::identity("agreement", agree, size),
        ConditionCheck::bound("difference", bound),
    ];
    if let Some(bad) = conclusions.iter().find(|c| !c.passed) {
        return Err(Error::Verification {
            stage: "control step".into(),
            detail: format!("conclusion {} fails (worst {:e})", bad.name, bad.worst),
        });
    }
    Ok(GammaStep {
        hat_set: hat,
        p_hat0,
        gamma,
        weight,
        cert: rel.cert.clone(),
        relabel: rel,
        conclusions,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct TransportOptions {
    /// Admissible `|x₀ − y₀| / δ`.
    pub eps0: f64,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions { eps0: 1e-3 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TransportResult {
    /// `P̂^#` as a jet at `y₀`.
    pub p_sharp: Jet,
    /// Bases at `(y₀, M₀, P̂^#)` in the field one level down.
    pub cert: BasisCertificate,
    pub cert_hat: BasisCertificate,
    /// `max_{β∈𝒜} |∂^β(P̂^# − P⁰)(x₀)|`.
    pub agreement: f64,
    /// `max_β |∂^β(P̂^# − P⁰)(x₀)| / (M₀ δ^{m−|β|})`.
    pub c_prime: f64,
    /// Pivot ratio of the correction system, `1` when `𝒜 = ∅`.
    pub conditioning: f64,
    pub distance_ratio: f64,
    pub conclusions: Vec<ConditionCheck>,
}

/// Re-expresses a family of jets at `x₀` as a Kronecker basis at `y₀`:
/// `P^#_γ = Σ_α b_{γα} δ^{|γ|−|α|} P′_α` with `b` the inverse of
/// `(δ^{|β|−|α|} ∂^β P′_α(y₀))`.
fn normalise_at(space: &JetSpace, set: &IndexSet, primes: &[Jet], y: &[f64], delta: f64) -> Result<(Vec<Jet>, f64), Error> {
    let pos = set.positions();
    if pos.is_empty() {
        return Ok((Vec::new(), 1.0));
    }
    let moved: Vec<Jet> = primes.iter().map(|p| p.transport(y)).collect();
    let g: Vec<Vec<f64>> = pos
        .iter()
        .zip(&moved)
        .map(|(&a, p)| pos.iter().map(|&b| delta.powi(ord(space, b) - ord(space, a)) * p.derivs[b]).collect())
        .collect();
    let (b, cond) = invert(&g).map_err(|e| Error::Numeric(format!("basis normalisation at y₀: {e}")))?;
    let mut out = Vec::with_capacity(pos.len());
    for (gi, &gamma) in pos.iter().enumerate() {
        let mut acc = moved[0].scale(0.0);
        for (k, &a) in pos.iter().enumerate() {
            acc = acc.axpy(b[gi][k] * delta.powi(ord(space, gamma) - ord(space, a)), &moved[k])?;
        }
        out.push(acc);
    }
    Ok((out, cond))
}

/// Moves a pair of bases at `x₀` of a refined field to a nearby `y₀`, one
/// refinement level down, keeping agreement with `P⁰` on `𝒜`.
pub fn transport(
    cert: &BasisCertificate,
    cert_hat: &BasisCertificate,
    y0: usize,
    field: &ShapeField,
    opts: TransportOptions,
) -> Result<TransportResult, Error> {
    cert.shape_ok(field)?;
    cert_hat.shape_ok(field)?;
    let prev = field
        .prev
        .as_deref()
        .ok_or_else(|| Error::Precondition("transport needs a refined field (l₀ ≥ 1)".into()))?;
    let space = field.space.clone();
    let d = space.dim();
    let m = field.order() as i32;
    if cert.point != cert_hat.point || cert.m0 != cert_hat.m0 || cert.delta != cert_hat.delta {
        return Err(Error::Precondition("both bases must share x₀, M₀ and δ".into()));
    }
    if cert.weak || cert_hat.weak {
        return Err(Error::Precondition("transport needs full bases".into()));
    }
    if !is_monotonic(&space, &cert.set) {
        return Err(Error::Precondition("𝒜 is not monotonic".into()));
    }
    if y0 >= field.len() {
        return Err(Error::Input(format!("point {y0} outside E")));
    }
    let (m0, delta) = (cert.m0, cert.delta);
    let x0 = cert.base.basepoint.clone();
    let y = field.points[y0].clone();
    let distance_ratio = dist(&x0, &y) / delta;
    if distance_ratio > opts.eps0 {
        return Err(Error::Precondition(format!(
            "|x₀ − y₀|/δ = {distance_ratio:e} exceeds ε₀ = {:e}",
            opts.eps0
        )));
    }
    let gap = cert.base.sub(&cert_hat.base)?;
    let size = cert.base.max_abs().max(1.0);
    for a in cert.set.positions() {
        if gap.derivs[a].abs() > IDENTITY_TOL * size {
            return Err(Error::Precondition(format!("P⁰ and P̂⁰ differ on 𝒜 at {a}")));
        }
    }
    for (c, tag) in [(cert, "𝒜"), (cert_hat, "Â")] {
        let r = check_basis(c, field)?;
        if !r.passed {
            return Err(Error::Precondition(format!("the {tag}-basis fails {:?}", r.failed())));
        }
    }

    // Partners one level down at y₀ of every perturbed jet, brought back to x₀.
    let partner = |c: &BasisCertificate, k: usize, sigma: f64| -> Result<Jet, Error> {
        let jet = perturbed(c, c.c_b, k, sigma)?;
        Ok(field.refinement_partner(c.point, y0, slack(c.c_b * m0), &jet)?.transport(&x0))
    };
    let (p_prime, primes, hat_primes) = if cert.set.is_empty() && cert_hat.set.is_empty() {
        let q = field.refinement_partner(cert.point, y0, slack(cert.c_b * m0), &cert.base)?;
        (q.transport(&x0), Vec::new(), Vec::new())
    } else {
        let mut sum = Jet::zero(space.clone(), &x0);
        let mut count = 0.0;
        let mut lists = [Vec::new(), Vec::new()];
        for (c, list) in [cert, cert_hat].into_iter().zip(lists.iter_mut()) {
            for (k, &a) in c.set.positions().iter().enumerate() {
                let h = m0 * delta.powi(m - ord(&space, a)) / c.c_b;
                let plus = partner(c, k, 1.0)?;
                let minus = partner(c, k, -1.0)?;
                sum = sum.add(&plus)?.add(&minus)?;
                count += 2.0;
                // P′_α = P_α + ½(E₊ + E₋) = (T P̃₊ − T P̃₋) / (2h).
                list.push(plus.sub(&minus)?.scale(0.5 / h));
            }
        }
        let [primes, hat_primes] = lists;
        (sum.scale(1.0 / count), primes, hat_primes)
    };

    let pos = cert.set.positions();
    let (p_sharp_x0, conditioning) = if pos.is_empty() {
        (p_prime.clone(), 1.0)
    } else {
        let lhs: Vec<Vec<f64>> = pos
            .iter()
            .map(|&b| pos.iter().zip(&primes).map(|(&a, p)| delta.powi(ord(&space, b) - ord(&space, a)) * p.derivs[b]).collect())
            .collect();
        let shift = p_prime.sub(&cert.base)?;
        let rhs: Vec<f64> = pos
            .iter()
            .map(|&b| -delta.powi(ord(&space, b) - m) * shift.derivs[b] / m0)
            .collect();
        let (_, cond) = invert(&lhs).map_err(|e| Error::Numeric(format!("correction system singular, ε₀ too large? {e}")))?;
        let aug: Vec<Vec<f64>> = lhs.iter().zip(&rhs).map(|(r, v)| r.iter().cloned().chain([*v]).collect()).collect();
        let s = solve_augmented(aug)?;
        let mut out = p_prime.clone();
        for ((&a, p), sa) in pos.iter().zip(&primes).zip(&s) {
            out = out.axpy(sa * m0 * delta.powi(m - ord(&space, a)), p)?;
        }
        (out, cond)
    };

    let (vecs, c1) = normalise_at(&space, &cert.set, &primes, &y, delta)?;
    let (hat_vecs, c2) = normalise_at(&space, &cert_hat.set, &hat_primes, &y, delta)?;
    let p_sharp = p_sharp_x0.transport(&y);
    let build = |set: IndexSet, vectors: Vec<Jet>| BasisCertificate {
        set,
        delta,
        c_b: 1.0,
        point: y0,
        m0,
        base: p_sharp.clone(),
        vectors,
        weak: false,
    };
    let (new_cert, rep_a) = verified(build(cert.set, vecs), prev, "transported 𝒜-basis")?;
    let (new_hat, rep_h) = verified(build(cert_hat.set, hat_vecs), prev, "transported Â-basis")?;

    let shift = p_sharp_x0.sub(&cert.base)?;
    let agreement = pos.iter().fold(0.0f64, |s, &a| s.max(shift.derivs[a].abs()));
    let c_prime = (0..d).fold(0.0f64, |s, b| s.max(shift.derivs[b].abs() / (m0 * delta.powi(m - ord(&space, b)))));
    let conclusions = vec![
        ConditionCheck {
            name: "bases".into(),
            passed: rep_a.passed && rep_h.passed,
            worst: new_cert.c_b.max(new_hat.c_b),
        },
        ConditionCheck::identity("agreement", agreement, size),
        ConditionCheck {
            name: "difference".into(),
            passed: c_prime.is_finite(),
            worst: c_prime,
        },
    ];
    if let Some(bad) = conclusions.iter().find(|c| !c.passed) {
        return Err(Error::Verification {
            stage: "transport".into(),
            detail: format!("conclusion {} fails (worst {:e})", bad.name, bad.worst),
        });
    }
    Ok(TransportResult {
        p_sharp,
        cert: new_cert,
        cert_hat: new_hat,
        agreement,
        c_prime,
        conditioning: conditioning.min(c1).min(c2),
        distance_ratio,
        conclusions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box_field(points: Vec<Vec<f64>>, degree: u32) -> ShapeField {
        let n = points[0].len();
        let d = JetSpace::get(n, degree).dim();
        let mut poly = crate::polytope::HPolytope::new(d);
        for k in 0..d {
            let mut a = vec![0.0; d];
            a[k] = 1.0;
            poly.push_abs(a, 0.0, 0.0, 1.0);
        }
        let polys = points.iter().map(|_| poly.clone()).collect();
        ShapeField::custom(points, polys, degree + 1).unwrap()
    }

    #[test]
    fn rescale_single_row_example() {
        let space = JetSpace::get(1, 1);
        let set = IndexSet::from_positions(&[0]);
        let r = rescale(&[vec![1.0, 10.0]], &set, &space, 0.1, 100.0).unwrap();
        assert!(r.lambda[0] <= 0.01);
        assert_eq!(r.exponents, vec![7]);
        assert_eq!(r.phi, vec![(0, 0)]);
        assert!(10.0 * r.lambda[0] <= 0.1);
    }

    #[test]
    fn rescale_diagonal_is_identity() {
        let space = JetSpace::get(2, 1);
        let set = IndexSet::from_positions(&[0, 2]);
        let f = vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 3.0]];
        let r = rescale(&f, &set, &space, 0.5, 10.0).unwrap();
        assert_eq!(r.lambda, vec![1.0, 1.0]);
        assert_eq!(r.phi, vec![(0, 0), (2, 2)]);
        let empty = rescale(&[], &IndexSet::empty(), &space, 0.5, 10.0).unwrap();
        assert!(empty.phi.is_empty());
    }

    #[test]
    fn empty_set_basis_is_membership() {
        let field = box_field(vec![vec![0.0]], 1);
        let inside = Jet::from_derivs(field.space.clone(), &[0.0], vec![0.5, -0.5]);
        let cert = BasisCertificate {
            set: IndexSet::empty(),
            delta: 1.0,
            c_b: 1.0,
            point: 0,
            m0: 1.0,
            base: inside.clone(),
            vectors: Vec::new(),
            weak: false,
        };
        assert!(check_basis(&cert, &field).unwrap().passed);
        let outside = BasisCertificate {
            base: inside.scale(4.0),
            ..cert
        };
        let r = check_basis(&outside, &field).unwrap();
        assert!(!r.passed);
        assert_eq!(r.failed(), vec!["pb1"]);
        assert_eq!(r.measured_c_b, Some(2.0));
    }

    #[test]
    fn certificate_json_round_trip() {
        let field = box_field(vec![vec![0.0]], 1);
        let q = BasisQuery {
            field: &field,
            point: 0,
            m0: 1.0,
            delta: 1.0,
            c_b: 4.0,
            set: IndexSet::from_positions(&[1]),
            weak: false,
            anchor: None,
            base: None,
        };
        let cert = weak_basis_at(&q).unwrap().unwrap();
        let back = BasisCertificate::from_json(&cert.to_json()).unwrap();
        assert_eq!(back.set, cert.set);
        assert_eq!(back.vectors, cert.vectors);
        assert!(check_basis(&back, &field).unwrap().passed);
    }
}
