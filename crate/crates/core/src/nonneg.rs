//! Certified tests for `P(x+z) + M|z|^m ≥ 0 for all z`, plus the dyadic
//! correction coefficients used by the `C^m` witness.

use serde::{Deserialize, Serialize};

use crate::jet::Jet;
use crate::Error;

/// Which nonnegative-interpolation norm the field models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Flavor {
    #[serde(rename = "Cm")]
    Cm,
    #[serde(rename = "Cm11")]
    Cm11,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Member,
    NonMember,
    Undecided,
}

/// Minimum of the regularised polynomial with the point attaining it.
#[derive(Clone, Debug, Serialize)]
pub struct RegularizedMin {
    /// Certified lower bound on `inf_z Q(z)`.
    pub lower_bound: f64,
    /// Offset `z` with `Q(z)` close to the infimum (useful as a cutting plane).
    pub argmin: Vec<f64>,
    /// `Q(argmin)`; an upper bound on the infimum.
    pub value: f64,
    pub method: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayCheck {
    pub b: Vec<f64>,
    /// `b_k · 2^{mk}` over the last scales examined.
    pub tail: Vec<f64>,
    pub consistent: bool,
    /// Always true: a finite truncation cannot decide a limit.
    pub heuristic: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct NonnegCert {
    pub decision: Decision,
    pub box_ok: bool,
    pub min: RegularizedMin,
    pub tolerance: f64,
    pub decay: Option<DecayCheck>,
}

/// Default number of dyadic scales in the `C^m` witness.
pub const K_DYADIC: usize = 40;

fn horner(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * t + v)
}

fn derivative(c: &[f64]) -> Vec<f64> {
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(k, v)| v * k as f64)
        .collect()
}

fn trim(c: &[f64]) -> Vec<f64> {
    let scale = c.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let mut out = c.to_vec();
    while out.len() > 1 && out.last().is_some_and(|v| v.abs() <= 1e-15 * scale) {
        out.pop();
    }
    out
}

/// Real roots of a polynomial on `[lo, hi]`, isolated between critical points
/// and refined by bisection.
pub(crate) fn real_roots(c: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let c = trim(c);
    if c.len() <= 1 {
        return Vec::new();
    }
    let deg = c.len() - 1;
    if deg == 1 {
        let r = -c[0] / c[1];
        return if r >= lo && r <= hi { vec![r] } else { Vec::new() };
    }
    let mut breaks = vec![lo];
    breaks.extend(real_roots(&derivative(&c), lo, hi));
    breaks.push(hi);
    let mut roots = Vec::new();
    for w in breaks.windows(2) {
        let (mut a, mut b) = (w[0], w[1]);
        let (fa, fb) = (horner(&c, a), horner(&c, b));
        if fa == 0.0 {
            roots.push(a);
            continue;
        }
        if fa.signum() == fb.signum() {
            continue;
        }
        let sa = fa.signum();
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if horner(&c, mid).signum() == sa {
                a = mid;
            } else {
                b = mid;
            }
        }
        roots.push(0.5 * (a + b));
    }
    if horner(&c, hi) == 0.0 {
        roots.push(hi);
    }
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + a.abs()));
    roots
}

/// Minimum of a polynomial on `[0, hi]` (`hi = ∞` allowed). Returns
/// `(value, t)`; value is `−∞` when unbounded below.
pub(crate) fn min_on_halfline(c: &[f64], hi: f64) -> (f64, f64) {
    let mut c = trim(c);
    if c.is_empty() {
        c.push(0.0);
    }
    let deg = c.len() - 1;
    let mut hi = hi;
    if hi.is_infinite() {
        let lead = c[deg];
        if deg > 0 && lead < 0.0 {
            let t = 1e6_f64.max(1.0);
            return (f64::NEG_INFINITY, t);
        }
        if deg == 0 {
            return (c[0], 0.0);
        }
        // Beyond the Cauchy bound of q' the polynomial increases.
        let d = derivative(&c);
        let dd = trim(&d);
        let lead_d = *dd.last().expect("nonempty");
        let bound = 1.0
            + dd[..dd.len() - 1]
                .iter()
                .fold(0.0f64, |s, v| s.max((v / lead_d).abs()));
        hi = bound;
    }
    let mut best = (horner(&c, 0.0), 0.0);
    let mut consider = |t: f64| {
        let v = horner(&c, t);
        if v < best.0 {
            best = (v, t);
        }
    };
    consider(hi);
    let d = derivative(&c);
    for t in real_roots(&d, 0.0, hi) {
        consider(t);
    }
    best
}

/// Coefficients in `t` of `P(x + t·u)` for a direction `u`.
fn ray_coefficients(p: &Jet, u: &[f64]) -> Vec<f64> {
    let deg = p.degree() as usize;
    let mut c = vec![0.0; deg + 1];
    for (a, v) in p.space.indices.iter().zip(&p.derivs) {
        c[a.order() as usize] += v * a.monomial(u) / a.factorial();
    }
    c
}

fn is_affine(p: &Jet) -> bool {
    p.space
        .indices
        .iter()
        .zip(&p.derivs)
        .all(|(a, v)| a.order() <= 1 || *v == 0.0)
}

/// `inf_z P(x+z) + scale·|z|^m` restricted to `|z| ≤ radius`.
pub fn regularized_min(p: &Jet, scale: f64, m: u32, radius: f64) -> Result<RegularizedMin, Error> {
    let n = p.n();
    let mut reg = vec![0.0; m as usize + 1];
    reg[m as usize] = scale;
    let with_reg = |mut c: Vec<f64>| {
        if c.len() < reg.len() {
            c.resize(reg.len(), 0.0);
        }
        for (a, b) in c.iter_mut().zip(&reg) {
            *a += b;
        }
        c
    };
    if n == 1 {
        let mut best: Option<(f64, f64)> = None;
        for s in [1.0, -1.0] {
            let c = with_reg(ray_coefficients(p, &[s]));
            let (v, t) = min_on_halfline(&c, radius);
            if best.is_none_or(|b| v < b.0) {
                best = Some((v, s * t));
            }
        }
        let (v, t) = best.expect("two rays");
        return Ok(RegularizedMin {
            lower_bound: v,
            argmin: vec![t],
            value: v,
            method: "root isolation".into(),
        });
    }
    if is_affine(p) {
        let g: Vec<f64> = (0..n)
            .map(|i| p.deriv(&crate::MultiIndex::unit(n, i)))
            .collect();
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let c = with_reg(vec![p.value(), -gn]);
        let (v, t) = min_on_halfline(&c, radius);
        let dir: Vec<f64> = if gn > 0.0 {
            g.iter().map(|x| -x / gn).collect()
        } else {
            let mut e = vec![0.0; n];
            e[0] = 1.0;
            e
        };
        return Ok(RegularizedMin {
            lower_bound: v,
            argmin: dir.iter().map(|d| d * t).collect(),
            value: v,
            method: "affine reduction".into(),
        });
    }
    if n != 2 {
        return Err(Error::Unsupported(format!(
            "certified nonnegativity for non-affine jets in dimension {n}"
        )));
    }
    ray_scan(p, &reg, radius)
}

/// Angular scan for `n = 2`: the per-ray minimum minus an angular slack gives
/// a lower bound; rays are doubled until the gap closes.
fn ray_scan(p: &Jet, reg: &[f64], radius: f64) -> Result<RegularizedMin, Error> {
    let deg = p.degree() as usize;
    // |c_α|·|α| per order, used for the angular Lipschitz slack.
    let mut slack = vec![0.0; deg.max(reg.len() - 1) + 1];
    for (a, v) in p.space.indices.iter().zip(&p.derivs) {
        let k = a.order() as usize;
        slack[k] += (v / a.factorial()).abs() * k as f64;
    }
    let mut rays = 64usize;
    let mut last = None;
    while rays <= 1 << 16 {
        let dtheta = 2.0 * std::f64::consts::PI / rays as f64;
        let mut lower = f64::INFINITY;
        let mut best = (f64::INFINITY, vec![0.0, 0.0]);
        for j in 0..rays {
            let th = j as f64 * dtheta;
            let u = [th.cos(), th.sin()];
            let mut c = ray_coefficients(p, &u);
            c.resize(slack.len(), 0.0);
            for (a, b) in c.iter_mut().zip(reg) {
                *a += b;
            }
            let (v, t) = min_on_halfline(&c, radius);
            if v < best.0 {
                best = (v, vec![t * u[0], t * u[1]]);
            }
            let lc: Vec<f64> = c
                .iter()
                .zip(&slack)
                .map(|(a, s)| a - 0.5 * dtheta * s)
                .collect();
            lower = lower.min(min_on_halfline(&lc, radius).0);
        }
        let scale = 1.0 + p.max_abs();
        let out = RegularizedMin {
            lower_bound: lower,
            argmin: best.1.clone(),
            value: best.0,
            method: format!("ray scan ({rays} rays)"),
        };
        if best.0 < -1e-12 * scale || lower >= -1e-12 * scale {
            return Ok(out);
        }
        last = Some(out);
        rays *= 2;
    }
    Ok(last.expect("at least one pass"))
}

/// `b_k = max(0, −min_{|z| ≤ 2^{−k}} P(x+z))` for `k = 0..=k_max`.
pub fn dyadic_coefficients(p: &Jet, k_max: usize) -> Result<Vec<f64>, Error> {
    (0..=k_max)
        .map(|k| {
            let r = 0.5f64.powi(k as i32);
            regularized_min(p, 0.0, 1, r).map(|mn| (-mn.lower_bound).max(0.0))
        })
        .collect()
}

/// Certified decision on `|∂^β P(x)| ≤ M` and `P(x+z) + M|z|^m ≥ 0`; the `C^m`
/// flavor also runs the truncated decay test on `b_k`.
pub fn nonneg_member(p: &Jet, scale: f64, m: u32, flavor: Flavor) -> Result<NonnegCert, Error> {
    let tol = 1e-12 * (1.0 + p.max_abs() + scale);
    let box_ok = p.derivs.iter().all(|v| v.abs() <= scale + tol);
    let min = regularized_min(p, scale, m, f64::INFINITY)?;
    let mut decision = if min.value < -tol {
        Decision::NonMember
    } else if min.lower_bound >= -tol {
        Decision::Member
    } else {
        Decision::Undecided
    };
    if !box_ok {
        decision = Decision::NonMember;
    }
    let decay = if flavor == Flavor::Cm {
        let b = dyadic_coefficients(p, K_DYADIC)?;
        let tail: Vec<f64> = (K_DYADIC - 3..=K_DYADIC)
            .map(|k| b[k] * 2f64.powi((m as usize * k) as i32))
            .collect();
        let consistent = tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + tol);
        if !consistent && decision == Decision::Member {
            decision = Decision::NonMember;
        }
        Some(DecayCheck {
            b,
            tail,
            consistent,
            heuristic: true,
        })
    } else {
        None
    };
    Ok(NonnegCert {
        decision,
        box_ok,
        min,
        tolerance: tol,
        decay,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::JetSpace;

    fn jet1(d: &[f64]) -> Jet {
        Jet::from_derivs(JetSpace::get(1, d.len() as u32 - 1), &[0.0], d.to_vec())
    }

    #[test]
    fn spec_examples() {
        let c = nonneg_member(&jet1(&[0.25, 1.0]), 1.0, 2, Flavor::Cm11).unwrap();
        assert_eq!(c.decision, Decision::Member);
        let c = nonneg_member(&jet1(&[0.2, 1.0]), 1.0, 2, Flavor::Cm11).unwrap();
        assert_eq!(c.decision, Decision::NonMember);
        assert!((c.min.value + 0.05).abs() < 1e-12);
        let c = nonneg_member(&jet1(&[0.0, 0.0]), 1.0, 2, Flavor::Cm).unwrap();
        assert_eq!(c.decision, Decision::Member);
        assert!(c.decay.unwrap().b.iter().all(|&b| b == 0.0));
        let c = nonneg_member(&jet1(&[0.0, 0.3]), 1.0, 2, Flavor::Cm11).unwrap();
        assert_eq!(c.decision, Decision::NonMember);
    }

    #[test]
    fn cubic_regulariser() {
        // 0.1 − z + z²/2·0 + |z|³ attains its minimum at z = 1/√3
        let c = nonneg_member(&jet1(&[0.5, -1.0, 0.0]), 1.0, 3, Flavor::Cm11).unwrap();
        let want = 0.5 - 1.0 / 3f64.sqrt() + (1.0 / 3f64.sqrt()).powi(3);
        assert!((c.min.value - want).abs() < 1e-12);
        assert_eq!(c.decision, Decision::Member);
    }

    #[test]
    fn two_dimensional_cases() {
        let sp = JetSpace::get(2, 1);
        // a + g·z + |z|²: min a − |g|²/4
        let p = Jet::from_derivs(sp, &[1.0, 1.0], vec![0.5, 0.6, 0.8]);
        let c = nonneg_member(&p, 1.0, 2, Flavor::Cm11).unwrap();
        assert!((c.min.value - 0.25).abs() < 1e-12);
        let sp2 = JetSpace::get(2, 2);
        // z1² − z2²/2 ... negative along z2 for small |z|
        let p = Jet::from_derivs(sp2.clone(), &[0.0, 0.0], vec![0.0, 0.0, 0.0, 0.0, 0.0, -0.5]);
        let idx = sp2.indices.iter().position(|a| a.0 == vec![0, 2]).unwrap();
        let mut d = vec![0.0; 6];
        d[idx] = -0.5;
        let p = Jet { derivs: d, ..p };
        let c = nonneg_member(&p, 1.0, 3, Flavor::Cm11).unwrap();
        assert_eq!(c.decision, Decision::NonMember);
        let mut d = vec![0.0; 6];
        d[0] = 0.3;
        d[idx] = 0.2;
        let p = Jet { derivs: d, ..p };
        assert_eq!(
            nonneg_member(&p, 1.0, 3, Flavor::Cm11).unwrap().decision,
            Decision::Member
        );
    }

    #[test]
    fn dyadic_coefficients_vanish_for_positive_jets() {
        let b = dyadic_coefficients(&jet1(&[0.1, -1.0]), 10).unwrap();
        assert!((b[0] - 0.9).abs() < 1e-12);
        assert!(b[5] == 0.0 && b[10] == 0.0);
    }
}
