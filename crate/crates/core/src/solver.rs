//! Minimal-scale Whitney field solves, global solutions, vector selection by
//! lifting, finiteness scans and level tables for the finiteness sets.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::cz::{grid, whitney_extend, ExtendMode, Extension};
use crate::field::{fp_all_sets, fp_budget, fp_joint, gamma_fp, gamma_fp_levels, whitney_system, FpLevel, FpOptions, RefineMode, ShapeField};
use crate::instance::{Arithmetic, Constraint, Instance, Mode};
use crate::jet::{Jet, WhitneyField};
use crate::multi_index::{JetSpace, MultiIndex};
use crate::scalar::{Rational, Scalar};
use crate::util::{choose, combinations};
use crate::whitney::{add_box_rows, add_taylor_rows, extract_jet, Outcome, Scale, System};
use crate::Error;

/// Level-0 field of a scalar instance: interpolation or nonnegative
/// interpolation. Vector instances use [`lift_instance`].
pub fn scalar_field(inst: &Instance) -> Result<ShapeField, Error> {
    match inst.mode()? {
        Mode::Scalar { nonneg: false } => ShapeField::interp(inst.xs(), &inst.values(), inst.config.m),
        Mode::Scalar { nonneg: true } => {
            ShapeField::nonneg(inst.xs(), &inst.values(), inst.config.m, inst.config.flavor)
        }
        Mode::Vector => Err(Error::Unsupported("vector instances have no scalar field".into())),
    }
}

/// Optimal Whitney field on a subset.
#[derive(Clone, Debug, Serialize)]
pub struct SubsetSolution {
    pub subset: Vec<usize>,
    pub m: f64,
    /// Per point of the subset, one jet per component.
    pub jets: Vec<Vec<Jet>>,
    pub certified: bool,
}

fn solve_min<T: Scalar>(sys: &System<T>) -> Result<Option<(Vec<f64>, f64, bool)>, Error> {
    Ok(match sys.solve(Scale::Minimize)? {
        Outcome::Feasible(s) => Some((s.z.iter().map(|v| v.to_f64()).collect(), s.scale.to_f64(), s.certified)),
        Outcome::Infeasible => None,
    })
}

/// Scalar LP: one jet per point, `Γ₀` membership and pairwise Taylor rows.
fn scalar_system<T: Scalar>(field: &ShapeField, subset: &[usize]) -> (System<T>, Vec<usize>) {
    let mut sys = System::<T>::new();
    let offs = whitney_system(field, subset, &mut sys);
    (sys, offs)
}

/// Vector LP: `D` jets per point with box and Taylor rows per component
/// (max norm over components) and the value vector in `K(x)`.
fn vector_system<T: Scalar>(inst: &Instance, subset: &[usize]) -> (System<T>, Vec<Vec<usize>>) {
    let space = JetSpace::get(inst.config.n, inst.config.m - 1);
    let dim = space.dim();
    let dd = inst.config.d;
    let mut sys = System::<T>::new();
    let offs: Vec<Vec<usize>> = subset.iter().map(|_| (0..dd).map(|_| sys.add_vars(dim)).collect()).collect();
    let one = T::one();
    for (a, &i) in subset.iter().enumerate() {
        for &off in &offs[a] {
            add_box_rows(&mut sys, dim, off, &one);
        }
        if let Constraint::Target(k) = &inst.points[i].constraint {
            for r in &k.rows {
                let row = r
                    .a
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(c, v)| (offs[a][c], T::from_f64(*v)))
                    .collect();
                sys.add_le(row, T::from_f64(r.b0), T::from_f64(r.b1));
            }
        }
        for (b, &j) in subset.iter().enumerate() {
            if a == b {
                continue;
            }
            for c in 0..dd {
                add_taylor_rows(
                    &mut sys,
                    &space,
                    inst.config.m,
                    &inst.points[i].x,
                    offs[a][c],
                    &inst.points[j].x,
                    offs[b][c],
                    &one,
                );
            }
        }
    }
    (sys, offs)
}

/// Minimal `M` admitting a Whitney field on `subset` with seminorm `≤ M` and
/// every jet in `Γ₀(x, M)`; `None` when no scale (or none under the cap) works.
pub fn min_m_subset(inst: &Instance, subset: &[usize]) -> Result<Option<SubsetSolution>, Error> {
    if subset.is_empty() {
        return Err(Error::Input("empty subset".into()));
    }
    let exact = inst.options.arithmetic == Arithmetic::Exact;
    let space = JetSpace::get(inst.config.n, inst.config.m - 1);
    let raw = match inst.mode()? {
        Mode::Vector => {
            let res = if exact {
                let (sys, offs) = vector_system::<Rational>(inst, subset);
                solve_min(&sys)?.map(|r| (r, offs))
            } else {
                let (sys, offs) = vector_system::<f64>(inst, subset);
                solve_min(&sys)?.map(|r| (r, offs))
            };
            res.map(|((z, m, cert), offs)| {
                let jets = subset
                    .iter()
                    .zip(&offs)
                    .map(|(&i, os)| os.iter().map(|&o| extract_jet(&z, space.clone(), &inst.points[i].x, o)).collect())
                    .collect();
                (m, jets, cert)
            })
        }
        Mode::Scalar { nonneg } => {
            let field = scalar_field(inst)?;
            // Nonnegativity rows are not linear; exact arithmetic covers the
            // polytopal part only, so the cut loop always runs in floats.
            let res = if exact && !nonneg {
                let (sys, offs) = scalar_system::<Rational>(&field, subset);
                solve_min(&sys)?.map(|r| (r, offs))
            } else {
                let (sys, offs) = scalar_system::<f64>(&field, subset);
                solve_min(&sys)?.map(|r| (r, offs))
            };
            res.map(|((z, m, cert), offs)| {
                let jets = subset
                    .iter()
                    .zip(&offs)
                    .map(|(&i, &o)| vec![extract_jet(&z, space.clone(), &inst.points[i].x, o)])
                    .collect();
                (m, jets, cert)
            })
        }
    };
    Ok(match raw {
        Some((m, jets, certified)) => {
            let m = m.max(0.0);
            match inst.options.guards.m_cap {
                Some(cap) if m > cap => None,
                _ => Some(SubsetSolution {
                    subset: subset.to_vec(),
                    m,
                    jets,
                    certified,
                }),
            }
        }
        None => None,
    })
}

/// Largest minimal scale among the subsets of one size.
#[derive(Clone, Debug, Serialize)]
pub struct SizeRow {
    pub size: usize,
    pub subsets: usize,
    /// `∞` (serialised as `null`) when some subset is infeasible.
    pub m_max: Option<f64>,
    pub argmax: Vec<usize>,
    pub m_min: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FinitenessReport {
    pub k: usize,
    pub m_k: Option<f64>,
    pub m_global: Option<f64>,
    pub ratio: Option<f64>,
    pub critical_subset: Vec<usize>,
    pub sizes: Vec<SizeRow>,
    /// Global problem infeasible while every subset up to `k` is feasible.
    pub contradiction: bool,
    /// `√D` factor between the max-norm LP and the Euclidean norm.
    pub norm_factor: f64,
    #[serde(skip)]
    pub elapsed: Duration,
}

fn thread_pool() -> Result<rayon::ThreadPool, Error> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = crate::configured_threads() {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Numeric(format!("thread pool: {e}")))
}

/// Minimal scales of every subset of size `≤ k`, in lexicographic order.
pub fn finiteness_scan(inst: &Instance, k_max: usize) -> Result<FinitenessReport, Error> {
    let start = Instant::now();
    let len = inst.points.len();
    let k = k_max.clamp(1, len);
    let total: usize = (1..=k).map(|s| choose(len, s)).fold(0usize, |a, b| a.saturating_add(b));
    if total > inst.options.guards.enumeration {
        return Err(Error::Guard(format!(
            "{total} subsets exceed the enumeration budget {}",
            inst.options.guards.enumeration
        )));
    }
    let pool = thread_pool()?;
    let mut sizes = Vec::with_capacity(k);
    for s in 1..=k {
        let combos = combinations(len, s);
        let ms: Vec<Result<Option<f64>, Error>> =
            pool.install(|| combos.par_iter().map(|c| Ok(min_m_subset(inst, c)?.map(|r| r.m))).collect());
        let mut m_max: Option<f64> = Some(f64::NEG_INFINITY);
        let mut m_min = f64::INFINITY;
        let mut argmax = Vec::new();
        for (c, m) in combos.iter().zip(ms) {
            match (m?, m_max) {
                (None, Some(_)) => {
                    m_max = None;
                    argmax = c.clone();
                }
                (Some(v), Some(cur)) => {
                    m_min = m_min.min(v);
                    if v > cur {
                        m_max = Some(v);
                        argmax = c.clone();
                    }
                }
                (Some(v), None) => m_min = m_min.min(v),
                (None, None) => {}
            }
        }
        sizes.push(SizeRow {
            size: s,
            subsets: combos.len(),
            m_max,
            argmax,
            m_min: m_min.is_finite().then_some(m_min),
        });
    }
    // M_k is the running maximum over sizes; an infeasible size poisons it.
    let mut m_k = Some(0.0f64);
    let mut critical = Vec::new();
    for row in &sizes {
        match (row.m_max, m_k) {
            (None, Some(_)) => {
                m_k = None;
                critical = row.argmax.clone();
            }
            (Some(v), Some(cur)) if v > cur || critical.is_empty() => {
                m_k = Some(v.max(cur));
                critical = row.argmax.clone();
            }
            _ => {}
        }
    }
    let all: Vec<usize> = (0..len).collect();
    let m_global = if k == len {
        sizes.last().and_then(|r| r.m_max)
    } else {
        min_m_subset(inst, &all)?.map(|r| r.m)
    };
    let ratio = match (m_global, m_k) {
        (Some(g), Some(mk)) if mk > 0.0 => Some(g / mk),
        (Some(g), Some(_)) if g == 0.0 => Some(1.0),
        (Some(_), Some(_)) => Some(f64::INFINITY),
        _ => None,
    };
    Ok(FinitenessReport {
        k,
        m_k,
        m_global,
        ratio,
        critical_subset: critical,
        sizes,
        contradiction: m_global.is_none() && m_k.is_some(),
        norm_factor: (inst.config.d as f64).sqrt(),
        elapsed: start.elapsed(),
    })
}

/// `min(dim P + 2, |E|)`.
pub fn default_k(inst: &Instance) -> usize {
    let dim = JetSpace::get(inst.config.n, inst.config.m - 1).dim();
    (dim + 2).min(inst.points.len())
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveDiagnostics {
    pub m_star: f64,
    pub certified: bool,
    /// `max |∂^β F|` over the sample grid and the data points.
    pub norm: f64,
    pub ratio: f64,
    /// Largest deviation of the glued jets from the optimal field at `E`.
    pub data_residual: f64,
    /// Worst constraint violation at `E` (equality error or target excess).
    pub constraint_residual: f64,
    pub grid_min: f64,
    pub pou_residual: f64,
    pub samples: usize,
    pub leaves: usize,
    pub norm_factor: f64,
}

pub struct GlobalSolution {
    pub field: SubsetSolution,
    /// One extension per component.
    pub extensions: Vec<Extension>,
    pub diagnostics: SolveDiagnostics,
}

impl GlobalSolution {
    /// `F(z)` componentwise.
    pub fn value(&self, z: &[f64]) -> Result<Vec<f64>, Error> {
        self.extensions.iter().map(|e| Ok(e.jet(z)?.value())).collect()
    }
}

/// Sample grid over the extension region with `per_axis` points per axis.
pub fn sample_grid(ext: &Extension, per_axis: usize) -> Vec<Vec<f64>> {
    let (lo, hi) = ext.tree.region.bounds();
    grid(&lo, &hi, per_axis.max(2))
}

/// Minimal field on all of `E`, glued into a global function and verified
/// against the constraints.
pub fn solve_global(inst: &Instance) -> Result<GlobalSolution, Error> {
    let all: Vec<usize> = (0..inst.points.len()).collect();
    let sol = min_m_subset(inst, &all)?.ok_or_else(|| Error::Infeasible("no Whitney field at any admissible scale".into()))?;
    let mode = inst.mode()?;
    let components = inst.config.d;
    let mut extensions = Vec::with_capacity(components);
    for c in 0..components {
        let jets: Vec<Jet> = sol.jets.iter().map(|js| js[c].clone()).collect();
        let wf = WhitneyField::new(jets)?;
        let ext_mode = match mode {
            Mode::Scalar { nonneg: true } => ExtendMode::Nonneg {
                flavor: inst.config.flavor,
                scale: sol.m,
            },
            _ => ExtendMode::Plain,
        };
        extensions.push(whitney_extend(&wf, ext_mode)?);
    }
    let samples = sample_grid(&extensions[0], inst.options.grid);
    let pool = thread_pool()?;
    let mut norm = 0.0f64;
    let mut grid_min = f64::INFINITY;
    let mut pou = 0.0f64;
    let mut data = 0.0f64;
    for e in &extensions {
        let st = pool.install(|| e.stats(&samples))?;
        norm = norm.max(st.sup_jet).max(st.sup_top);
        grid_min = grid_min.min(st.min_value);
        pou = pou.max(st.pou_residual);
        data = data.max(e.data_residual()?);
        for p in &inst.points {
            let j = e.jet(&p.x)?;
            norm = norm.max(j.max_abs());
        }
    }
    let mut residual = 0.0f64;
    for p in &inst.points {
        let v: Vec<f64> = extensions.iter().map(|e| e.jet(&p.x).map(|j| j.value())).collect::<Result<_, _>>()?;
        match &p.constraint {
            Constraint::Equality(f) | Constraint::Nonneg(f) => residual = residual.max((v[0] - f).abs()),
            Constraint::Target(k) => {
                for r in &k.rows {
                    let lhs: f64 = r.a.iter().zip(&v).map(|(a, b)| a * b).sum();
                    residual = residual.max(lhs - r.b0 - r.b1 * sol.m);
                }
            }
        }
    }
    let ratio = if sol.m > 0.0 {
        norm / sol.m
    } else if norm == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    let diagnostics = SolveDiagnostics {
        m_star: sol.m,
        certified: sol.certified,
        norm,
        ratio,
        data_residual: data,
        constraint_residual: residual,
        grid_min,
        pou_residual: pou,
        samples: samples.len(),
        leaves: extensions[0].tree.leaves.len(),
        norm_factor: (components as f64).sqrt(),
    };
    let fail = |what: &str| Error::Verification {
        stage: "solve_global".into(),
        detail: what.into(),
    };
    match mode {
        Mode::Vector if residual > 1e-8 => return Err(fail(&format!("target excess {residual:e} at E"))),
        Mode::Scalar { .. } if residual > 1e-8 => return Err(fail(&format!("data error {residual:e} at E"))),
        Mode::Scalar { nonneg: true } if grid_min < -1e-9 => {
            return Err(fail(&format!("grid minimum {grid_min:e} is negative")))
        }
        _ => {}
    }
    Ok(GlobalSolution {
        field: sol,
        extensions,
        diagnostics,
    })
}

/// Scalar reformulation of a vector instance on `E × {0} ⊂ ℝ^{n+D}`.
pub struct Lifted {
    pub field: ShapeField,
    pub n: usize,
    pub d: usize,
    pub m: u32,
}

pub fn lift_instance(inst: &Instance) -> Result<Lifted, Error> {
    if inst.mode()? != Mode::Vector {
        return Err(Error::Input("lifting needs target constraints".into()));
    }
    Ok(Lifted {
        field: ShapeField::lifted(&inst.xs(), &inst.targets(), inst.config.m)?,
        n: inst.config.n,
        d: inst.config.d,
        m: inst.config.m,
    })
}

impl Lifted {
    /// `P(x, ξ) = Σ ξ_i P_i(x)` as a jet at `(x, 0)`.
    pub fn lift(&self, comps: &[Jet]) -> Result<Jet, Error> {
        if comps.len() != self.d {
            return Err(Error::Input("one jet per component required".into()));
        }
        let x = &comps[0].basepoint;
        let space = self.field.space.clone();
        let mut base = x.clone();
        base.extend(std::iter::repeat_n(0.0, self.d));
        let mut out = Jet::zero(space.clone(), &base);
        for (k, idx) in space.indices.iter().enumerate() {
            let xi = &idx.0[self.n..];
            if xi.iter().sum::<u32>() != 1 {
                continue;
            }
            let i = xi.iter().position(|&v| v == 1).expect("unit ξ part");
            let alpha = MultiIndex(idx.0[..self.n].to_vec());
            if comps[i].basepoint != *x {
                return Err(Error::Input("component jets at different points".into()));
            }
            out.derivs[k] = comps[i].deriv(&alpha);
        }
        Ok(out)
    }

    /// `P_i = ∂_{ξ_i} P(·, 0)` as jets of degree `m−1` in `x`.
    pub fn unlift(&self, p: &Jet) -> Vec<Jet> {
        let space = JetSpace::get(self.n, self.m - 1);
        let x = p.basepoint[..self.n].to_vec();
        (0..self.d)
            .map(|i| {
                let derivs = space
                    .indices
                    .iter()
                    .map(|a| {
                        let mut full = a.0.clone();
                        full.extend((0..self.d).map(|c| u32::from(c == i)));
                        p.deriv(&MultiIndex(full))
                    })
                    .collect();
                Jet::from_derivs(space.clone(), &x, derivs)
            })
            .collect()
    }
}

/// Finiteness-set table at one point: the `Γ₀` row, one row per level and,
/// for `|E| ≤ 5`, the same decision over every subset rather than the
/// maximal ones.
#[derive(Clone, Debug, Serialize)]
pub struct FpScan {
    pub point: usize,
    pub m0: f64,
    pub base_nonempty: bool,
    pub levels: Vec<FpLevel>,
    pub brute_force: Option<Vec<bool>>,
    pub brute_force_agrees: Option<bool>,
}

pub fn gamma_fp_scan(field: &ShapeField, point: usize, m0: f64, l_max: usize, opts: FpOptions, helly: bool) -> Result<FpScan, Error> {
    let field = field.base();
    let base_nonempty = field.empty_points(m0)?.iter().all(|&i| i != point);
    let levels = gamma_fp_levels(field, point, m0, l_max, opts, helly)?;
    let brute_force = if field.len() <= 5 {
        let d = field.space.dim();
        let mut out = Vec::new();
        for l in 0..=l_max {
            let family = fp_all_sets(field.len(), point, fp_budget(d, l, opts.subset_cap));
            let ne = if opts.exact {
                fp_joint::<Rational>(field, point, m0, &family)?.is_some()
            } else {
                fp_joint::<f64>(field, point, m0, &family)?.is_some()
            };
            out.push(ne);
        }
        Some(out)
    } else {
        None
    };
    let brute_force_agrees = brute_force
        .as_ref()
        .map(|b| b.iter().zip(&levels).all(|(x, l)| *x == l.nonempty));
    Ok(FpScan {
        point,
        m0,
        base_nonempty,
        levels,
        brute_force,
        brute_force_agrees,
    })
}

/// Jets of the optimal Whitney field tested against the finiteness sets and
/// the refined fields at every level up to `l_max`.
#[derive(Clone, Debug, Serialize)]
pub struct OptimalFieldCheck {
    pub m_star: f64,
    pub checked: usize,
    pub fp_violations: usize,
    pub refined_violations: usize,
}

pub fn optimal_field_check(inst: &Instance, l_max: usize, opts: FpOptions) -> Result<Option<OptimalFieldCheck>, Error> {
    let field = scalar_field(inst)?;
    let all: Vec<usize> = (0..inst.points.len()).collect();
    let sol = match min_m_subset(inst, &all)? {
        Some(s) => s,
        None => return Ok(None),
    };
    // Room for the LP tolerance on the optimal scale.
    let m = sol.m * (1.0 + 1e-7) + 1e-9;
    let guard = inst.options.guards.project();
    let mut refined = vec![field.clone()];
    for _ in 0..l_max {
        let next = refined.last().expect("level 0").refine_once(RefineMode::Oracle, guard)?;
        refined.push(next);
    }
    let mut out = OptimalFieldCheck {
        m_star: sol.m,
        checked: 0,
        fp_violations: 0,
        refined_violations: 0,
    };
    for (i, jets) in sol.jets.iter().enumerate() {
        let p = &jets[0];
        for (l, f) in refined.iter().enumerate() {
            out.checked += 1;
            if !gamma_fp(&field, i, m, l, p, opts)? {
                out.fp_violations += 1;
            }
            if !f.member(i, m, p)? {
                out.refined_violations += 1;
            }
        }
    }
    Ok(Some(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(text: &str) -> Instance {
        Instance::from_json(text).unwrap()
    }

    #[test]
    fn singleton_and_pair_scales() {
        let one = inst(r#"{"config":{"m":2,"n":1},"points":[{"x":[0.0],"constraint":{"kind":"equality","payload":-0.75}}]}"#);
        let r = min_m_subset(&one, &[0]).unwrap().unwrap();
        assert!((r.m - 0.75).abs() < 1e-12);
        let two = inst(r#"{"config":{"m":1,"n":1},"points":[
            {"x":[0.0],"constraint":{"kind":"equality","payload":0.0}},
            {"x":[1.0],"constraint":{"kind":"equality","payload":1.0}}]}"#);
        assert!((min_m_subset(&two, &[0, 1]).unwrap().unwrap().m - 1.0).abs() < 1e-12);
        let zero = inst(r#"{"config":{"m":3,"n":2},"points":[
            {"x":[0.0,0.0],"constraint":{"kind":"equality","payload":0.0}},
            {"x":[1.0,0.5],"constraint":{"kind":"equality","payload":0.0}}]}"#);
        assert_eq!(min_m_subset(&zero, &[0, 1]).unwrap().unwrap().m, 0.0);
    }

    #[test]
    fn lift_round_trip() {
        let v = inst(r#"{"config":{"m":2,"n":1,"D":2},"points":[
            {"x":[0.5],"constraint":{"kind":"target","payload":{"dim":2,"rows":[{"a":[1.0,0.0],"b0":1.0}]}}}]}"#);
        let l = lift_instance(&v).unwrap();
        let s = JetSpace::get(1, 1);
        let comps = vec![
            Jet::from_derivs(s.clone(), &[0.5], vec![0.3, -2.0]),
            Jet::from_derivs(s.clone(), &[0.5], vec![1.5, 0.25]),
        ];
        let back = l.unlift(&l.lift(&comps).unwrap());
        assert_eq!(back, comps);
    }
}
