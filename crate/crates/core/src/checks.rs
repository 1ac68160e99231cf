//! Sampled and constructive checks shared by the command line and the test
//! suites: refinement agreement, decomposition against its oracle, and a
//! crafted family of basis constructions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::basis::{
    check_basis, control_gamma_step, relabel, transport, weak_basis_at, BasisCertificate, BasisQuery, ConditionCheck,
    RelabelOptions, TransportOptions,
};
use crate::cz::{check_tree, whitney_extend, ExtendMode, SimpleOk, TreeCheck};
use crate::field::{RefineMode, ShapeField};
use crate::instance::Instance;
use crate::jet::{Jet, WhitneyField};
use crate::multi_index::{is_monotonic, IndexSet, JetSpace};
use crate::polytope::{HPolytope, ProjectGuard};
use crate::solver::{min_m_subset, sample_grid};
use crate::whitney::{Scale, System};
use crate::Error;

#[derive(Clone, Debug, Serialize)]
pub struct RefinementCheck {
    pub levels: usize,
    pub queries: usize,
    pub agreements: usize,
    /// Queries accepted by the refined set (either form).
    pub members: usize,
    pub monotonicity_checks: usize,
    pub monotonicity_violations: usize,
    /// Blocks that stayed in oracle form inside the explicit refinements.
    pub fallbacks: usize,
}

impl RefinementCheck {
    pub fn passed(&self) -> bool {
        self.agreements == self.queries && self.monotonicity_violations == 0
    }
}

fn random_dir(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Smallest scale at which `Γ(x_i, ·)` of `field` is nonempty.
fn floor_scale(field: &ShapeField, i: usize) -> Result<Option<f64>, Error> {
    let mut sys = System::<f64>::new();
    let off = sys.add_vars(field.space.dim());
    field.sets[i].emit(&mut sys, off);
    Ok(sys.solve(Scale::Minimize)?.solution().map(|s| s.scale))
}

/// Explicit and oracle refinements up to `l_max`, queried on `queries`
/// random jets: each is a convex combination of vertices of some `Γ_l(x, M)`,
/// half of them pushed off by a random amount. Every query is also tested
/// for `Γ_{l+1} ⊆ Γ_l`.
pub fn refinement_check(
    field: &ShapeField,
    l_max: usize,
    queries: usize,
    seed: u64,
    guard: ProjectGuard,
) -> Result<RefinementCheck, Error> {
    let base = field.base().clone();
    let mut explicit = vec![base.clone()];
    let mut oracle = vec![base.clone()];
    for l in 0..l_max {
        explicit.push(explicit[l].refine_once(RefineMode::Explicit, guard)?);
        oracle.push(oracle[l].refine_once(RefineMode::Oracle, guard)?);
    }
    let d = base.space.dim();
    let mut floors = Vec::with_capacity(l_max + 1);
    for f in &oracle {
        floors.push((0..f.len()).map(|i| floor_scale(f, i)).collect::<Result<Vec<_>, _>>()?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = RefinementCheck {
        levels: l_max,
        queries,
        agreements: 0,
        members: 0,
        monotonicity_checks: 0,
        monotonicity_violations: 0,
        fallbacks: explicit.iter().map(|f| f.fallbacks).sum(),
    };
    for _ in 0..queries {
        let i = rng.gen_range(0..base.len());
        let l = rng.gen_range(1..=l_max.max(1)).min(l_max);
        let src = rng.gen_range(0..=l);
        let m = match floors[src][i] {
            Some(f) => f * rng.gen_range(1.0..3.0) + rng.gen_range(0.0..0.5),
            None => rng.gen_range(0.1..4.0),
        };
        let x = &base.points[i];
        let set = &oracle[src].sets[i];
        let mut verts = Vec::new();
        for _ in 0..3 {
            if let Some(v) = set.optimize(&base.space, x, m, &random_dir(&mut rng, d))? {
                verts.push(v);
            }
        }
        let mut p = Jet::zero(base.space.clone(), x);
        if !verts.is_empty() {
            let w: Vec<f64> = verts.iter().map(|_| rng.gen_range(0.1..1.0)).collect();
            let tot: f64 = w.iter().sum();
            for (v, wi) in verts.iter().zip(&w) {
                p = p.axpy(wi / tot, v)?;
            }
        }
        if verts.is_empty() || rng.gen_bool(0.5) {
            let push = m.max(1e-3) * 10f64.powf(rng.gen_range(-3.0..0.5));
            let dir = random_dir(&mut rng, d);
            for (k, v) in dir.iter().enumerate() {
                p.derivs[k] += push * v;
            }
        }
        let e = explicit[l].member(i, m, &p)?;
        let o = oracle[l].member(i, m, &p)?;
        if e == o {
            out.agreements += 1;
        }
        if o {
            out.members += 1;
        }
        for k in 0..l_max {
            out.monotonicity_checks += 1;
            if oracle[k + 1].member(i, m, &p)? && !oracle[k].member(i, m, &p)? {
                out.monotonicity_violations += 1;
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct CzCheck {
    pub m_star: f64,
    pub tree: TreeCheck,
    pub pou_residual: f64,
    pub data_residual: f64,
    pub samples: usize,
}

impl CzCheck {
    pub fn passed(&self) -> bool {
        self.tree.passed() && self.pou_residual <= 1e-10 && self.data_residual <= 1e-9
    }
}

/// Decomposition of the optimal Whitney field of an instance (first
/// component), compared with the bottom-up oracle, with partition-of-unity
/// and data residuals on a grid.
pub fn cz_check(inst: &Instance) -> Result<CzCheck, Error> {
    let all: Vec<usize> = (0..inst.points.len()).collect();
    let sol = min_m_subset(inst, &all)?.ok_or_else(|| Error::Infeasible("no Whitney field".into()))?;
    let jets: Vec<Jet> = sol.jets.iter().map(|j| j[0].clone()).collect();
    let ext = whitney_extend(&WhitneyField::new(jets)?, ExtendMode::Plain)?;
    let ok = SimpleOk { points: inst.xs() };
    let tree = check_tree(&ext.tree, &ok, 48)?;
    let samples = sample_grid(&ext, inst.options.grid.min(if inst.config.n == 1 { 2001 } else { 61 }));
    let stats = ext.stats(&samples)?;
    Ok(CzCheck {
        m_star: sol.m,
        tree,
        pou_residual: stats.pou_residual,
        data_residual: ext.data_residual()?,
        samples: samples.len(),
    })
}

/// Construction exercised by a crafted case.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    /// LP search for a full basis, then the four basis conditions.
    Basis,
    /// Weak basis with a dominant off-pattern entry, relabeled.
    Relabel,
    /// One control step from a base jet towards a far member.
    Control,
    /// Basis pair moved to a nearby point one level down.
    Transport,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    Empty,
    /// The last multi-index of top order.
    Singleton,
    Full,
}

#[derive(Clone, Debug, Serialize)]
pub struct BasisCase {
    pub name: String,
    pub n: usize,
    pub m: u32,
    pub set: SetKind,
    pub construction: Construction,
}

#[derive(Clone, Debug, Serialize)]
pub struct BasisCaseReport {
    pub name: String,
    pub construction: Construction,
    pub passed: bool,
    /// Measured basis constant of the certificate the construction outputs.
    pub measured_c_b: Option<f64>,
    pub conclusions: Vec<ConditionCheck>,
    pub error: Option<String>,
}

/// Box-shaped field `|∂^β P| ≤ M` on the given points.
pub fn box_field(points: Vec<Vec<f64>>, m: u32) -> Result<ShapeField, Error> {
    let n = points[0].len();
    let d = JetSpace::get(n, m - 1).dim();
    let mut poly = HPolytope::new(d);
    for k in 0..d {
        let mut a = vec![0.0; d];
        a[k] = 1.0;
        poly.push_abs(a, 0.0, 0.0, 1.0);
    }
    let polys = points.iter().map(|_| poly.clone()).collect();
    ShapeField::custom(points, polys, m)
}

fn crafted_points(n: usize) -> Vec<Vec<f64>> {
    if n == 1 {
        vec![vec![0.0], vec![5e-4]]
    } else {
        vec![vec![0.0, 0.0], vec![3e-4, 4e-4]]
    }
}

fn set_of(space: &JetSpace, kind: SetKind) -> IndexSet {
    match kind {
        SetKind::Empty => IndexSet::empty(),
        SetKind::Singleton => IndexSet::from_positions(&[space.dim() - 1]),
        SetKind::Full => IndexSet::full(space.dim()),
    }
}

/// Crafted cases over `n ≤ 2`, `m ≤ 3`: full bases and transports for the
/// empty, singleton and full sets, relabelings of singleton weak bases and
/// control steps from the empty set.
pub fn crafted_basis_suite() -> Vec<BasisCase> {
    let mut out = Vec::new();
    for n in 1..=2usize {
        for m in 2..=3u32 {
            let tag = |c: &str, s: SetKind| format!("n{n}_m{m}_{c}_{}", format!("{s:?}").to_lowercase());
            for set in [SetKind::Empty, SetKind::Singleton, SetKind::Full] {
                for c in [Construction::Basis, Construction::Transport] {
                    let name = tag(if c == Construction::Basis { "basis" } else { "transport" }, set);
                    out.push(BasisCase { name, n, m, set, construction: c });
                }
            }
            out.push(BasisCase {
                name: tag("relabel", SetKind::Singleton),
                n,
                m,
                set: SetKind::Singleton,
                construction: Construction::Relabel,
            });
            out.push(BasisCase {
                name: tag("control", SetKind::Empty),
                n,
                m,
                set: SetKind::Empty,
                construction: Construction::Control,
            });
        }
    }
    out
}

fn full_basis(field: &ShapeField, set: IndexSet) -> Result<BasisCertificate, Error> {
    let q = BasisQuery {
        field,
        point: 0,
        m0: 1.0,
        delta: 1.0,
        c_b: 4.0,
        set,
        weak: false,
        anchor: None,
        base: None,
    };
    weak_basis_at(&q)?.ok_or_else(|| Error::Infeasible("no basis at the crafted point".into()))
}

fn run_case_inner(case: &BasisCase) -> Result<(Option<f64>, Vec<ConditionCheck>), Error> {
    let points = crafted_points(case.n);
    match case.construction {
        Construction::Basis => {
            let field = box_field(points, case.m)?.refine(1, RefineMode::Oracle, ProjectGuard::default())?;
            let cert = full_basis(&field, set_of(&field.space, case.set))?;
            let rep = check_basis(&cert, &field)?;
            Ok((rep.measured_c_b, rep.conditions))
        }
        Construction::Transport => {
            let field = box_field(points, case.m)?.refine(1, RefineMode::Oracle, ProjectGuard::default())?;
            let cert = full_basis(&field, set_of(&field.space, case.set))?;
            let t = transport(&cert, &cert, 1, &field, TransportOptions::default())?;
            let prev = field.prev.as_deref().expect("refined");
            let c = check_basis(&t.cert, prev)?.measured_c_b;
            Ok((c, t.conclusions))
        }
        Construction::Relabel => {
            let field = box_field(points, case.m)?;
            let space = field.space.clone();
            let set = set_of(&space, case.set);
            let alpha = set.positions()[0];
            let x0 = field.points[0].clone();
            let mut v = Jet::zero(space.clone(), &x0);
            v.derivs[alpha] = 1.0;
            v.derivs[0] = 50.0;
            let cert = BasisCertificate {
                set,
                delta: 1.0,
                c_b: 64.0,
                point: 0,
                m0: 1.0,
                base: Jet::zero(space, &x0),
                vectors: vec![v],
                weak: true,
            };
            let r = relabel(&cert, &field, RelabelOptions::default())?;
            let mut conclusions = r.report.conditions.clone();
            conclusions.push(ConditionCheck {
                name: "monotonic_smaller".into(),
                passed: is_monotonic(&field.space, &r.cert.set)
                    && crate::multi_index::set_compare(&r.cert.set, &cert.set) != std::cmp::Ordering::Greater,
                worst: 0.0,
            });
            Ok((r.report.measured_c_b, conclusions))
        }
        Construction::Control => {
            let field = box_field(points, case.m)?;
            let space = field.space.clone();
            let x0 = field.points[0].clone();
            let cert = BasisCertificate {
                set: IndexSet::empty(),
                delta: 1.0,
                c_b: 4.0,
                point: 0,
                m0: 1.0,
                base: Jet::zero(space.clone(), &x0),
                vectors: Vec::new(),
                weak: false,
            };
            let mut p = Jet::zero(space.clone(), &x0);
            p.derivs[space.dim() - 1] = 1.0;
            let g = control_gamma_step(&cert, &p, &field, RelabelOptions::default())?;
            Ok((g.relabel.report.measured_c_b, g.conclusions))
        }
    }
}

pub fn run_basis_case(case: &BasisCase) -> BasisCaseReport {
    match run_case_inner(case) {
        Ok((c, conclusions)) => BasisCaseReport {
            name: case.name.clone(),
            construction: case.construction,
            passed: !conclusions.is_empty() && conclusions.iter().all(|c| c.passed),
            measured_c_b: c,
            conclusions,
            error: None,
        },
        Err(e) => BasisCaseReport {
            name: case.name.clone(),
            construction: case.construction,
            passed: false,
            measured_c_b: None,
            conclusions: Vec::new(),
            error: Some(e.to_string()),
        },
    }
}

/// Basis constructions on an instance field (refined once): a full basis
/// for every monotonic candidate set at each point, its relabeling when the
/// set is nonempty and a transport to the nearest other point when close
/// enough.
#[derive(Clone, Debug, Serialize)]
pub struct InstanceBasisRow {
    pub point: usize,
    pub set: Vec<usize>,
    pub construction: Construction,
    pub passed: Option<bool>,
    pub measured_c_b: Option<f64>,
    pub note: Option<String>,
}

pub fn instance_basis_check(field: &ShapeField, m0: f64, delta: f64, c_b: f64) -> Result<Vec<InstanceBasisRow>, Error> {
    let refined = field.base().refine(1, RefineMode::Oracle, ProjectGuard::default())?;
    let space = refined.space.clone();
    let mut sets = vec![IndexSet::empty(), IndexSet::from_positions(&[space.dim() - 1]), IndexSet::full(space.dim())];
    sets.dedup_by(|a, b| a.positions() == b.positions());
    let mut rows = Vec::new();
    for i in 0..refined.len() {
        for set in &sets {
            let q = BasisQuery {
                field: &refined,
                point: i,
                m0,
                delta,
                c_b,
                set: *set,
                weak: false,
                anchor: None,
                base: None,
            };
            let row = |construction, passed, c, note: Option<String>| InstanceBasisRow {
                point: i,
                set: set.positions(),
                construction,
                passed,
                measured_c_b: c,
                note,
            };
            let cert = match weak_basis_at(&q)? {
                Some(c) => c,
                None => {
                    rows.push(row(Construction::Basis, None, None, Some("no basis at these parameters".into())));
                    continue;
                }
            };
            let rep = check_basis(&cert, &refined)?;
            rows.push(row(Construction::Basis, Some(rep.passed), rep.measured_c_b, None));
            if !set.is_empty() {
                let weak = BasisCertificate { weak: true, ..cert.clone() };
                rows.push(match relabel(&weak, &refined, RelabelOptions::default()) {
                    Ok(r) => row(Construction::Relabel, Some(r.report.passed), r.report.measured_c_b, None),
                    Err(e) => row(Construction::Relabel, Some(false), None, Some(e.to_string())),
                });
            }
            let near = (0..refined.len())
                .filter(|&j| j != i)
                .min_by(|&a, &b| {
                    crate::jet::dist(&refined.points[a], &refined.points[i])
                        .total_cmp(&crate::jet::dist(&refined.points[b], &refined.points[i]))
                });
            if let Some(j) = near {
                rows.push(match transport(&cert, &cert, j, &refined, TransportOptions::default()) {
                    Ok(t) => row(
                        Construction::Transport,
                        Some(t.conclusions.iter().all(|c| c.passed)),
                        Some(t.c_prime),
                        None,
                    ),
                    Err(Error::Precondition(e)) => row(Construction::Transport, None, None, Some(e)),
                    Err(e) => row(Construction::Transport, Some(false), None, Some(e.to_string())),
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refinement_agrees_on_a_small_field() {
        let f = ShapeField::interp(vec![vec![0.0], vec![0.5], vec![1.0]], &[0.0, 0.3, 0.2], 2).unwrap();
        let r = refinement_check(&f, 2, 40, 7, ProjectGuard::default()).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.members > 0 && r.members < r.queries);
    }

    #[test]
    fn crafted_suite_has_enough_cases() {
        let s = crafted_basis_suite();
        assert!(s.len() >= 20);
        for set in [SetKind::Empty, SetKind::Singleton, SetKind::Full] {
            assert!(s.iter().any(|c| c.set == set));
        }
    }
}
