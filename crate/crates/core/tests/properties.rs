//! Property tests for the algebraic and geometric invariants.

use std::cmp::Ordering;

use proptest::prelude::*;

use whitsel::basis::rescale;
use whitsel::instance::Instance;
use whitsel::jet::unity_pair;
use whitsel::multi_index::{idx_compare, is_monotonic, monotonic_sets, set_compare};
use whitsel::polytope::ProjectGuard;
use whitsel::solver::{finiteness_scan, lift_instance, min_m_subset};
use whitsel::{HPolytope, IndexSet, Jet, JetSpace, WhitneyField};

fn space_and_jet() -> impl Strategy<Value = (usize, u32, Vec<f64>, Vec<f64>)> {
    (1usize..=3, 0u32..=4).prop_flat_map(|(n, deg)| {
        let d = JetSpace::get(n, deg).dim();
        (
            Just(n),
            Just(deg),
            prop::collection::vec(-1.0f64..1.0, n),
            prop::collection::vec(-1.0f64..1.0, 3 * d),
        )
    })
}

fn split3(space: &std::sync::Arc<JetSpace>, x: &[f64], c: &[f64]) -> (Jet, Jet, Jet) {
    let d = space.dim();
    let j = |k: usize| Jet::from_derivs(space.clone(), x, c[k * d..(k + 1) * d].to_vec());
    (j(0), j(1), j(2))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn product_is_a_commutative_monoid((n, deg, x, c) in space_and_jet()) {
        let s = JetSpace::get(n, deg);
        let (p, q, r) = split3(&s, &x, &c);
        let one = Jet::constant(s.clone(), &x, 1.0);
        prop_assert!(p.multiply(&one).unwrap().max_diff(&p) <= 1e-12);
        prop_assert!(p.multiply(&q).unwrap().max_diff(&q.multiply(&p).unwrap()) <= 1e-12);
        let left = p.multiply(&q).unwrap().multiply(&r).unwrap();
        let right = p.multiply(&q.multiply(&r).unwrap()).unwrap();
        prop_assert!(left.max_diff(&right) <= 1e-12 * (1.0 + left.max_abs()));
    }

    #[test]
    fn unity_pair_squares_sum_to_one((n, deg, x, c) in space_and_jet(), c0 in 0.01f64..0.4) {
        let s = JetSpace::get(n, deg);
        let (p, _, _) = split3(&s, &x, &c);
        let (q1, q2) = unity_pair(&p, c0).unwrap();
        let sum = q1.multiply(&q1).unwrap().add(&q2.multiply(&q2).unwrap()).unwrap();
        prop_assert!(sum.max_diff(&Jet::constant(s, &x, 1.0)) <= 1e-12);
    }

    #[test]
    fn transport_is_linear_and_invertible((n, deg, x, c) in space_and_jet(), t in -2.0f64..2.0) {
        let s = JetSpace::get(n, deg);
        let (p, q, _) = split3(&s, &x, &c);
        let y: Vec<f64> = x.iter().map(|v| v + 0.3 * t).collect();
        let lin = p.axpy(t, &q).unwrap().transport(&y);
        let sep = p.transport(&y).axpy(t, &q.transport(&y)).unwrap();
        prop_assert!(lin.max_diff(&sep) <= 1e-12 * (1.0 + lin.max_abs()));
        let back = p.transport(&y).transport(&x);
        prop_assert!(back.max_diff(&p) <= 1e-12 * (1.0 + p.max_abs()));
    }

    #[test]
    fn seminorm_is_a_seminorm(
        vals in prop::collection::vec(-1.0f64..1.0, 12),
        other in prop::collection::vec(-1.0f64..1.0, 12),
        t in -3.0f64..3.0,
    ) {
        let s = JetSpace::get(1, 2);
        let pts = [[0.0], [0.4], [1.1], [-0.7]];
        let field = |v: &[f64]| WhitneyField::new(
            pts.iter().enumerate().map(|(i, x)| Jet::from_derivs(s.clone(), x, v[3 * i..3 * i + 3].to_vec())).collect()
        ).unwrap();
        let (a, b) = (field(&vals), field(&other));
        let scaled: Vec<f64> = vals.iter().map(|v| v * t).collect();
        let summed: Vec<f64> = vals.iter().zip(&other).map(|(u, v)| u + v).collect();
        let na = a.seminorm();
        prop_assert!((field(&scaled).seminorm() - t.abs() * na).abs() <= 1e-12 * (1.0 + na));
        prop_assert!(field(&summed).seminorm() <= na + b.seminorm() + 1e-12);
    }

    #[test]
    fn projection_matches_existential_feasibility(
        rows in prop::collection::vec((prop::collection::vec(-3.0f64..3.0, 3), 0.2f64..4.0), 4..9),
        c in prop::collection::vec(-3.0f64..3.0, 2),
    ) {
        let mut p = HPolytope::new(3);
        for (a, b) in &rows {
            p.push(a.clone(), *b, 0.0);
        }
        for k in 0..3 {
            let mut a = vec![0.0; 3];
            a[k] = 1.0;
            p.push_abs(a, 0.0, 5.0, 0.0);
        }
        let proj = p.project(&[0, 1], ProjectGuard::default()).unwrap();
        let mut fixed = p.clone();
        for k in 0..2 {
            let mut a = vec![0.0; 3];
            a[k] = 1.0;
            fixed.push_eq(a, c[k]);
        }
        let direct = fixed.feasible(&0.0).unwrap().feasible;
        // Skip points numerically on the boundary of the shadow.
        prop_assume!(proj.margin(&c, 0.0).abs() > 1e-7);
        prop_assert_eq!(proj.contains(&c, 0.0, 1e-9), direct);
    }

    #[test]
    fn feasibility_is_monotone_in_scale(
        rows in prop::collection::vec((prop::collection::vec(-2.0f64..2.0, 2), -2.0f64..1.0, 0.0f64..2.0), 2..7),
        m in 0.0f64..3.0,
        dm in 0.0f64..3.0,
    ) {
        let mut p = HPolytope::new(2);
        for (a, b0, b1) in &rows {
            p.push(a.clone(), *b0, *b1);
        }
        if p.feasible(&m).unwrap().feasible {
            prop_assert!(p.feasible(&(m + dm)).unwrap().feasible);
        }
    }

    #[test]
    fn rescale_output_meets_its_conditions(
        diag in 0.5f64..2.0,
        off in prop::collection::vec(-40.0f64..40.0, 3),
        a in 0.05f64..0.5,
    ) {
        // One row for the top index of P(n=2, deg=1): positions 0, 1, 2.
        let s = JetSpace::get(2, 1);
        let set = IndexSet::from_positions(&[2]);
        let f = vec![vec![off[0], off[1], diag]];
        match rescale(&f, &set, &s, a, 100.0) {
            Ok(r) => {
                let (alpha, phi) = r.phi[0];
                prop_assert_eq!(alpha, 2);
                prop_assert!(phi <= alpha);
                prop_assert!(phi == alpha || !set.contains(phi));
                let hat: Vec<f64> = s.indices.iter().enumerate().map(|(b, beta)| {
                    let lam: f64 = beta.0.iter().zip(&r.lambda).map(|(e, l)| l.powi(*e as i32)).product();
                    lam * f[0][b]
                }).collect();
                for (b, v) in hat.iter().enumerate() {
                    prop_assert!(v.abs() <= hat[phi].abs());
                    if b != phi {
                        prop_assert!(v.abs() <= a * hat[phi].abs() * (1.0 + 1e-12));
                    }
                }
            }
            Err(e) => prop_assert!(false, "rescale failed: {e}"),
        }
    }

    #[test]
    fn lift_then_unlift_is_exact(
        c in prop::collection::vec(-5.0f64..5.0, 6),
        x in -1.0f64..1.0,
    ) {
        let text = format!(r#"{{"config":{{"m":3,"n":1,"D":2}},"points":[
            {{"x":[{x}],"constraint":{{"kind":"target","payload":{{"dim":2,"rows":[{{"a":[1.0,0.0],"b0":1.0}}]}}}}}}]}}"#);
        let inst = Instance::from_json(&text).unwrap();
        let l = lift_instance(&inst).unwrap();
        let s = JetSpace::get(1, 2);
        let comps = vec![
            Jet::from_derivs(s.clone(), &[x], c[..3].to_vec()),
            Jet::from_derivs(s.clone(), &[x], c[3..].to_vec()),
        ];
        prop_assert_eq!(l.unlift(&l.lift(&comps).unwrap()), comps);
    }
}

fn scalar_instance(xs: &[f64], vals: &[f64], m: u32) -> Instance {
    let pts: Vec<String> = xs
        .iter()
        .zip(vals)
        .map(|(x, v)| format!(r#"{{"x":[{x}],"constraint":{{"kind":"equality","payload":{v}}}}}"#))
        .collect();
    Instance::from_json(&format!(r#"{{"config":{{"m":{m},"n":1}},"points":[{}]}}"#, pts.join(","))).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn subset_scales_grow_with_k(
        xs in prop::collection::btree_set(-20i32..20, 2..6),
        vals in prop::collection::vec(-1.0f64..1.0, 6),
        m in 1u32..=3,
    ) {
        let xs: Vec<f64> = xs.into_iter().map(|v| f64::from(v) / 10.0).collect();
        let inst = scalar_instance(&xs, &vals[..xs.len()], m);
        let mut last = 0.0f64;
        for k in 1..=xs.len() {
            let r = finiteness_scan(&inst, k).unwrap();
            let mk = r.m_k.unwrap();
            prop_assert!(mk >= last - 1e-9);
            prop_assert!(r.ratio.unwrap() >= 1.0 - 1e-7);
            last = mk;
        }
        let all: Vec<usize> = (0..xs.len()).collect();
        let global = min_m_subset(&inst, &all).unwrap().unwrap().m;
        prop_assert!((last - global).abs() <= 1e-9 * (1.0 + global));
    }
}

#[test]
fn multi_index_and_set_orders_are_total() {
    for n in 1..=3usize {
        for deg in 0..=3u32 {
            let s = JetSpace::get(n, deg);
            let idx = &s.indices;
            for a in idx {
                assert_eq!(idx_compare(a, a), Ordering::Equal);
                for b in idx {
                    assert_eq!(idx_compare(a, b), idx_compare(b, a).reverse());
                    if a != b {
                        assert_ne!(idx_compare(a, b), Ordering::Equal);
                    }
                }
            }
            // Transitivity through the sorted order.
            for w in idx.windows(2) {
                assert_eq!(idx_compare(&w[0], &w[1]), Ordering::Less);
            }
            if s.dim() <= 10 {
                let sets: Vec<IndexSet> = (0..1u128 << s.dim()).map(|bits| IndexSet { bits }).collect();
                let mut sorted = sets.clone();
                sorted.sort_by(set_compare);
                for w in sorted.windows(2) {
                    assert_eq!(set_compare(&w[0], &w[1]), Ordering::Less);
                }
                for a in sets.iter().step_by(7) {
                    for b in sets.iter().step_by(5) {
                        assert_eq!(set_compare(a, b), set_compare(b, a).reverse());
                    }
                }
            }
            for m in monotonic_sets(&s) {
                assert!(is_monotonic(&s, &m));
            }
        }
    }
}
