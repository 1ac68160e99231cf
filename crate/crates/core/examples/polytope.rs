//! Polytope projection and an exact Helly check.

use whitsel::polytope::{helly_check, ProjectGuard};
use whitsel::scalar::Rational;
use whitsel::HPolytope;

fn main() -> Result<(), whitsel::Error> {
    // |v_k| ≤ 1 + M and v0 + v1 + v2 ≤ 1.
    let mut p = HPolytope::new(3);
    for k in 0..3 {
        let mut a = vec![0.0; 3];
        a[k] = 1.0;
        p.push_abs(a, 0.0, 1.0, 1.0);
    }
    p.push(vec![1.0, 1.0, 1.0], 1.0, 0.0);
    let shadow = p.project(&[0, 1], ProjectGuard::default())?;
    println!("shadow on (v0, v1): {} rows", shadow.rows.len());
    for c in [[0.5, 0.5], [2.5, 0.0], [-2.0, -2.0]] {
        println!("  {c:?} at M = 0.5: {}", shadow.contains(&c, 0.5, 1e-12));
    }

    // Three half-planes in ℝ² that meet pairwise but not all together.
    let mut sets = Vec::new();
    for (a, b) in [(vec![1.0, 0.0], 0.0), (vec![0.0, 1.0], 0.0), (vec![-1.0, -1.0], -1.0)] {
        let mut h = HPolytope::new(2);
        h.push(a, b, 0.0);
        sets.push(h.to_rational());
    }
    let zero = Rational::from_integer(0.into());
    for k in [2, 3] {
        let r = helly_check::<Rational>(&sets, k, &zero)?;
        println!(
            "{k}-wise feasible: {}, whole family feasible: {}, counterexample: {}",
            r.all_subfamilies_feasible, r.full_feasible, r.counterexample
        );
    }
    Ok(())
}
