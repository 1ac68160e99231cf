//! Shape-field refinement, explicit versus oracle.

use whitsel::checks::refinement_check;
use whitsel::field::{RefineMode, ShapeField};
use whitsel::polytope::ProjectGuard;
use whitsel::{Jet, JetSpace};

fn main() -> Result<(), whitsel::Error> {
    let points = vec![vec![0.0], vec![0.5], vec![1.0]];
    let field = ShapeField::interp(points, &[0.0, 0.2, 0.1], 2)?;
    let guard = ProjectGuard::default();
    let explicit = field.refine(1, RefineMode::Explicit, guard)?;
    let oracle = field.refine(1, RefineMode::Oracle, guard)?;

    let s = JetSpace::get(1, 1);
    for (value, slope) in [(0.0, 0.4), (0.0, 3.0)] {
        let p = Jet::from_derivs(s.clone(), &[0.0], vec![value, slope]);
        for m in [1.0, 4.0] {
            println!(
                "P = {value} + {slope}x at M = {m}: base {}, refined {} / {}",
                field.member(0, m, &p)?,
                explicit.member(0, m, &p)?,
                oracle.member(0, m, &p)?
            );
        }
    }
    let r = refinement_check(&field, 2, 100, 7, guard)?;
    println!("{} queries, {} agree, nesting violations {}", r.queries, r.agreements, r.monotonicity_violations);
    Ok(())
}
