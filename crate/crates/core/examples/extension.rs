//! Stopping-time decomposition and the glued extension of a Whitney field.

use whitsel::cz::{check_tree, whitney_extend, ExtendMode, SimpleOk};
use whitsel::solver::sample_grid;
use whitsel::{Jet, JetSpace, WhitneyField};

fn main() -> Result<(), whitsel::Error> {
    let s = JetSpace::get(2, 1);
    let xs = [[0.0, 0.0], [0.3, 0.1], [0.25, 0.8]];
    let jets = xs
        .iter()
        .enumerate()
        .map(|(i, x)| Jet::from_derivs(s.clone(), x, vec![i as f64 * 0.2, 0.5, -0.1]))
        .collect();
    let ext = whitney_extend(&WhitneyField::new(jets)?, ExtendMode::Plain)?;
    let check = check_tree(&ext.tree, &SimpleOk { points: xs.iter().map(|x| x.to_vec()).collect() }, 48)?;
    println!("{} leaves, matches bottom-up oracle: {}", ext.tree.leaves.len(), check.matches_oracle);
    let stats = ext.stats(&sample_grid(&ext, 41))?;
    println!(
        "partition residual {:.2e}, data residual {:.2e}, sup of jet {:.4}",
        stats.pou_residual,
        ext.data_residual()?,
        stats.sup_jet
    );
    println!("F(0.1, 0.4) = {:.6}", ext.glued.value(&[0.1, 0.4])?);
    Ok(())
}
