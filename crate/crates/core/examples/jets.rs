//! Jet arithmetic: products, transport and the unity pair.

use whitsel::jet::unity_pair;
use whitsel::{Jet, JetSpace, MultiIndex};

fn main() -> Result<(), whitsel::Error> {
    let s = JetSpace::get(2, 2);
    let x = [0.5, -0.25];
    let p = Jet::from_derivs(s.clone(), &x, vec![1.0, 0.5, -0.3, 0.2, 0.1, -0.4]);
    let q = Jet::coordinate(s.clone(), &x, 0);
    let pq = p.multiply(&q)?;
    println!("index order: {:?}", s.indices.iter().map(|a| a.0.clone()).collect::<Vec<_>>());
    println!("P·x1 derivatives: {:?}", pq.derivs);
    println!("∂^(1,1)(P·x1) = {}", pq.deriv(&MultiIndex(vec![1, 1])));

    let moved = p.transport(&[0.0, 0.0]);
    println!("P re-expanded at the origin: {:?}", moved.derivs);
    println!("round trip error: {:.2e}", moved.transport(&x).max_diff(&p));

    let (q1, q2) = unity_pair(&p.scale(0.1), 0.2)?;
    let one = q1.multiply(&q1)?.add(&q2.multiply(&q2)?)?;
    println!("Q1² + Q2² − 1: {:.2e}", one.max_diff(&Jet::constant(s, &x, 1.0)));
    Ok(())
}
