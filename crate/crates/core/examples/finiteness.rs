//! Minimal-scale solve and the subset finiteness scan for an instance file.
//!
//! `cargo run --example finiteness -- crates/core/instances/plane_points.json`

use whitsel::instance::Instance;
use whitsel::solver::{default_k, finiteness_scan, solve_global};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/instances/collinear.json").to_string());
    let inst = Instance::from_json(&std::fs::read_to_string(path)?)?;
    for k in 1..=default_k(&inst) {
        let r = finiteness_scan(&inst, k)?;
        println!("k = {k}: M_k = {:?}, ratio = {:?}", r.m_k, r.ratio);
    }
    let sol = solve_global(&inst)?;
    let d = &sol.diagnostics;
    println!("M* = {:.6}, sup norm {:.6}, ratio {:.4}, {} leaves", d.m_star, d.norm, d.ratio, d.leaves);
    Ok(())
}
