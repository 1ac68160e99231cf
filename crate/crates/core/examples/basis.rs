//! Crafted basis constructions with measured constants.

use whitsel::checks::{crafted_basis_suite, run_basis_case};

fn main() {
    for case in crafted_basis_suite() {
        let r = run_basis_case(&case);
        println!(
            "{:<28} {:<9} {} C_B = {}",
            r.name,
            format!("{:?}", r.construction),
            if r.passed { "ok  " } else { "FAIL" },
            r.measured_c_b.map_or("n/a".to_string(), |c| c.to_string())
        );
    }
}
