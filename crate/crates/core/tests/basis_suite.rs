//! Crafted basis constructions with golden measured constants.
//!
//! Regenerate the golden file with `WHITSEL_BLESS=1 cargo test --test basis_suite`.

use std::collections::BTreeMap;

use whitsel::checks::{crafted_basis_suite, run_basis_case, Construction, SetKind};

const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/basis_suite.json");

#[test]
fn crafted_constructions_pass_and_match_golden_constants() {
    let cases = crafted_basis_suite();
    assert!(cases.len() >= 20);
    for set in [SetKind::Empty, SetKind::Singleton, SetKind::Full] {
        assert!(cases.iter().any(|c| c.set == set));
    }
    for c in [Construction::Basis, Construction::Relabel, Construction::Control, Construction::Transport] {
        assert!(cases.iter().any(|k| k.construction == c));
    }
    let reports: Vec<_> = cases.iter().map(run_basis_case).collect();
    let measured: BTreeMap<String, Option<f64>> = reports.iter().map(|r| (r.name.clone(), r.measured_c_b)).collect();
    if std::env::var_os("WHITSEL_BLESS").is_some() {
        std::fs::write(GOLDEN, serde_json::to_string_pretty(&measured).unwrap() + "\n").unwrap();
    }
    for r in &reports {
        assert!(r.passed, "{}: {:?} {:?}", r.name, r.error, r.conclusions);
    }
    let golden: BTreeMap<String, Option<f64>> =
        serde_json::from_str(&std::fs::read_to_string(GOLDEN).unwrap()).unwrap();
    assert_eq!(golden.len(), measured.len());
    for (name, want) in &golden {
        let got = measured[name];
        match (want, got) {
            (Some(w), Some(g)) => assert!((w - g).abs() <= 1e-9 * w.abs().max(1.0), "{name}: {g} vs golden {w}"),
            (w, g) => assert_eq!(*w, g, "{name}"),
        }
    }
}
