//! End-to-end runs of the `whitsel` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_whitsel");

fn instance(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("instances").join(name)
}

fn out_dir(tag: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(tag);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str], out: &Path, threads: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).arg("--out").arg(out);
    match threads {
        Some(t) => cmd.env("WHITSEL_THREADS", t),
        None => cmd.env_remove("WHITSEL_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_single_point_gives_abs_value() {
    let inst = instance("single_point.json");
    let out = out_dir("single");
    let o = run(&["solve", path_str(&inst)], &out, None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    let m = r["body"]["m_star"].as_f64().unwrap();
    assert!((m - 0.75).abs() <= 1e-9, "M* = {m}");
    assert_eq!(r["library_version"], env!("CARGO_PKG_VERSION"));
    let hash = r["instance_sha256"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
}

#[test]
fn exit_codes_follow_the_contract() {
    let out = out_dir("codes");
    let dup = run(&["solve", path_str(&instance("duplicate_point.json"))], &out, None);
    assert_eq!(dup.status.code(), Some(1));
    let capped = run(&["solve", path_str(&instance("nonneg_bump.json")), "--m-cap", "0.01"], &out, None);
    assert_eq!(capped.status.code(), Some(2));
    let missing = run(&["solve", "/nonexistent/instance.json"], &out, None);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn reports_are_byte_identical_across_runs_and_threads() {
    for (sub, file) in [("solve", "collinear.json"), ("finiteness", "plane_points.json")] {
        let inst = instance(file);
        let mut bytes = Vec::new();
        for (k, threads) in [None, Some("1"), Some("4")].into_iter().enumerate() {
            let out = out_dir(&format!("det_{sub}_{k}"));
            let o = run(&[sub, path_str(&inst), "--seed", "11"], &out, threads);
            assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
            bytes.push(std::fs::read(out.join("report.json")).unwrap());
        }
        assert_eq!(bytes[0], bytes[1], "{sub}: repeated run differs");
        assert_eq!(bytes[1], bytes[2], "{sub}: thread count changes the report");
    }
}

#[test]
fn finiteness_scale_grows_with_k() {
    let inst = instance("collinear.json");
    let mut scales = Vec::new();
    for k in ["1", "2"] {
        let out = out_dir(&format!("k{k}"));
        let o = run(&["finiteness", path_str(&inst), "--k", k], &out, None);
        assert_eq!(o.status.code(), Some(0));
        let r = report(&out);
        assert!(!r["body"]["scan"]["contradiction"].as_bool().unwrap());
        scales.push(r["body"]["scan"]["m_k"].as_f64().unwrap());
    }
    assert!(scales[1] >= scales[0] - 1e-12, "{scales:?}");
}

#[test]
fn helly_levels_appear_in_exact_mode() {
    let inst = instance("collinear.json");
    let out = out_dir("helly");
    let o = run(&["finiteness", path_str(&inst), "--helly", "--exact", "--l", "1"], &out, None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    let levels = r["body"]["levels"].as_array().unwrap();
    assert!(!levels.is_empty());
    for scan in levels {
        for level in scan["levels"].as_array().unwrap() {
            assert_eq!(level["helly_nonempty"], level["nonempty"]);
        }
    }
}

#[test]
fn ratio_table_lists_every_instance() {
    let out = out_dir("ratios");
    let a = instance("single_point.json");
    let b = instance("collinear.json");
    let o = run(&["finiteness", path_str(&a), "--also", path_str(&b)], &out, None);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("ratios.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn every_check_passes_on_a_small_instance() {
    let inst = instance("collinear.json");
    for what in ["convexity", "refinement", "basis", "cz"] {
        let out = out_dir(&format!("check_{what}"));
        let o = run(&["check", what, path_str(&inst), "--l", "1"], &out, None);
        assert_eq!(o.status.code(), Some(0), "{what}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(report(&out)["body"]["passed"], true, "{what}");
    }
}

#[test]
fn solve_writes_grid_when_asked() {
    let out = out_dir("grid");
    let o = run(&["solve", path_str(&instance("plane_points.json")), "--grid", "9"], &out, None);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("grid.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 81);
}
