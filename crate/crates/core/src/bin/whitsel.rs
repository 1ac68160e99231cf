use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use whitsel::checks::{cz_check, instance_basis_check, refinement_check};
use whitsel::cz::grid_csv;
use whitsel::field::{convexity_check, ConvexityParams, FpOptions, ShapeField};
use whitsel::instance::{Arithmetic, Instance, Mode, Report};
use whitsel::solver::{default_k, finiteness_scan, gamma_fp_scan, lift_instance, sample_grid, scalar_field, solve_global};
use whitsel::{Error, MultiIndex};

#[derive(Parser)]
#[command(name = "whitsel", version, about = "Constrained smooth interpolation and selection on finite sets")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Instance file (JSON).
    instance: PathBuf,
    /// Points per axis of the evaluation grid.
    #[arg(long)]
    grid: Option<usize>,
    /// Exact rational arithmetic for the linear programs.
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on subset sizes in finiteness-set computations.
    #[arg(long = "guard-subsets")]
    guard_subsets: Option<usize>,
    /// Largest admissible scale; anything above counts as infeasible.
    #[arg(long = "m-cap")]
    m_cap: Option<f64>,
    /// Output directory for report files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Minimal-scale global solution with verification.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Subset scan `M_k` versus `M_global`, with finiteness-set levels.
    Finiteness {
        #[command(flatten)]
        common: Common,
        /// Subset size cap (default `min(dim P + 2, |E|)`).
        #[arg(long)]
        k: Option<usize>,
        /// Highest finiteness-set level.
        #[arg(long)]
        l: Option<usize>,
        /// Cross-check each level through `(dim P + 1)`-wise intersections.
        #[arg(long)]
        helly: bool,
        /// Further instances; with more than one, a ratio table is written.
        #[arg(long = "also")]
        also: Vec<PathBuf>,
    },
    /// Sampled and constructive checks on the instance field.
    Check {
        #[arg(value_enum)]
        what: What,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        l: Option<usize>,
        /// Convexity constant to test against.
        #[arg(long = "c-w", default_value_t = 16.0)]
        c_w: f64,
    },
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum What {
    Convexity,
    Refinement,
    Basis,
    Cz,
}

enum Failure {
    Error(String),
    Infeasible(String),
    CheckFailed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Infeasible(s) => Failure::Infeasible(s),
            e => Failure::Error(e.to_string()),
        }
    }
}

fn load(c: &Common) -> Result<Instance, Failure> {
    load_path(&c.instance, c)
}

fn load_path(path: &Path, c: &Common) -> Result<Instance, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Error(format!("{}: {e}", path.display())))?;
    let mut inst = Instance::from_json(&text)?;
    if let Some(g) = c.grid {
        inst.options.grid = g;
    }
    if c.exact {
        inst.options.arithmetic = Arithmetic::Exact;
    }
    if let Some(s) = c.seed {
        inst.options.seed = s;
    }
    if let Some(g) = c.guard_subsets {
        inst.options.guards.subsets = g;
    }
    if c.m_cap.is_some() {
        inst.options.guards.m_cap = c.m_cap;
    }
    Ok(inst)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Error(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Failure::Error(format!("{}: {e}", path.display())))
}

fn fp_opts(inst: &Instance) -> FpOptions {
    FpOptions {
        subset_cap: inst.options.guards.subsets,
        exact: inst.options.arithmetic == Arithmetic::Exact,
    }
}

/// Field the checks run on: the scalar field, or the lifted one for targets.
fn check_field(inst: &Instance) -> Result<ShapeField, Failure> {
    Ok(match inst.mode()? {
        Mode::Vector => lift_instance(inst)?.field,
        _ => scalar_field(inst)?,
    })
}

#[derive(Serialize)]
struct SolveBody {
    m_star: f64,
    diagnostics: whitsel::solver::SolveDiagnostics,
    jets: Vec<Vec<whitsel::Jet>>,
}

fn cmd_solve(c: &Common) -> Result<(), Failure> {
    let inst = load(c)?;
    let sol = solve_global(&inst)?;
    let d = sol.diagnostics.clone();
    println!(
        "M* = {:.12e}  norm ratio = {:.6}  constraint residual = {:.3e}  grid min = {:.3e}",
        d.m_star, d.ratio, d.constraint_residual, d.grid_min
    );
    let body = SolveBody {
        m_star: d.m_star,
        diagnostics: d,
        jets: sol.field.jets.clone(),
    };
    write(&c.out, "report.json", &Report::new(&inst, body).to_json())?;
    if c.grid.is_some() {
        let ext = &sol.extensions[0];
        let samples = sample_grid(ext, inst.options.grid);
        let betas: Vec<MultiIndex> = (0..inst.config.n).map(|k| MultiIndex::unit(inst.config.n, k)).collect();
        write(&c.out, "grid.csv", &grid_csv(ext, &samples, &betas)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct FinitenessBody {
    scan: whitsel::solver::FinitenessReport,
    levels: Vec<whitsel::solver::FpScan>,
}

fn finiteness_one(inst: &Instance, k: Option<usize>, l: Option<usize>, helly: bool) -> Result<FinitenessBody, Failure> {
    let k = k.or(inst.options.k_max).unwrap_or_else(|| default_k(inst));
    let start = Instant::now();
    let scan = finiteness_scan(inst, k)?;
    let mut levels = Vec::new();
    if let Mode::Scalar { .. } = inst.mode()? {
        let m0 = scan.m_global.or(scan.m_k).map(|m| m * (1.0 + 1e-7) + 1e-9);
        if let Some(m0) = m0 {
            let field = scalar_field(inst)?;
            let l_max = l.unwrap_or(inst.options.l_max);
            for i in 0..inst.points.len() {
                levels.push(gamma_fp_scan(&field, i, m0, l_max, fp_opts(inst), helly)?);
            }
        }
    }
    eprintln!("finiteness scan: {:.3} s", start.elapsed().as_secs_f64());
    Ok(FinitenessBody { scan, levels })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "inf".to_string(), |x| format!("{x:.12e}"))
}

fn cmd_finiteness(c: &Common, k: Option<usize>, l: Option<usize>, helly: bool, also: &[PathBuf]) -> Result<(), Failure> {
    let inst = load(c)?;
    let body = finiteness_one(&inst, k, l, helly)?;
    let s = &body.scan;
    println!(
        "k = {}  M_k = {}  M_global = {}  ratio = {}",
        s.k,
        fmt_opt(s.m_k),
        fmt_opt(s.m_global),
        fmt_opt(s.ratio)
    );
    let contradiction = s.contradiction;
    write(&c.out, "report.json", &Report::new(&inst, &body).to_json())?;
    if !also.is_empty() {
        let mut csv = String::from("instance,k,m_k,m_global,ratio\n");
        let mut paths = vec![c.instance.clone()];
        paths.extend(also.iter().cloned());
        for p in &paths {
            let inst = load_path(p, c)?;
            let b = if p == &c.instance { None } else { Some(finiteness_one(&inst, k, l, false)?) };
            let s = b.as_ref().map_or(&body.scan, |b| &b.scan);
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                p.display(),
                s.k,
                fmt_opt(s.m_k),
                fmt_opt(s.m_global),
                fmt_opt(s.ratio)
            ));
        }
        write(&c.out, "ratios.csv", &csv)?;
    }
    if contradiction {
        eprintln!("global problem infeasible while every subset of size ≤ k is feasible");
        return Err(Failure::CheckFailed);
    }
    Ok(())
}

#[derive(Serialize)]
struct CheckBody<T: Serialize> {
    what: What,
    checks: &'static str,
    passed: bool,
    result: T,
}

fn cmd_check(what: What, c: &Common, l: Option<usize>, c_w: f64) -> Result<(), Failure> {
    let inst = load(c)?;
    let seed = inst.options.seed;
    let (passed, json) = match what {
        What::Convexity => {
            let field = check_field(&inst)?;
            let r = convexity_check(&field, ConvexityParams { c_w, delta_max: 1.0 }, inst.options.trials, seed)?;
            println!(
                "convexity of the shape field under unity-pair combinations: {}/{} passed ({} rejected), measured C_w = {:.6}",
                r.passed, r.trials, r.rejected, r.empirical_c_w
            );
            let body = CheckBody {
                what,
                checks: "convexity of the shape field",
                passed: r.holds(),
                result: r,
            };
            (body.passed, Report::new(&inst, body).to_json())
        }
        What::Refinement => {
            let field = check_field(&inst)?;
            let l = l.unwrap_or(inst.options.l_max).max(1);
            let r = refinement_check(&field, l, 200, seed, inst.options.guards.project())?;
            println!(
                "explicit versus oracle refinement: {}/{} agree; nesting violations {}",
                r.agreements, r.queries, r.monotonicity_violations
            );
            let body = CheckBody {
                what,
                checks: "refinement nesting and explicit/oracle equivalence",
                passed: r.passed(),
                result: r,
            };
            (body.passed, Report::new(&inst, body).to_json())
        }
        What::Basis => {
            let field = check_field(&inst)?;
            let all: Vec<usize> = (0..inst.points.len()).collect();
            let m0 = whitsel::solver::min_m_subset(&inst, &all)?
                .map(|s| 2.0 * s.m)
                .filter(|m| *m > 0.0)
                .unwrap_or(1.0);
            let rows = instance_basis_check(&field, m0, 1.0, 4.0)?;
            let failed = rows.iter().filter(|r| r.passed == Some(false)).count();
            let run = rows.iter().filter(|r| r.passed.is_some()).count();
            println!("basis constructions: {run} run, {failed} failed, {} skipped", rows.len() - run);
            let body = CheckBody {
                what,
                checks: "basis conditions, relabeling and transport",
                passed: failed == 0,
                result: rows,
            };
            (body.passed, Report::new(&inst, body).to_json())
        }
        What::Cz => {
            let r = cz_check(&inst)?;
            println!(
                "decomposition versus bottom-up oracle: {}; partition residual {:.3e}; data residual {:.3e}",
                if r.tree.matches_oracle { "equal" } else { "DIFFERENT" },
                r.pou_residual,
                r.data_residual
            );
            let body = CheckBody {
                what,
                checks: "stopping-time decomposition and gluing",
                passed: r.passed(),
                result: r,
            };
            (body.passed, Report::new(&inst, body).to_json())
        }
    };
    write(&c.out, "report.json", &json)?;
    if passed {
        Ok(())
    } else {
        Err(Failure::CheckFailed)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = whitsel::configured_threads() {
        // Ignored when a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let res = match &cli.cmd {
        Cmd::Solve { common } => cmd_solve(common),
        Cmd::Finiteness {
            common,
            k,
            l,
            helly,
            also,
        } => cmd_finiteness(common, *k, *l, *helly, also),
        Cmd::Check { what, common, l, c_w } => cmd_check(*what, common, *l, *c_w),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Infeasible(s)) => {
            eprintln!("infeasible: {s}");
            ExitCode::from(2)
        }
        Err(Failure::Error(s)) => {
            eprintln!("error: {s}");
            ExitCode::from(1)
        }
        Err(Failure::CheckFailed) => {
            eprintln!("check failed");
            ExitCode::from(1)
        }
    }
}
