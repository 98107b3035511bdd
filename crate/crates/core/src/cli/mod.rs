//! Configuration-driven front end.
//!
//! A run reads an [`ExperimentConfig`] (JSON, every field optional), applies
//! command-line overrides, executes one of the four modes and writes into the
//! output directory:
//!
//! - `result.csv`: the mode's table; the first header cell is the schema tag
//!   (`bandlab/<mode>@1`) and the first column is the row index
//! - `summary.json`: aggregate numbers
//! - `eigenvalues.csv`: the spectrum (`simulate` only)
//! - `manifest.json`: resolved config, seed, thread count, versions and
//!   timing; passing it back through `--config` reproduces the tables
//!
//! Exit codes: 0 success, 1 failed verification or numerical failure,
//! 2 bad configuration, 3 non-convergence (partial results are written),
//! 4 I/O error.

mod config;
mod output;

pub use config::{Check, ExperimentConfig, GridSpec, Mode};
pub use output::fmt_f64;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::ensemble::{
    assemble_y, build_r_from_measure, default_truncation_level, sample_x, trial_seed, EnsembleConfig,
};
use crate::limit_law::{invert_to_density, solve_grid_partial};
use crate::spectra::{eigenvalues_hermitian, empirical_stieltjes, gram};
use crate::verify::{
    convergence_sweep, gap_from_spectrum, norm_tail_experiment, partial_trace_tail_experiment, quadratic_form_stat,
    rank_perturbation_check, truncation_bound_check, MatrixRole, NormTailConfig, PartialTraceConfig, QuadFormConfig,
    RankConfig, SweepConfig, TailLevel, TruncationConfig,
};
use output::{write_json, write_matrix, Table};

pub const RESULT_FILE: &str = "result.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const EIGENVALUES_FILE: &str = "eigenvalues.csv";
const MANIFEST_SCHEMA: &str = "bandlab/manifest@1";

/// Accepted slope window for the quadratic-form statistic.
const SLOPE_WINDOW: (f64, f64) = (0.5, 1.5);
/// Monte Carlo margin, in standard errors, for the partial-trace tail.
const TAIL_MARGIN_SE: f64 = 3.0;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Module(#[from] crate::Error),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("{0} grid point(s) did not converge; partial results written")]
    Partial(usize),
    #[error("verification failed: {0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Module(crate::Error::InvalidArgument(_)) => 2,
            CliError::Module(crate::Error::NonConvergence { .. }) | CliError::Partial(_) => 3,
            CliError::Io(_) => 4,
            CliError::Failed(_) | CliError::Module(_) => 1,
        }
    }
}

/// What a successful run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    /// `Some(pass)` for `verify`.
    pub passed: Option<bool>,
}

#[derive(Parser, Debug)]
#[command(
    name = "bandlab",
    version,
    about = "Spectral laboratory for random band matrices with deterministic noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the limiting equation on a grid and invert it to a density.
    Solve(RunArgs),
    /// Sample one matrix and tabulate its spectrum and Stieltjes transform.
    Simulate(RunArgs),
    /// Convergence of m_n to m over a ladder of sizes.
    Sweep(RunArgs),
    /// Run one of the bound checks.
    Verify(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; every trial seed is derived from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (results are identical for any value).
    #[arg(long)]
    threads: Option<usize>,
    /// Fixed-point tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

/// Reads a config file. A manifest is accepted too; its `config` is used.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let is_manifest = value
        .get("schema")
        .and_then(|s| s.as_str())
        .is_some_and(|s| s.starts_with("bandlab/manifest"));
    let value = if is_manifest {
        value.get("config").cloned().unwrap_or_default()
    } else {
        value
    };
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn resolve(command: Command) -> Result<ExperimentConfig, CliError> {
    let (mode, args) = match command {
        Command::Solve(a) => (Mode::Solve, a),
        Command::Simulate(a) => (Mode::Simulate, a),
        Command::Sweep(a) => (Mode::Sweep, a),
        Command::Verify(a) => (Mode::Verify, a),
    };
    let mut cfg = match &args.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.mode = mode;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.out = out;
    }
    if let Some(threads) = args.threads {
        cfg.threads = Some(threads);
    }
    if let Some(tol) = args.tol {
        cfg.tol = tol;
    }
    Ok(cfg)
}

fn init_logging() {
    let mut builder = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"));
    if std::env::var_os("NO_COLOR").is_some_and(|v| !v.is_empty()) {
        builder.write_style(env_logger::WriteStyle::Never);
    }
    let _ = builder.try_init();
}

/// Entry point of the `bandlab` binary; returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    init_logging();
    let result = resolve(cli.command).and_then(|cfg| run(&cfg));
    match result {
        Ok(outcome) => {
            log::info!("results in {}", outcome.out_dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema: &'static str,
    tool: &'static str,
    version: &'static str,
    linalg: &'static str,
    mode: &'static str,
    seed: u64,
    threads: usize,
    started_unix_seconds: u64,
    wall_time_seconds: f64,
    status: String,
    outputs: Vec<String>,
    config: &'a ExperimentConfig,
}

/// Per-mode result before the manifest is written.
struct Produced {
    files: Vec<String>,
    passed: Option<bool>,
    failure: Option<CliError>,
}

impl Produced {
    fn ok(files: Vec<String>) -> Self {
        Produced {
            files,
            passed: None,
            failure: None,
        }
    }
}

/// Validates `config`, runs it, and writes all outputs under `config.out`.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    config.validate().map_err(CliError::Config)?;
    let dir = config.out.clone();
    fs::create_dir_all(&dir)?;
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();

    let body = || -> Result<(Produced, usize), CliError> {
        let produced = match config.mode {
            Mode::Solve => run_solve(config, &dir)?,
            Mode::Simulate => run_simulate(config, &dir)?,
            Mode::Sweep => run_sweep(config, &dir)?,
            Mode::Verify => run_verify(config, &dir)?,
        };
        Ok((produced, rayon::current_num_threads()))
    };
    let result = match config.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| CliError::Module(crate::Error::Computation(format!("thread pool: {e}"))))?
            .install(body),
        None => body(),
    };

    let (status, outputs, threads, passed, failure) = match result {
        Ok((p, threads)) => {
            let status = match &p.failure {
                None => "ok".to_string(),
                Some(e) => e.to_string(),
            };
            (status, p.files, threads, p.passed, p.failure)
        }
        Err(e) => (
            format!("error: {e}"),
            Vec::new(),
            rayon::current_num_threads(),
            None,
            Some(e),
        ),
    };
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA,
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        linalg: "faer 0.24",
        mode: config.mode.name(),
        seed: config.seed,
        threads,
        started_unix_seconds: started,
        wall_time_seconds: clock.elapsed().as_secs_f64(),
        status,
        outputs: outputs.clone(),
        config,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    if let Some(e) = failure {
        return Err(e);
    }
    let mut files = outputs;
    files.push(MANIFEST_FILE.to_string());
    Ok(RunOutcome {
        out_dir: dir,
        files,
        passed,
    })
}

fn run_solve(config: &ExperimentConfig, dir: &Path) -> Result<Produced, CliError> {
    let grid = config.grid.points()?;
    let sol = solve_grid_partial(&grid, &config.h, config.sigma, &config.solver())?;
    let density = invert_to_density(&sol)?;
    let mut table = Table::new(
        "bandlab/solve@1",
        &[
            "x",
            "eta",
            "re_m",
            "im_m",
            "density",
            "residual",
            "iterations",
            "converged",
        ],
    );
    for k in 0..sol.len() {
        let (z, m) = (sol.grid[k], sol.values[k]);
        table.push(vec![
            fmt_f64(z.re()),
            fmt_f64(z.im()),
            fmt_f64(m.re),
            fmt_f64(m.im),
            fmt_f64(density.points[k].1),
            fmt_f64(sol.residuals[k]),
            sol.iterations[k].to_string(),
            sol.converged[k].to_string(),
        ]);
    }
    table.write(&dir.join(RESULT_FILE))?;

    let failed = sol.converged.iter().filter(|c| !**c).count();
    let mass: f64 = density
        .points
        .windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum();
    let summary = json!({
        "points": sol.len(),
        "non_converged": failed,
        "max_residual": sol.residuals.iter().copied().fold(0.0, f64::max),
        "total_iterations": sol.iterations.iter().sum::<usize>(),
        "eta": density.eta,
        "integrated_density": mass,
    });
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    log::info!("solved {} points, {failed} not converged", sol.len());
    Ok(Produced {
        files: vec![RESULT_FILE.into(), SUMMARY_FILE.into()],
        passed: None,
        failure: (failed > 0).then_some(CliError::Partial(failed)),
    })
}

fn run_simulate(config: &ExperimentConfig, dir: &Path) -> Result<Produced, CliError> {
    let shape = config.shape()?;
    let r = build_r_from_measure(&config.h, shape);
    let x = sample_x(&EnsembleConfig::new(shape, config.sigma, config.dist, config.seed)?);
    let y = assemble_y(&r, &x, config.sigma)?;
    let esd = eigenvalues_hermitian(&gram(&y))?;

    let mut eig = Table::new("bandlab/eigenvalues@1", &["eigenvalue"]);
    for &v in esd.eigenvalues() {
        eig.push(vec![fmt_f64(v)]);
    }
    eig.write(&dir.join(EIGENVALUES_FILE))?;

    let grid = config.grid.points()?;
    let limit = solve_grid_partial(&grid, &config.h, config.sigma, &config.solver())?;
    let mut table = Table::new(
        "bandlab/simulate@1",
        &[
            "x",
            "eta",
            "re_mn",
            "im_mn",
            "re_m",
            "im_m",
            "abs_diff",
            "limit_converged",
        ],
    );
    let mut sup_gap = 0.0f64;
    for ((&z, &m), converged) in grid.iter().zip(&limit.values).zip(&limit.converged) {
        let m_n = empirical_stieltjes(&esd, z);
        let diff = (m_n - m).norm();
        sup_gap = sup_gap.max(diff);
        table.push(vec![
            fmt_f64(z.re()),
            fmt_f64(z.im()),
            fmt_f64(m_n.re),
            fmt_f64(m_n.im),
            fmt_f64(m.re),
            fmt_f64(m.im),
            fmt_f64(diff),
            converged.to_string(),
        ]);
    }
    table.write(&dir.join(RESULT_FILE))?;

    let c = shape.row_budget() as f64;
    let rr: Vec<f64> = (0..shape.n()).map(|i| r.get(i, i).norm_sqr() / c).collect();
    let m_z = empirical_stieltjes(&esd, config.z);
    let failed = limit.converged.iter().filter(|c| !**c).count();
    let summary = json!({
        "n": shape.n(),
        "bandwidth": shape.bandwidth(),
        "row_budget": shape.row_budget(),
        "seed": config.seed,
        "trace": esd.sum(),
        "mean_eigenvalue": esd.mean(),
        "max_eigenvalue": esd.max(),
        "sup_abs_diff": sup_gap,
        "z": config.z,
        "m_n_at_z": [m_z.re, m_z.im],
        "de_gap_at_z": gap_from_spectrum(&rr, m_z, config.sigma, config.z)?,
        "limit_non_converged": failed,
    });
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(Produced {
        files: vec![RESULT_FILE.into(), EIGENVALUES_FILE.into(), SUMMARY_FILE.into()],
        passed: None,
        failure: (failed > 0).then_some(CliError::Partial(failed)),
    })
}

fn sweep_config(config: &ExperimentConfig) -> Result<SweepConfig, CliError> {
    Ok(SweepConfig {
        sizes: config.sizes.clone(),
        rule: config.bandwidth,
        periodic: config.periodic,
        sigma: config.sigma,
        dist: config.dist,
        h: config.h.clone(),
        trials: config.trials,
        seed: config.seed,
        grid: config.grid.points()?,
        de_point: config.z,
        cdf_grid: config.cdf_grid,
        solver: config.solver(),
    })
}

fn run_sweep(config: &ExperimentConfig, dir: &Path) -> Result<Produced, CliError> {
    let report = convergence_sweep(&sweep_config(config)?)?;
    let mut table = Table::new(
        "bandlab/sweep@1",
        &[
            "n",
            "bandwidth",
            "row_budget",
            "trials",
            "sup_gap_mean",
            "sup_gap_stderr",
            "de_gap_mean",
            "de_gap_stderr",
            "ks_distance",
            "herglotz_violations",
        ],
    );
    for s in &report.sizes {
        table.push(vec![
            s.n.to_string(),
            s.bandwidth.to_string(),
            s.row_budget.to_string(),
            s.sup_gap.trials.to_string(),
            fmt_f64(s.sup_gap.mean),
            fmt_f64(s.sup_gap.stderr),
            fmt_f64(s.de_gap.mean),
            fmt_f64(s.de_gap.stderr),
            s.ks_distance.map(fmt_f64).unwrap_or_default(),
            s.herglotz_violations.to_string(),
        ]);
    }
    table.write(&dir.join(RESULT_FILE))?;
    let summary = json!({
        "sup_gap_strictly_decreasing": report.sup_gap_strictly_decreasing(),
        "de_gap_strictly_decreasing": report.de_gap_strictly_decreasing(),
        "report": report,
    });
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(Produced::ok(vec![RESULT_FILE.into(), SUMMARY_FILE.into()]))
}

fn tail_row(t: &TailLevel, extra: Option<f64>, holds: bool) -> Vec<String> {
    let mut row = Vec::new();
    if let Some(e) = extra {
        row.push(fmt_f64(e));
    }
    row.extend([
        fmt_f64(t.t),
        fmt_f64(t.threshold),
        t.exceedances.to_string(),
        fmt_f64(t.frequency),
        fmt_f64(t.stderr),
        fmt_f64(t.bound),
        holds.to_string(),
    ]);
    row
}

fn run_verify(config: &ExperimentConfig, dir: &Path) -> Result<Produced, CliError> {
    let check = config
        .check
        .clone()
        .ok_or_else(|| CliError::Config("verify needs a `check`".into()))?;
    let mut files = vec![RESULT_FILE.to_string(), SUMMARY_FILE.to_string()];
    let (passed, summary) = match check {
        Check::RankPerturbation { ranks } => {
            let mut table = Table::new(
                "bandlab/verify-rank-perturbation@1",
                &["rank", "trial", "distance", "bound", "within_bound"],
            );
            let mut per_rank = Vec::new();
            let mut passed = true;
            for &k in &ranks {
                let rep = rank_perturbation_check(&RankConfig {
                    n: config.n,
                    rank: k,
                    trials: config.trials,
                    seed: trial_seed(config.seed, k as u64),
                })?;
                for (t, d) in rep.distances.iter().enumerate() {
                    let holds = *d <= rep.bound + 1e-10;
                    table.push(vec![
                        k.to_string(),
                        t.to_string(),
                        fmt_f64(*d),
                        fmt_f64(rep.bound),
                        holds.to_string(),
                    ]);
                }
                if let Some(cx) = &rep.counterexample {
                    let (p, q) = (
                        format!("counterexample-rank{k}-p.csv"),
                        format!("counterexample-rank{k}-q.csv"),
                    );
                    write_matrix(&dir.join(&p), cx.p.as_ref())?;
                    write_matrix(&dir.join(&q), cx.q.as_ref())?;
                    files.extend([p, q]);
                }
                passed &= rep.ok();
                per_rank.push(json!({
                    "rank": k,
                    "bound": rep.bound,
                    "max_distance": rep.max_distance,
                    "violations": rep.distances.iter().filter(|d| **d > rep.bound + 1e-10).count(),
                    "counterexample_seed": rep.counterexample.as_ref().map(|c| c.seed),
                }));
            }
            table.write(&dir.join(RESULT_FILE))?;
            (
                passed,
                json!({ "check": "rank-perturbation", "n": config.n, "trials": config.trials, "ranks": per_rank }),
            )
        }
        Check::Truncation { alpha } => {
            let shape = config.shape()?;
            let alpha = alpha.unwrap_or_else(|| default_truncation_level(&shape));
            let rep = truncation_bound_check(&TruncationConfig {
                h: config.h.clone(),
                shape,
                sigma: config.sigma,
                dist: config.dist,
                alpha,
                trials: config.trials,
                seed: config.seed,
            })?;
            let mut table = Table::new(
                "bandlab/verify-truncation@1",
                &["trial", "distance", "bound", "within_bound"],
            );
            for (t, d) in rep.distances.iter().enumerate() {
                let holds = *d <= rep.bound + 1e-10;
                table.push(vec![t.to_string(), fmt_f64(*d), fmt_f64(rep.bound), holds.to_string()]);
            }
            table.write(&dir.join(RESULT_FILE))?;
            if let Some(cx) = &rep.counterexample {
                write_matrix(&dir.join("counterexample-y.csv"), cx.y.as_ref())?;
                write_matrix(&dir.join("counterexample-y-alpha.csv"), cx.y_alpha.as_ref())?;
                files.extend([
                    "counterexample-y.csv".to_string(),
                    "counterexample-y-alpha.csv".to_string(),
                ]);
            }
            (
                rep.ok(),
                json!({
                    "check": "truncation",
                    "alpha": rep.alpha,
                    "truncated": rep.truncated,
                    "bound": rep.bound,
                    "max_distance": rep.max_distance,
                    "counterexample": rep.counterexample.as_ref().map(|c| json!({"trial": c.trial, "seed": c.seed, "distance": c.distance})),
                }),
            )
        }
        Check::NormTail { ts } => {
            let rep = norm_tail_experiment(&NormTailConfig {
                shape: config.shape()?,
                dist: config.dist,
                trials: config.trials,
                seed: config.seed,
                ts,
            })?;
            let mut table = Table::new(
                "bandlab/verify-norm-tail@1",
                &[
                    "t",
                    "threshold",
                    "exceedances",
                    "frequency",
                    "stderr",
                    "bound",
                    "within_bound",
                ],
            );
            let mut passed = true;
            for l in &rep.levels {
                let holds = l.frequency <= l.bound;
                passed &= holds;
                table.push(tail_row(l, None, holds));
            }
            table.write(&dir.join(RESULT_FILE))?;
            (passed, json!({ "check": "norm-tail", "report": rep }))
        }
        Check::QuadraticForm { role, moment_order } => {
            let rep = quadratic_form_stat(&QuadFormConfig {
                sizes: config.sizes.clone(),
                rule: config.bandwidth,
                periodic: config.periodic,
                dist: config.dist,
                role,
                moment_order,
                trials: config.trials,
                seed: config.seed,
                sigma: config.sigma,
                h: config.h.clone(),
                z: config.z,
            })?;
            let mut table = Table::new(
                "bandlab/verify-quadratic-form@1",
                &["n", "bandwidth", "row_budget", "trials", "mean", "stderr"],
            );
            for l in &rep.levels {
                table.push(vec![
                    l.n.to_string(),
                    l.bandwidth.to_string(),
                    l.row_budget.to_string(),
                    l.stat.trials.to_string(),
                    fmt_f64(l.stat.mean),
                    fmt_f64(l.stat.stderr),
                ]);
            }
            table.write(&dir.join(RESULT_FILE))?;
            let (lo, hi) = SLOPE_WINDOW;
            let passed = match role {
                MatrixRole::Resolvent => {
                    rep.slope_vs_n.is_some_and(|f| f.within(lo, hi))
                        && rep.slope_vs_row_budget.is_some_and(|f| f.within(lo, hi))
                }
                MatrixRole::Identity if moment_order == 1 => rep.levels.iter().all(|l| {
                    let want = l.row_budget as f64 * (config.dist.fourth_moment() - 1.0);
                    (l.stat.mean - want).abs() <= 4.0 * l.stat.stderr + 1e-9 * want.max(1.0)
                }),
                MatrixRole::Identity => true,
                MatrixRole::Zero => rep.levels.iter().all(|l| l.stat.mean == 0.0),
            };
            (
                passed,
                json!({ "check": "quadratic-form", "slope_window": [lo, hi], "report": rep }),
            )
        }
        Check::PartialTrace {
            holdout_trials,
            multipliers,
        } => {
            let rep = partial_trace_tail_experiment(&PartialTraceConfig {
                shape: config.shape()?,
                dist: config.dist,
                sigma: config.sigma,
                h: config.h.clone(),
                z: config.z,
                trials: config.trials,
                holdout_trials: holdout_trials.unwrap_or(10 * config.trials),
                seed: config.seed,
                multipliers: multipliers.clone(),
            })?;
            let mut table = Table::new(
                "bandlab/verify-partial-trace@1",
                &[
                    "multiplier",
                    "t",
                    "threshold",
                    "exceedances",
                    "frequency",
                    "stderr",
                    "bound",
                    "within_bound",
                ],
            );
            let mut passed = true;
            for (l, &k) in rep.levels.iter().zip(&multipliers) {
                let holds = l.holds_with_margin(TAIL_MARGIN_SE);
                passed &= holds;
                table.push(tail_row(l, Some(k), holds));
            }
            table.write(&dir.join(RESULT_FILE))?;
            (
                passed,
                json!({ "check": "partial-trace", "margin_stderr": TAIL_MARGIN_SE, "report": rep }),
            )
        }
    };
    let mut summary = summary;
    summary["passed"] = json!(passed);
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    log::info!("verification {}", if passed { "passed" } else { "FAILED" });
    Ok(Produced {
        files,
        passed: Some(passed),
        failure: (!passed).then(|| CliError::Failed("bound violated, see summary.json".into())),
    })
}
