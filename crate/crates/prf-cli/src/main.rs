//! Command-line laboratory for purely random forest experiments.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure.
//! `PRF_NUM_THREADS` caps the worker pool; results never depend on it.

mod config;
mod output;

use clap::{Args, Parser, Subcommand};
use config::RawConfig;
use output::RunWriter;
use prf_core::bias::{
    estimate_bias, estimate_estimation_error, estimate_risk, forest_size_curve, BorderPolicy,
    QValue, ReplicateBudget, XIntegration,
};
use prf_core::checks;
use prf_core::functions::RegressionFn;
use prf_core::kernel::{default_t_grid, estimate_kernel};
use prf_core::models::ModelSpec;
use prf_core::oracles::rate_exponents;
use prf_core::rates::fit_rate;
use prf_core::seeding::SeedSpec;
use serde::Serialize;
use serde_json::json;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "prf",
    version,
    about = "Bias/variance laboratory for purely random forest regression"
)]
struct Cli {
    /// Flat JSON config file; command-line flags override its keys.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the bias decomposition of one model at one size
    Bias(Opts),
    /// Sweep a size grid and fit log2-log2 convergence slopes
    RateSweep(Opts),
    /// Estimate the equivalent smoothing kernel at an anchor point
    Kernel(Opts),
    /// Compare Monte Carlo moments against the closed-form oracles
    CheckMoments(Opts),
    /// Estimation error of fitted forests against theoretical bounds
    EstimationError(Opts),
    /// Full risk of a fitted forest and its decomposition
    Risk(Opts),
    /// Forest bias against the number of trees
    ForestSize(Opts),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Bias(_) => "bias",
            Command::RateSweep(_) => "rate-sweep",
            Command::Kernel(_) => "kernel",
            Command::CheckMoments(_) => "check-moments",
            Command::EstimationError(_) => "estimation-error",
            Command::Risk(_) => "risk",
            Command::ForestSize(_) => "forest-size",
        }
    }

    fn opts(&self) -> &Opts {
        match self {
            Command::Bias(o)
            | Command::RateSweep(o)
            | Command::Kernel(o)
            | Command::CheckMoments(o)
            | Command::EstimationError(o)
            | Command::Risk(o)
            | Command::ForestSize(o) => o,
        }
    }
}

#[derive(Args)]
struct Opts {
    /// Partition model: toy | purf | bprf | ubprf | midpoint | holdout
    #[arg(long)]
    model: Option<String>,
    /// Split count (toy/purf/ubprf) or target leaves (holdout)
    #[arg(long)]
    k: Option<usize>,
    /// Depth of recursive models (2^p leaves)
    #[arg(long)]
    p: Option<usize>,
    /// Input dimension
    #[arg(long)]
    d: Option<usize>,
    /// Midpoint coordinate weights, comma separated
    #[arg(long)]
    weights: Option<String>,
    /// Hold-out extra sample size (default: leaves^2)
    #[arg(long)]
    n_prime: Option<usize>,
    /// Hold-out extra sample noise level (default 0.25)
    #[arg(long)]
    sigma_prime: Option<f64>,
    /// Candidate split coordinates per node (default max(d/3, 1))
    #[arg(long)]
    mtry: Option<usize>,
    /// Regression target: sinusoidal | abs | sum | friedman1
    #[arg(long = "fn")]
    function: Option<String>,
    /// Size grid 'lo:hi' (powers of two) or 'k1,k2,...'
    #[arg(long)]
    grid: Option<String>,
    /// Drop the largest grid size
    #[arg(long)]
    drop_last: bool,
    /// Forest sizes, e.g. '1,16,inf'
    #[arg(long)]
    q_list: Option<String>,
    /// Number of trees for risk/estimation-error runs
    #[arg(long)]
    q: Option<u64>,
    /// Integration points
    #[arg(long)]
    n_x: Option<usize>,
    /// Partitions for tree-level estimates
    #[arg(long)]
    n_u_tree: Option<usize>,
    /// Partitions for infinite-forest estimates
    #[arg(long)]
    n_u_inf: Option<usize>,
    /// Integration region: full | borderless | both
    #[arg(long)]
    border: Option<String>,
    /// Custom border width for borderless integration
    #[arg(long)]
    eps: Option<f64>,
    /// Stratified x-integration instead of plain Monte Carlo
    #[arg(long)]
    stratified: bool,
    /// Learning sample size
    #[arg(long)]
    n: Option<usize>,
    /// Noise level of the learning sample
    #[arg(long)]
    sigma: Option<f64>,
    /// Fresh (partitions, dataset) replicates
    #[arg(long)]
    n_replicates: Option<usize>,
    /// Evaluation points per replicate
    #[arg(long)]
    n_test_x: Option<usize>,
    /// Replicates for the direct forest-size simulation (0 disables)
    #[arg(long)]
    direct_replicates: Option<usize>,
    /// Anchor point (comma separated for d > 1)
    #[arg(long)]
    x: Option<String>,
    /// Kernel grid resolution
    #[arg(long)]
    t_points: Option<usize>,
    /// Monte Carlo replicates for moment/kernel checks
    #[arg(long)]
    reps: Option<usize>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out_dir: Option<String>,
    /// Also emit a gnuplot script next to the CSV
    #[arg(long)]
    plot: bool,
}

impl Opts {
    fn to_raw(&self) -> RawConfig {
        RawConfig {
            command: None,
            model: self.model.clone(),
            k: self.k,
            p: self.p,
            d: self.d,
            weights: self.weights.clone(),
            n_prime: self.n_prime,
            sigma_prime: self.sigma_prime,
            mtry: self.mtry,
            function: self.function.clone(),
            grid: self.grid.clone(),
            drop_last: self.drop_last.then_some(true),
            q_list: self.q_list.clone(),
            q: self.q,
            n_x: self.n_x,
            n_u_tree: self.n_u_tree,
            n_u_inf: self.n_u_inf,
            border: self.border.clone(),
            eps: self.eps,
            stratified: self.stratified.then_some(true),
            n: self.n,
            sigma: self.sigma,
            n_replicates: self.n_replicates,
            n_test_x: self.n_test_x,
            direct_replicates: self.direct_replicates,
            x: self.x.clone(),
            t_points: self.t_points,
            reps: self.reps,
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            plot: self.plot.then_some(true),
        }
    }
}

enum RunError {
    Config(String),
    Numeric(String),
}

impl RunError {
    fn code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numeric(_) => 3,
        }
    }
}

fn cfg_err<E: ToString>(e: E) -> RunError {
    RunError::Config(e.to_string())
}

fn num_err<E: ToString>(e: E) -> RunError {
    RunError::Numeric(e.to_string())
}

fn main() {
    if let Ok(v) = std::env::var("PRF_NUM_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n >= 1 => {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .expect("worker pool");
            }
            _ => {
                eprintln!("prf: ignoring invalid PRF_NUM_THREADS='{v}'");
            }
        }
    }
    let cli = Cli::parse();
    std::process::exit(run(cli));
}

fn run(cli: Cli) -> i32 {
    let file_cfg = match &cli.config {
        Some(path) => match RawConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("prf: {e}");
                return 2;
            }
        },
        None => RawConfig::default(),
    };
    let (name, flag_cfg) = match &cli.command {
        Some(cmd) => (cmd.name().to_string(), cmd.opts().to_raw()),
        None => match file_cfg.command.clone() {
            Some(name) => (name, RawConfig::default()),
            None => {
                eprintln!("prf: no command given on the command line or in the config file");
                return 2;
            }
        },
    };
    let mut cfg = flag_cfg.merge_over(file_cfg);
    cfg.command = Some(name.clone());

    let started = Instant::now();
    let result = match name.as_str() {
        "bias" => run_bias(&cfg, started),
        "rate-sweep" => run_rate_sweep(&cfg, started),
        "kernel" => run_kernel(&cfg, started),
        "check-moments" => run_check_moments(&cfg, started),
        "estimation-error" => run_estimation_error(&cfg, started),
        "risk" => run_risk(&cfg, started),
        "forest-size" => run_forest_size(&cfg, started),
        other => Err(RunError::Config(format!(
            "unknown command '{other}'; valid: bias, rate-sweep, kernel, check-moments, estimation-error, risk, forest-size"
        ))),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let (label, msg) = match &e {
                RunError::Config(m) => ("config error", m),
                RunError::Numeric(m) => ("numeric failure", m),
            };
            eprintln!("prf {name}: {label}: {msg}");
            e.code()
        }
    }
}

/// Integration policies requested by the `border`/`eps` keys.
fn resolve_policies(cfg: &RawConfig, spec: &ModelSpec) -> Result<Vec<BorderPolicy>, RunError> {
    let mode = cfg.border.as_deref().unwrap_or("full");
    if mode == "full" && cfg.eps.is_some() {
        return Err(RunError::Config(
            "conflicting flags: --eps has no effect with --border full".into(),
        ));
    }
    let borderless = || -> Result<BorderPolicy, RunError> {
        match cfg.eps {
            Some(eps) => BorderPolicy::custom(eps).map_err(cfg_err),
            None => BorderPolicy::borderless_default(spec).map_err(cfg_err),
        }
    };
    match mode {
        "full" => Ok(vec![BorderPolicy::Full]),
        "borderless" => Ok(vec![borderless()?]),
        "both" => Ok(vec![BorderPolicy::Full, borderless()?]),
        other => Err(RunError::Config(format!(
            "unknown border mode '{other}'; valid: full, borderless, both"
        ))),
    }
}

fn x_mode(cfg: &RawConfig) -> XIntegration {
    if cfg.stratified == Some(true) {
        XIntegration::Stratified
    } else {
        XIntegration::MonteCarlo
    }
}

#[derive(Serialize)]
struct BiasRow {
    model: String,
    function: String,
    d: usize,
    size_parameter: usize,
    leaves: usize,
    policy: String,
    eps: Option<f64>,
    q: String,
    b1: f64,
    b1_se: f64,
    b_inf: f64,
    b_inf_se: f64,
    b_inf_raw: f64,
    v_tree: f64,
    v_tree_se: f64,
    v_tree_direct: f64,
    v_tree_direct_se: f64,
    b_q: f64,
    b_q_se: f64,
}

fn run_bias(cfg: &RawConfig, started: Instant) -> Result<(), RunError> {
    let spec = cfg.resolve_model(None).map_err(RunError::Config)?;
    let f = cfg.resolve_function(spec.dim()).map_err(RunError::Config)?;
    let budget = cfg.resolve_budget(&spec);
    let q_list = cfg.resolve_q_list("1").map_err(RunError::Config)?;
    let policies = resolve_policies(cfg, &spec)?;
    let seed = SeedSpec::new(cfg.seed());

    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for policy in policies {
        let r = estimate_bias(&spec, &f, policy, &q_list, budget, x_mode(cfg), seed)
            .map_err(num_err)?;
        for (q, est) in &r.b_q {
            rows.push(BiasRow {
                model: spec.name().into(),
                function: f.name().into(),
                d: spec.dim(),
                size_parameter: r.size_parameter,
                leaves: spec.nominal_leaves(),
                policy: if r.eps.is_some() { "borderless".into() } else { "full".into() },
                eps: r.eps,
                q: q.to_string(),
                b1: r.b1.value,
                b1_se: r.b1.stderr,
                b_inf: r.b_inf.value,
                b_inf_se: r.b_inf.stderr,
                b_inf_raw: r.b_inf_raw,
                v_tree: r.v_tree.value,
                v_tree_se: r.v_tree.stderr,
                v_tree_direct: r.v_tree_direct.value,
                v_tree_direct_se: r.v_tree_direct.stderr,
                b_q: est.value,
                b_q_se: est.stderr,
            });
        }
        reports.push(r);
    }

    let writer = RunWriter::new(cfg.out_dir(), "bias").map_err(RunError::Config)?;
    writer.write_csv(&rows).map_err(num_err)?;
    writer
        .write_report("bias", cfg, json!({ "reports": reports }), started.elapsed().as_secs_f64())
        .map_err(num_err)?;
    Ok(())
}

#[derive(Serialize)]
struct RateRow {
    k: usize,
    b1: f64,
    b1_se: f64,
    b_inf: f64,
    b_inf_se: f64,
    v_tree: f64,
    v_tree_se: f64,
    b1_borderless: Option<f64>,
    b1_borderless_se: Option<f64>,
    b_inf_borderless: Option<f64>,
    b_inf_borderless_se: Option<f64>,
}

fn run_rate_sweep(cfg: &RawConfig, started: Instant) -> Result<(), RunError> {
    let grid = cfg.resolve_grid().map_err(RunError::Config)?;
    let seed = SeedSpec::new(cfg.seed());
    let q_list = [QValue::Finite(1)];

    let mut rows: Vec<RateRow> = Vec::new();
    let mut theoretical = None;
    for &k in &grid {
        let spec = cfg.resolve_model(Some(k)).map_err(RunError::Config)?;
        let f = cfg.resolve_function(spec.dim()).map_err(RunError::Config)?;
        let budget = cfg.resolve_budget(&spec);
        if theoretical.is_none() {
            theoretical = rate_exponents(&spec).ok();
        }
        let full = estimate_bias(&spec, &f, BorderPolicy::Full, &q_list, budget, x_mode(cfg), seed)
            .map_err(num_err)?;
        // Borderless runs where the model defines a border width (unless
        // explicitly disabled with --border full).
        let want_borderless = cfg.border.as_deref() != Some("full")
            && (spec.default_border_eps().is_some() || cfg.eps.is_some());
        let bl = if want_borderless {
            let policy = match cfg.eps {
                Some(eps) => BorderPolicy::custom(eps).map_err(cfg_err)?,
                None => BorderPolicy::borderless_default(&spec).map_err(cfg_err)?,
            };
            Some(
                estimate_bias(&spec, &f, policy, &q_list, budget, x_mode(cfg), seed)
                    .map_err(num_err)?,
            )
        } else {
            None
        };
        rows.push(RateRow {
            k,
            b1: full.b1.value,
            b1_se: full.b1.stderr,
            b_inf: full.b_inf.value,
            b_inf_se: full.b_inf.stderr,
            v_tree: full.v_tree.value,
            v_tree_se: full.v_tree.stderr,
            b1_borderless: bl.as_ref().map(|r| r.b1.value),
            b1_borderless_se: bl.as_ref().map(|r| r.b1.stderr),
            b_inf_borderless: bl.as_ref().map(|r| r.b_inf.value),
            b_inf_borderless_se: bl.as_ref().map(|r| r.b_inf.stderr),
        });
    }

    let fit_of = |get: &dyn Fn(&RateRow) -> Option<f64>| -> Result<Option<prf_core::rates::RateFit>, RunError> {
        let table: Vec<(f64, f64)> = rows
            .iter()
            .filter_map(|r| get(r).map(|b| (r.k as f64, b)))
            .collect();
        if table.len() == rows.len() {
            fit_rate(&table).map(Some).map_err(num_err)
        } else {
            Ok(None)
        }
    };
    let fits = json!({
        "tree": fit_of(&|r| Some(r.b1))?,
        "forest": fit_of(&|r| Some(r.b_inf))?,
        "tree_borderless": fit_of(&|r| r.b1_borderless)?,
        "forest_borderless": fit_of(&|r| r.b_inf_borderless)?,
    });

    let writer = RunWriter::new(cfg.out_dir(), "rate_sweep").map_err(RunError::Config)?;
    let csv = writer.write_csv(&rows).map_err(num_err)?;
    if cfg.plot == Some(true) {
        let has_bl = rows.iter().all(|r| r.b_inf_borderless.is_some());
        let title = format!(
            "{} / {}",
            cfg.model.as_deref().unwrap_or("?"),
            cfg.function.as_deref().unwrap_or("?")
        );
        writer
            .write_gnuplot(&output::rate_sweep_script(&csv, has_bl, &title))
            .map_err(num_err)?;
    }
    writer
        .write_report(
            "rate-sweep",
            cfg,
            json!({ "fits": fits, "theoretical_exponents": theoretical }),
            started.elapsed().as_secs_f64(),
        )
        .map_err(num_err)?;
    Ok(())
}

#[derive(Serialize)]
struct KernelRow {
    t: f64,
    h_estimate: f64,
    stderr: f64,
}

fn run_kernel(cfg: &RawConfig, started: Instant) -> Result<(), RunError> {
    let spec = cfg.resolve_model(None).map_err(RunError::Config)?;
    if spec.dim() != 1 {
        return Err(RunError::Config("kernel estimation needs a one-dimensional model".into()));
    }
    let fname = cfg.function.clone().unwrap_or_else(|| "sinusoidal".into());
    let f = RegressionFn::from_name(&fname, 1).map_err(cfg_err)?;
    let x = cfg.resolve_x(1, 0.5).map_err(RunError::Config)?[0];
    let grid = default_t_grid(cfg.t_points.unwrap_or(513));
    let reps = cfg.reps.unwrap_or(10_000);
    let table = estimate_kernel(&spec, &f, x, &grid, reps, SeedSpec::new(cfg.seed()))
        .map_err(num_err)?;

    let rows: Vec<KernelRow> = table
        .t
        .iter()
        .zip(table.h.iter().zip(&table.stderr))
        .map(|(&t, (&h, &se))| KernelRow { t, h_estimate: h, stderr: se })
        .collect();
    let writer = RunWriter::new(cfg.out_dir(), "kernel").map_err(RunError::Config)?;
    let csv = writer.write_csv(&rows).map_err(num_err)?;
    if cfg.plot == Some(true) {
        let title = format!("equivalent kernel, {} at x = {x}", spec.name());
        writer.write_gnuplot(&output::kernel_script(&csv, &title)).map_err(num_err)?;
    }
    writer
        .write_report(
            "kernel",
            cfg,
            json!({
                "model": table.model,
                "x": table.x,
                "n_partitions": table.n_partitions,
                "mass": table.mass,
                "mass_se": table.mass_se,
            }),
            started.elapsed().as_secs_f64(),
        )
        .map_err(num_err)?;
    Ok(())
}

fn run_check_moments(cfg: &RawConfig, started: Instant) -> Result<(), RunError> {
    let spec = cfg.resolve_model(None).map_err(RunError::Config)?;
    let x = cfg.resolve_x(spec.dim(), 0.5).map_err(RunError::Config)?;
    // Refuse models without closed forms before any sampling.
    prf_core::oracles::moments_for(&spec, &x).map_err(cfg_err)?;
    let reps = cfg.reps.unwrap_or(100_000);
    let rows = checks::check_moments(&spec, &x, reps, SeedSpec::new(cfg.seed()))
        .map_err(num_err)?;
    let max_z = checks::max_abs_z(&rows);

    let writer = RunWriter::new(cfg.out_dir(), "check_moments").map_err(RunError::Config)?;
    writer.write_csv(&rows).map_err(num_err)?;
    writer
        .write_report(
            "check-moments",
            cfg,
            json!({ "max_abs_z": max_z, "reps": reps, "x": x }),
            started.elapsed().as_secs_f64(),
        )
        .map_err(num_err)?;
    println!("check-moments: {} rows, max |z| = {max_z:.3}", rows.len());
    Ok(())
}

#[derive(Serialize)]
struct EstimationErrorRow {
    model: String,
    function: String,
    n: usize,
    sigma: f64,
    q: u64,
    mc_estimate: f64,
    mc_se: f64,
    lower_bound: f64,
    upper_bound: f64,
    lipschitz_upper_bound: Option<f64>,
    mean_leaves: f64,
    mean_empty_leaves: f64,
    within_bounds: bool,
}

fn run_estimation_error(cfg: &RawConfig, started: Instant) -> Result<(), RunError> {
    let spec = cfg.resolve_model(None).map_err(RunError::Config)?;
    let f = cfg.resolve_function(spec.dim()).map_err(RunError::Config)?;
    let n = cfg.n.unwrap_or(1000);
    let sigma = cfg.sigma.unwrap_or(0.25);
    let q = cfg.q.unwrap_or(1);
    let budget = ReplicateBudget {
        n_replicates: cfg.n_replicates.unwrap_or(200),
        n_test_x: cfg.n_test_x.unwrap_or(200),
    };
    let r = estimate_estimation_error(&spec, &f, n, sigma, q, budget, SeedSpec::new(cfg.seed()))
        .map_err(num_err)?;
    let row = EstimationErrorRow {
        model: spec.name().into(),
        function: f.name().into(),
        n,
        sigma,
        q,
        mc_estimate: r.mc_estimate.value,
        mc_se: r.mc_estimate.stderr,
        lower_bound: r.lower_bound,
        upper_bound: r.upper_bound,
        lipschitz_upper_bound: r.lipschitz_upper_bound,
        mean_leaves: r.mean_leaves,
        mean_empty_leaves: r.mean_empty_leaves,
        within_bounds: r.lower_bound <= r.mc_estimate.value && r.mc_estimate.value <= r.upper_bound,
    };
    let writer = RunWriter::new(cfg.out_dir(), "estimation_error").map_err(RunError::Config)?;
    writer.write_csv(&[row]).map_err(num_err)?;
    writer
        .write_report("estimation-error", cfg, json!(r), started.elapsed().as_secs_f64())
        .map_err(num_err)?;
    Ok(())
}

#[derive(Serialize)]
struct RiskRow {
    model: String,
    function: String,
    n: usize,
    sigma: f64,
    q: u64,
    risk: f64,
    risk_se: f64,
    bias_part: f64,
    bias_part_se: f64,
    variance_part: f64,
    variance_part_se: f64,
    decomposition_gap: f64,
}

fn run_risk(cfg: &RawConfig, started: Instant) -> Result<(), RunError> {
    let spec = cfg.resolve_model(None).map_err(RunError::Config)?;
    let f = cfg.resolve_function(spec.dim()).map_err(RunError::Config)?;
    let n = cfg.n.unwrap_or(1000);
    let sigma = cfg.sigma.unwrap_or(0.25);
    let q = cfg.q.unwrap_or(1);
    let budget = ReplicateBudget {
        n_replicates: cfg.n_replicates.unwrap_or(200),
        n_test_x: cfg.n_test_x.unwrap_or(200),
    };
    let r = estimate_risk(&spec, &f, n, sigma, q, budget, SeedSpec::new(cfg.seed()))
        .map_err(num_err)?;
    let row = RiskRow {
        model: spec.name().into(),
        function: f.name().into(),
        n,
        sigma,
        q,
        risk: r.risk.value,
        risk_se: r.risk.stderr,
        bias_part: r.bias_part.value,
        bias_part_se: r.bias_part.stderr,
        variance_part: r.variance_part.value,
        variance_part_se: r.variance_part.stderr,
        decomposition_gap: r.risk.value - r.bias_part.value - r.variance_part.value,
    };
    let writer = RunWriter::new(cfg.out_dir(), "risk").map_err(RunError::Config)?;
    writer.write_csv(&[row]).map_err(num_err)?;
    writer
        .write_report("risk", cfg, json!(r), started.elapsed().as_secs_f64())
        .map_err(num_err)?;
    Ok(())
}

#[derive(Serialize)]
struct ForestSizeRowOut {
    q: String,
    bq_identity: f64,
    bq_identity_se: f64,
    bq_direct: Option<f64>,
    bq_direct_se: Option<f64>,
}

fn run_forest_size(cfg: &RawConfig, started: Instant) -> Result<(), RunError> {
    let spec = cfg.resolve_model(None).map_err(RunError::Config)?;
    let f = cfg.resolve_function(spec.dim()).map_err(RunError::Config)?;
    let budget = cfg.resolve_budget(&spec);
    let q_grid = cfg.resolve_q_list("1,2,4,8,16,32,inf").map_err(RunError::Config)?;
    let policies = resolve_policies(cfg, &spec)?;
    if policies.len() != 1 {
        return Err(RunError::Config("forest-size takes a single border policy".into()));
    }
    let direct = match cfg.direct_replicates.unwrap_or(2000) {
        0 => None,
        reps => Some(reps),
    };
    let curve = forest_size_curve(&spec, &f, policies[0], &q_grid, budget, direct, SeedSpec::new(cfg.seed()))
        .map_err(num_err)?;

    let rows: Vec<ForestSizeRowOut> = curve
        .rows
        .iter()
        .map(|r| ForestSizeRowOut {
            q: r.q.to_string(),
            bq_identity: r.bq_identity.value,
            bq_identity_se: r.bq_identity.stderr,
            bq_direct: r.bq_direct.map(|e| e.value),
            bq_direct_se: r.bq_direct.map(|e| e.stderr),
        })
        .collect();
    let writer = RunWriter::new(cfg.out_dir(), "forest_size").map_err(RunError::Config)?;
    let csv = writer.write_csv(&rows).map_err(num_err)?;
    if cfg.plot == Some(true) {
        let title = format!("forest size curve, {} / {}", spec.name(), f.name());
        writer.write_gnuplot(&output::forest_size_script(&csv, &title)).map_err(num_err)?;
    }
    writer
        .write_report(
            "forest-size",
            cfg,
            json!({
                "q_star": curve.q_star,
                "slope_vs_inv_q": curve.slope_vs_inv_q,
                "v_tree": curve.report.v_tree,
                "b_inf": curve.report.b_inf,
                "report": curve.report,
            }),
            started.elapsed().as_secs_f64(),
        )
        .map_err(num_err)?;
    Ok(())
}
