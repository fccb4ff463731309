//! Batch command-line front end: simulation, sweeps, analytic values,
//! fixed-point solves, certification, and the profit landscape.
//!
//! Configuration comes from an optional JSON file (`--config`) with flat
//! keys mirroring the flags; command-line flags win over file values. Output
//! artifacts are written atomically (temp file + rename) and a one-line JSON
//! summary goes to standard output. Exit codes: 0 success, 1 validation
//! error, 2 numerical non-convergence, 3 certificate violation.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use flexmatch::estimator::{
    estimate_with_mode, heatmap_ratio, rows_to_csv, sweep_allocations, EstimateRequest, Metric,
    Row,
};
use flexmatch::experiment::{landscape_grid, landscape_to_csv, run_trajectory, ProfitSpec,
    TrajectoryMode};
use flexmatch::graphs::{FlexAllocation, ModelParams, Variant};
use flexmatch::ks_solver::{
    self, mu_ks, solve_ks_fixed_point, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use flexmatch::verifier::{
    certificates_to_csv, certify_comparison_region, certify_sod_cell, coupling_inequality_check,
};
use flexmatch::ExecMode;

#[derive(Parser)]
#[command(name = "flexmatch", version, about = "Matching performance of two-sided flexibility allocations: simulation, analytics, certification")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// JSON config file; flat keys mirror the flags, flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Regular intensity alpha.
    #[arg(long, global = true)]
    alpha: Option<f64>,

    /// Flexible intensity alpha_f.
    #[arg(long = "alpha-f", global = true)]
    alpha_f: Option<f64>,

    /// Flexibility budget B (b_l + b_r).
    #[arg(long = "B", global = true)]
    budget: Option<f64>,

    /// Left-side flexibility probability.
    #[arg(long, global = true)]
    bl: Option<f64>,

    /// Right-side flexibility probability.
    #[arg(long, global = true)]
    br: Option<f64>,

    /// Side size of the bipartite graph.
    #[arg(long, global = true)]
    n: Option<usize>,

    /// Monte Carlo replicates.
    #[arg(long, global = true)]
    replicates: Option<usize>,

    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Certification cell width.
    #[arg(long, global = true)]
    delta: Option<f64>,

    /// Scalar-solver tolerance.
    #[arg(long, global = true)]
    eps: Option<f64>,

    /// Experimentation step size.
    #[arg(long, global = true)]
    gamma: Option<f64>,

    /// Unit flexibility cost.
    #[arg(long, global = true)]
    c: Option<f64>,

    /// Cost exponent d (1 = linear).
    #[arg(long = "cost-exponent", global = true)]
    cost_exponent: Option<f64>,

    /// Right-side imbalance factor.
    #[arg(long, global = true)]
    lambda: Option<f64>,

    /// Local-model neighborhood width.
    #[arg(long, global = true)]
    k: Option<usize>,

    /// Graph model variant.
    #[arg(long, global = true, value_enum)]
    variant: Option<VariantArg>,

    /// Metric to estimate.
    #[arg(long, global = true, value_enum)]
    metric: Option<MetricArg>,

    /// Thread count (default: FLEXMATCH_THREADS or auto).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output artifact path (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Artifact format.
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,

    /// Allocation grid points for sweeps.
    #[arg(long = "grid-points", global = true)]
    grid_points: Option<usize>,

    /// Landscape grid resolution per axis.
    #[arg(long, global = true)]
    resolution: Option<usize>,

    /// Trajectory mode.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,

    /// Maximum trajectory steps.
    #[arg(long = "max-steps", global = true)]
    max_steps: Option<usize>,

    /// Trajectory start b_l.
    #[arg(long = "start-bl", global = true)]
    start_bl: Option<f64>,

    /// Trajectory start b_r.
    #[arg(long = "start-br", global = true)]
    start_br: Option<f64>,

    /// Emit curvature-sign certificates instead of comparison certificates.
    #[arg(long, global = true)]
    sod: bool,

    /// Test double: corrupt the coupling matcher to exercise the
    /// certificate-violation exit path.
    #[arg(long = "inject-fault", global = true, hide = true)]
    inject_fault: bool,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Estimate metrics for one allocation.
    Simulate,
    /// Estimate metrics along the allocation line for a budget.
    Sweep,
    /// Balanced / one-sided metric ratio over an (alpha, alpha_f - alpha) grid.
    Heatmap,
    /// Closed-form degree-0 metric and its optimal-allocation classifier.
    Phi,
    /// Asymmetry thresholds alpha_star(B) and alpha_f_star(B, alpha).
    Thresholds,
    /// Solve the fixed-point system for one allocation.
    Ks,
    /// Fixed-point surrogate ratio table over (alpha, gap, B) grids.
    KsSweep,
    /// Certify the one-sided vs balanced comparison (or curvature signs)
    /// over a cell grid.
    Verify,
    /// Randomized check of the pair-coupling matching inequality.
    Coupling,
    /// Run a greedy experimentation trajectory on the profit surface.
    Experiment,
    /// Tabulate the profit surface over allocations.
    Landscape,
}

impl Command {
    fn as_str(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Heatmap => "heatmap",
            Command::Phi => "phi",
            Command::Thresholds => "thresholds",
            Command::Ks => "ks",
            Command::KsSweep => "ks-sweep",
            Command::Verify => "verify",
            Command::Coupling => "coupling",
            Command::Experiment => "experiment",
            Command::Landscape => "landscape",
        }
    }

    fn from_str(s: &str) -> Option<Self> {
        Some(match s {
            "simulate" => Command::Simulate,
            "sweep" => Command::Sweep,
            "heatmap" => Command::Heatmap,
            "phi" => Command::Phi,
            "thresholds" => Command::Thresholds,
            "ks" => Command::Ks,
            "ks-sweep" => Command::KsSweep,
            "verify" => Command::Verify,
            "coupling" => Command::Coupling,
            "experiment" => Command::Experiment,
            "landscape" => Command::Landscape,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Base,
    Local,
    Spatial,
    Imbalanced,
    Weighted,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Variant {
        match v {
            VariantArg::Base => Variant::Base,
            VariantArg::Local => Variant::Local,
            VariantArg::Spatial => Variant::Spatial,
            VariantArg::Imbalanced => Variant::Imbalanced,
            VariantArg::Weighted => Variant::Weighted,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    Mu,
    Phi,
    PsiNaive,
    PsiPrior,
    Ks,
    Weight,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Metric {
        match m {
            MetricArg::Mu => Metric::Mu,
            MetricArg::Phi => Metric::Phi,
            MetricArg::PsiNaive => Metric::PsiNaive,
            MetricArg::PsiPrior => Metric::PsiPrior,
            MetricArg::Ks => Metric::Ks,
            MetricArg::Weight => Metric::Weight,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Coordinate,
    Joint,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

/// Flat JSON config; unknown keys are rejected so typos surface as
/// validation errors.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    command: Option<String>,
    alpha: Option<f64>,
    alpha_f: Option<f64>,
    #[serde(alias = "B")]
    budget: Option<f64>,
    bl: Option<f64>,
    br: Option<f64>,
    n: Option<usize>,
    replicates: Option<usize>,
    seed: Option<u64>,
    delta: Option<f64>,
    eps: Option<f64>,
    gamma: Option<f64>,
    c: Option<f64>,
    cost_exponent: Option<f64>,
    lambda: Option<f64>,
    k: Option<usize>,
    variant: Option<String>,
    metric: Option<String>,
    metrics: Option<Vec<String>>,
    threads: Option<usize>,
    out: Option<PathBuf>,
    format: Option<String>,
    grid_points: Option<usize>,
    resolution: Option<usize>,
    mode: Option<String>,
    max_steps: Option<usize>,
    start_bl: Option<f64>,
    start_br: Option<f64>,
    sod: Option<bool>,
    // Heatmap / ks-sweep / verify grids.
    alpha_min: Option<f64>,
    alpha_max: Option<f64>,
    alpha_count: Option<usize>,
    gap_min: Option<f64>,
    gap_max: Option<f64>,
    gap_count: Option<usize>,
    alpha_f_min: Option<f64>,
    alpha_f_max: Option<f64>,
    budgets: Option<Vec<f64>>,
}

enum CliError {
    Validation(String),
    NonConvergence(String),
    CertificateViolation(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::NonConvergence(_) => 2,
            CliError::CertificateViolation(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m)
            | CliError::NonConvergence(m)
            | CliError::CertificateViolation(m) => m,
        }
    }
}

fn validation<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Validation(msg.into()))
}

fn ks_error(e: ks_solver::KsError) -> CliError {
    match e {
        ks_solver::KsError::NonConvergence { .. } => CliError::NonConvergence(e.to_string()),
        _ => CliError::Validation(e.to_string()),
    }
}

/// Resolved settings: config file values overridden by flags.
struct Settings {
    command: Command,
    alpha: Option<f64>,
    alpha_f: Option<f64>,
    budget: Option<f64>,
    bl: Option<f64>,
    br: Option<f64>,
    n: usize,
    replicates: usize,
    seed: u64,
    delta: f64,
    eps: f64,
    gamma: f64,
    c: f64,
    cost_exponent: f64,
    lambda: f64,
    k: usize,
    variant: Variant,
    metrics: Vec<Metric>,
    threads: Option<usize>,
    out: Option<PathBuf>,
    format: Option<FormatArg>,
    grid_points: usize,
    resolution: usize,
    mode: TrajectoryMode,
    max_steps: usize,
    start_bl: f64,
    start_br: f64,
    sod: bool,
    inject_fault: bool,
    alpha_min: f64,
    alpha_max: f64,
    alpha_count: usize,
    gap_min: f64,
    gap_max: f64,
    gap_count: usize,
    alpha_f_min: f64,
    alpha_f_max: f64,
    budgets: Vec<f64>,
}

fn parse_variant(s: &str) -> Result<Variant, CliError> {
    Ok(match s {
        "base" => Variant::Base,
        "local" => Variant::Local,
        "spatial" => Variant::Spatial,
        "imbalanced" => Variant::Imbalanced,
        "weighted" => Variant::Weighted,
        other => return validation(format!("unknown variant {other:?}")),
    })
}

fn parse_metric(s: &str) -> Result<Metric, CliError> {
    Ok(match s {
        "mu" => Metric::Mu,
        "phi" => Metric::Phi,
        "psi_naive" => Metric::PsiNaive,
        "psi_prior" => Metric::PsiPrior,
        "ks" => Metric::Ks,
        "weight" => Metric::Weight,
        other => return validation(format!("unknown metric {other:?}")),
    })
}

fn resolve(cli: &Cli) -> Result<Settings, CliError> {
    let file: FileConfig = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("invalid config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    let command = match (cli.command, file.command.as_deref()) {
        (Some(c), _) => c,
        (None, Some(s)) => Command::from_str(s)
            .ok_or_else(|| CliError::Validation(format!("unknown command {s:?} in config")))?,
        (None, None) => return validation("no command given (subcommand or config \"command\")"),
    };
    let variant = match cli.variant {
        Some(v) => v.into(),
        None => match &file.variant {
            Some(s) => parse_variant(s)?,
            None => Variant::Base,
        },
    };
    let metrics: Vec<Metric> = match cli.metric {
        Some(m) => vec![m.into()],
        None => match (&file.metric, &file.metrics) {
            (Some(s), _) => vec![parse_metric(s)?],
            (None, Some(list)) => list
                .iter()
                .map(|s| parse_metric(s))
                .collect::<Result<_, _>>()?,
            (None, None) => vec![Metric::Mu],
        },
    };
    let mode = match cli.mode {
        Some(ModeArg::Coordinate) => TrajectoryMode::Coordinate,
        Some(ModeArg::Joint) => TrajectoryMode::Joint,
        None => match file.mode.as_deref() {
            Some("coordinate") | None => TrajectoryMode::Coordinate,
            Some("joint") => TrajectoryMode::Joint,
            Some(other) => return validation(format!("unknown mode {other:?}")),
        },
    };
    let format = match cli.format {
        Some(f) => Some(f),
        None => match file.format.as_deref() {
            Some("csv") => Some(FormatArg::Csv),
            Some("json") => Some(FormatArg::Json),
            Some(other) => return validation(format!("unknown format {other:?}")),
            None => None,
        },
    };
    let env_threads = std::env::var("FLEXMATCH_THREADS")
        .ok()
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| CliError::Validation(format!("bad FLEXMATCH_THREADS value {s:?}")))
        })
        .transpose()?;
    Ok(Settings {
        command,
        alpha: cli.alpha.or(file.alpha),
        alpha_f: cli.alpha_f.or(file.alpha_f),
        budget: cli.budget.or(file.budget),
        bl: cli.bl.or(file.bl),
        br: cli.br.or(file.br),
        n: cli.n.or(file.n).unwrap_or(100),
        replicates: cli.replicates.or(file.replicates).unwrap_or(1000),
        seed: cli.seed.or(file.seed).unwrap_or(0),
        delta: cli.delta.or(file.delta).unwrap_or(0.01),
        eps: cli.eps.or(file.eps).unwrap_or(1e-8),
        gamma: cli.gamma.or(file.gamma).unwrap_or(0.02),
        c: cli.c.or(file.c).unwrap_or(0.4),
        cost_exponent: cli.cost_exponent.or(file.cost_exponent).unwrap_or(1.0),
        lambda: cli.lambda.or(file.lambda).unwrap_or(1.0),
        k: cli.k.or(file.k).unwrap_or(2),
        variant,
        metrics,
        threads: cli.threads.or(file.threads).or(env_threads),
        out: cli.out.clone().or(file.out),
        format,
        grid_points: cli.grid_points.or(file.grid_points).unwrap_or(11),
        resolution: cli.resolution.or(file.resolution).unwrap_or(41),
        mode,
        max_steps: cli.max_steps.or(file.max_steps).unwrap_or(10_000),
        start_bl: cli.start_bl.or(file.start_bl).unwrap_or(0.0),
        start_br: cli.start_br.or(file.start_br).unwrap_or(0.0),
        sod: cli.sod || file.sod.unwrap_or(false),
        inject_fault: cli.inject_fault,
        alpha_min: file.alpha_min.unwrap_or(0.05),
        alpha_max: file.alpha_max.unwrap_or(3.0),
        alpha_count: file.alpha_count.unwrap_or(6),
        gap_min: file.gap_min.unwrap_or(0.5),
        gap_max: file.gap_max.unwrap_or(7.5),
        gap_count: file.gap_count.unwrap_or(6),
        alpha_f_min: file.alpha_f_min.unwrap_or(1.0),
        alpha_f_max: file.alpha_f_max.unwrap_or(2.0),
        budgets: file.budgets.unwrap_or_else(|| vec![1.0]),
    })
}

impl Settings {
    fn req(&self, name: &str, v: Option<f64>) -> Result<f64, CliError> {
        v.ok_or_else(|| CliError::Validation(format!("missing required parameter --{name}")))
    }

    fn alpha(&self) -> Result<f64, CliError> {
        self.req("alpha", self.alpha)
    }

    fn alpha_f(&self) -> Result<f64, CliError> {
        self.req("alpha-f", self.alpha_f)
    }

    /// Allocation from --bl/--br, falling back to the balanced split of --B.
    fn alloc(&self) -> Result<FlexAllocation, CliError> {
        match (self.bl, self.br, self.budget) {
            (Some(bl), Some(br), _) => Ok(FlexAllocation::new(bl, br)),
            (Some(bl), None, Some(b)) => Ok(FlexAllocation::new(bl, b - bl)),
            (None, Some(br), Some(b)) => Ok(FlexAllocation::new(b - br, br)),
            (None, None, Some(b)) => Ok(FlexAllocation::balanced(b)),
            _ => validation("allocation underdetermined: give --bl/--br or --B"),
        }
    }

    fn params(&self) -> Result<ModelParams, CliError> {
        let mut p = ModelParams::new(self.alpha()?, self.alpha_f()?, self.n);
        p = p.with_k(self.k);
        p = p.with_lambda(self.lambda);
        Ok(p)
    }

    fn exec_mode(&self) -> ExecMode {
        #[cfg(feature = "parallel")]
        {
            if self.threads == Some(1) {
                ExecMode::Sequential
            } else {
                ExecMode::Parallel
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            ExecMode::Sequential
        }
    }

    fn format_or(&self, default: FormatArg) -> FormatArg {
        self.format.unwrap_or(default)
    }

    fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
        if count <= 1 {
            return vec![lo];
        }
        (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect()
    }
}

/// Write atomically: temp file in the destination directory, then rename.
fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))
        .map_err(|e| CliError::Validation(format!("cannot create temp file: {e}")))?;
    tmp.write_all(contents.as_bytes())
        .map_err(|e| CliError::Validation(format!("cannot write temp file: {e}")))?;
    tmp.persist(path)
        .map_err(|e| CliError::Validation(format!("cannot rename into {}: {e}", path.display())))?;
    Ok(())
}

/// Emit the artifact (file + summary line, or stdout) and return extra
/// summary fields.
fn emit(s: &Settings, artifact: String, summary: serde_json::Value) -> Result<(), CliError> {
    match &s.out {
        Some(path) => {
            write_atomic(path, &artifact)?;
            let mut line = summary;
            line["command"] = json!(s.command.as_str());
            line["out"] = json!(path.display().to_string());
            println!("{line}");
        }
        None => {
            print!("{artifact}");
            if !artifact.ends_with('\n') {
                println!();
            }
        }
    }
    Ok(())
}

fn rows_artifact(s: &Settings, rows: &[Row]) -> Result<String, CliError> {
    Ok(match s.format_or(FormatArg::Csv) {
        FormatArg::Csv => rows_to_csv(rows),
        FormatArg::Json => serde_json::to_string_pretty(rows)
            .map_err(|e| CliError::Validation(e.to_string()))?,
    })
}

fn run(s: &Settings) -> Result<(), CliError> {
    match s.command {
        Command::Simulate => {
            let params = s.params()?;
            let alloc = s.alloc()?;
            let req = EstimateRequest {
                variant: s.variant,
                params,
                alloc,
                replicates: s.replicates,
                metrics: s.metrics.clone(),
                master_seed: s.seed,
                stream_block: 0,
            };
            let est = estimate_with_mode(&req, s.exec_mode())
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let rows: Vec<Row> = est
                .metrics
                .iter()
                .map(|(m, e)| Row {
                    variant: s.variant.as_str().into(),
                    alpha: params.alpha,
                    alpha_f: params.alpha_f,
                    budget: alloc.budget(),
                    b_l: alloc.b_l,
                    b_r: alloc.b_r,
                    metric: m.as_str().into(),
                    mean: e.mean,
                    std_err: e.std_err,
                    replicates: s.replicates,
                    seed: s.seed,
                })
                .collect();
            let artifact = rows_artifact(s, &rows)?;
            emit(s, artifact, json!({"rows": rows.len()}))
        }
        Command::Sweep => {
            let params = s.params()?;
            let budget = s.req("B", s.budget)?;
            let rows = sweep_allocations(
                s.variant,
                &params,
                budget,
                s.grid_points,
                &s.metrics,
                s.replicates,
                s.seed,
                s.exec_mode(),
            )
            .map_err(|e| CliError::Validation(e.to_string()))?;
            let artifact = rows_artifact(s, &rows)?;
            emit(s, artifact, json!({"rows": rows.len()}))
        }
        Command::Heatmap => {
            let budget = s.req("B", s.budget)?;
            let alphas = Settings::linspace(s.alpha_min, s.alpha_max, s.alpha_count);
            let gaps = Settings::linspace(s.gap_min, s.gap_max, s.gap_count);
            let rows = heatmap_ratio(
                s.variant,
                s.n,
                &alphas,
                &gaps,
                budget,
                s.metrics[0],
                s.replicates,
                s.seed,
                s.exec_mode(),
            )
            .map_err(|e| CliError::Validation(e.to_string()))?;
            let artifact = rows_artifact(s, &rows)?;
            emit(s, artifact, json!({"rows": rows.len()}))
        }
        Command::Phi => {
            let alpha = s.alpha()?;
            let alpha_f = s.alpha_f()?;
            let alloc = s.alloc()?;
            let value = flexmatch::analytic::phi_closed_form(alpha, alpha_f, &alloc);
            let choice =
                flexmatch::analytic::phi_optimal_allocation(alpha, alpha_f, alloc.budget());
            let doc = json!({
                "alpha": alpha,
                "alpha_f": alpha_f,
                "b_l": alloc.b_l,
                "b_r": alloc.b_r,
                "phi1": value.phi1,
                "phi2": value.phi2,
                "phi": value.phi,
                "optimal_allocation": choice,
            });
            emit(s, format!("{doc:#}\n"), json!({}))
        }
        Command::Thresholds => {
            let budget = s.req("B", s.budget)?;
            let alpha = s.alpha()?;
            let t = flexmatch::analytic::asymmetry_thresholds(budget, alpha)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let doc = json!({
                "B": budget,
                "alpha": alpha,
                "alpha_star": t.alpha_star,
                "alpha_f_star": t.alpha_f_star,
            });
            emit(s, format!("{doc:#}\n"), json!({}))
        }
        Command::Ks => {
            let alpha = s.alpha()?;
            let alpha_f = s.alpha_f()?;
            let alloc = s.alloc()?;
            let sol = solve_ks_fixed_point(alpha, alpha_f, &alloc, DEFAULT_TOL, DEFAULT_MAX_ITER)
                .map_err(ks_error)?;
            let doc = serde_json::to_value(&sol).map_err(|e| CliError::Validation(e.to_string()))?;
            emit(s, format!("{doc:#}\n"), json!({"mu_ks": sol.mu_ks}))
        }
        Command::KsSweep => {
            let alphas = Settings::linspace(s.alpha_min, s.alpha_max, s.alpha_count);
            let gaps = Settings::linspace(s.gap_min, s.gap_max, s.gap_count);
            let mut out = String::from("alpha,alpha_f,B,mu_balanced,mu_one_sided,ratio\n");
            let mut rows = 0usize;
            for &budget in &s.budgets {
                for &alpha in &alphas {
                    for &gap in &gaps {
                        let alpha_f = alpha + gap;
                        let bal = mu_ks(alpha, alpha_f, &FlexAllocation::balanced(budget))
                            .map_err(ks_error)?;
                        let one = mu_ks(alpha, alpha_f, &FlexAllocation::one_sided(budget))
                            .map_err(ks_error)?;
                        let ratio = if one == 0.0 { f64::NAN } else { bal / one };
                        out.push_str(&format!("{alpha},{alpha_f},{budget},{bal},{one},{ratio}\n"));
                        rows += 1;
                    }
                }
            }
            emit(s, out, json!({"rows": rows}))
        }
        Command::Verify => {
            if s.sod {
                let mut out = String::from(
                    "alpha,alpha_f,delta,eps,convex_lower_bound,concave_upper_bound,verdict\n",
                );
                let mut verified = 0usize;
                let mut cells = 0usize;
                let first = |lo: f64| (lo / s.delta).ceil().max(1.0) as u64;
                let last = |hi: f64| (hi / s.delta).floor() as u64;
                for ia in first(s.alpha_min)..=last(s.alpha_max) {
                    for iaf in first(s.alpha_f_min)..=last(s.alpha_f_max) {
                        let (a, af) = (ia as f64 * s.delta, iaf as f64 * s.delta);
                        let cert = certify_sod_cell(a, af, s.delta, s.eps);
                        out.push_str(&format!(
                            "{},{},{},{},{},{},{}\n",
                            cert.alpha,
                            cert.alpha_f,
                            cert.delta,
                            cert.eps,
                            cert.convex_lower_bound,
                            cert.concave_upper_bound,
                            cert.verdict.as_str()
                        ));
                        cells += 1;
                        if cert.convex_verified && cert.concave_verified {
                            verified += 1;
                        }
                    }
                }
                emit(s, out, json!({"cells": cells, "verified": verified}))
            } else {
                let summary = certify_comparison_region(
                    s.delta,
                    s.eps,
                    s.alpha_min,
                    s.alpha_max,
                    s.alpha_f_min,
                    s.alpha_f_max,
                    s.exec_mode(),
                );
                let artifact = certificates_to_csv(&summary.cells);
                emit(
                    s,
                    artifact,
                    json!({
                        "cells": summary.cells.len(),
                        "verified": summary.verified,
                        "unverified": summary.unverified,
                        "out_of_regime": summary.out_of_regime,
                    }),
                )
            }
        }
        Command::Coupling => {
            let alpha_f = s.alpha_f()?;
            if s.n < 2 || s.n % 2 != 0 {
                return validation("coupling requires an even n >= 2");
            }
            let mut report =
                coupling_inequality_check(s.n, alpha_f, s.seed, s.replicates, s.exec_mode());
            if s.inject_fault {
                // Test double: pretend the matcher overcounted the
                // non-flipped graphs on one replicate.
                report.violations += 1;
                report.max_violation = report.max_violation.max(1);
            }
            let doc = serde_json::to_value(&report)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            emit(s, format!("{doc:#}\n"), json!({"violations": report.violations}))?;
            if report.violations > 0 {
                return Err(CliError::CertificateViolation(format!(
                    "coupling inequality violated on {} replicate(s)",
                    report.violations
                )));
            }
            Ok(())
        }
        Command::Experiment => {
            let spec = ProfitSpec::new(s.alpha()?, s.alpha_f()?, s.c)
                .with_exponent(s.cost_exponent);
            let start = FlexAllocation::new(s.start_bl, s.start_br);
            let t = run_trajectory(&spec, &start, s.gamma, s.mode, s.max_steps)
                .map_err(ks_error)?;
            let doc = serde_json::to_value(&t).map_err(|e| CliError::Validation(e.to_string()))?;
            emit(
                s,
                format!("{doc:#}\n"),
                json!({"terminal": [t.terminal.0, t.terminal.1], "steps": t.points.len() - 1}),
            )
        }
        Command::Landscape => {
            let spec = ProfitSpec::new(s.alpha()?, s.alpha_f()?, s.c)
                .with_exponent(s.cost_exponent);
            let pts = landscape_grid(&spec, s.resolution, s.exec_mode()).map_err(ks_error)?;
            let artifact = match s.format_or(FormatArg::Csv) {
                FormatArg::Csv => landscape_to_csv(&pts),
                FormatArg::Json => serde_json::to_string_pretty(&pts)
                    .map_err(|e| CliError::Validation(e.to_string()))?,
            };
            emit(s, artifact, json!({"rows": pts.len()}))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let benign = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if benign { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    let settings = match resolve(&cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}", e.message());
            return ExitCode::from(e.code());
        }
    };
    #[cfg(feature = "parallel")]
    if let Some(t) = settings.threads {
        if t > 1 {
            // Ignore failure (pool already built, e.g. in tests).
            let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
        }
    }
    match run(&settings) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
