//! The `mmtfl` command line: `generate`, `fit`, `benchmark`, `verify` and
//! `export-heatmap`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 verification failure.
//! The seed comes from `--seed`, then the config file, then `MMTFL_SEED`,
//! then 0.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::datagen::{generate, Pattern, SyntheticSpec};
use crate::error::Error;
use crate::eval::{run_benchmark, ExperimentPlan, ExperimentReport};
use crate::io::{
    config_hash, feature_names, is_nonempty_dir, read_dataset, read_json, read_matrix_csv, write_dataset,
    write_ground_truth, write_json, write_matrix_csv, DatasetManifest,
};
use crate::loss::LossKind;
use crate::optimizer::{fit, FitOptions, Termination};
use crate::regularizer::{RegularizerSpec, SigmaExponent};
use crate::verify::{run_suite, VerificationReport, VerifyConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

pub const SEED_ENV: &str = "MMTFL_SEED";

/// Settings shared by all commands, read from a JSON file. Unknown keys are
/// rejected and every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub model: RegularizerSpec,
    pub fit: FitOptions,
    pub plan: ExperimentPlan,
    pub verify: VerifySettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            model: RegularizerSpec::least_squares(2, 1, 1.0, 1.0).expect("default model is valid"),
            fit: FitOptions::default(),
            plan: ExperimentPlan::default(),
            verify: VerifySettings::default(),
        }
    }
}

/// Trial counts for `verify`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySettings {
    pub sigma_trials: usize,
    pub oracle_draws: usize,
    pub equivalence_problems: usize,
}

impl Default for VerifySettings {
    fn default() -> Self {
        let d = VerifyConfig::default();
        VerifySettings {
            sigma_trials: d.sigma_trials,
            oracle_draws: d.oracle_draws,
            equivalence_problems: d.equivalence_problems,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mmtfl", version, about = "Multiplicative multitask feature learning")]
pub struct Cli {
    /// Worker threads; defaults to the number of available cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic benchmark dataset.
    Generate(GenerateArgs),
    /// Fit one model and write c, B, A, the objective trace and metadata.
    Fit(FitArgs),
    /// Repeated-split benchmark with cross-validated γ.
    Benchmark(BenchmarkArgs),
    /// Run the numerical certificate suite.
    Verify(VerifyArgs),
    /// Write |A| with tasks as rows and features as columns.
    ExportHeatmap(HeatmapArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_parser = parse_pattern)]
    pub pattern: Pattern,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tasks: Option<usize>,
    /// Examples per task.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    /// D2 task groups.
    #[arg(long)]
    pub groups: Option<usize>,
    #[arg(long)]
    pub weight_scale: Option<f64>,
    /// Write into a non-empty directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub p: Option<u8>,
    #[arg(long)]
    pub k: Option<u8>,
    #[arg(long)]
    pub gamma1: Option<f64>,
    #[arg(long)]
    pub gamma2: Option<f64>,
    #[arg(long, value_parser = parse_loss)]
    pub loss: Option<LossKind>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Dataset directories; repeat the flag for several.
    #[arg(long, required = true)]
    pub data: Vec<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for `report.csv` and `report.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub repeats: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use the misprinted γ2 exponent in the σ update.
    #[arg(long)]
    pub use_paper_exponent: bool,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    /// Directory written by `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_pattern(s: &str) -> Result<Pattern, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    match s.to_ascii_lowercase().as_str() {
        "least-squares" | "ls" => Ok(LossKind::LeastSquares),
        "logistic" => Ok(LossKind::Logistic),
        other => Err(format!("unknown loss {other:?} (expected least-squares or logistic)")),
    }
}

/// A failed command with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidInput(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        CliError { code, message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

/// Runs a parsed command on a pool of `--jobs` threads.
pub fn execute(cli: Cli) -> CliResult<i32> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::usage("--jobs must be at least 1"));
        }
        builder = builder.num_threads(jobs);
    }
    let pool = builder.build().map_err(|e| CliError::usage(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Generate(args) => cmd_generate(&args),
        Command::Fit(args) => cmd_fit(&args),
        Command::Benchmark(args) => cmd_benchmark(&args),
        Command::Verify(args) => cmd_verify(&args),
        Command::ExportHeatmap(args) => cmd_export_heatmap(&args),
    })
}

/// Loads a config file, or the defaults when none is given.
pub fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let config: RunConfig =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    config.fit.validate()?;
    config.plan.validate()?;
    Ok(config)
}

/// `--seed`, then the config, then `MMTFL_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> CliResult<u64> {
    if let Some(seed) = flag.or(config) {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn prepare_out_dir(dir: &Path, force: bool) -> CliResult<()> {
    if is_nonempty_dir(dir) && !force {
        return Err(CliError::usage(format!(
            "{} exists and is not empty (pass --force to write into it)",
            dir.display()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| CliError::from(Error::from(e)))
}

pub fn cmd_generate(args: &GenerateArgs) -> CliResult<i32> {
    let seed = resolve_seed(args.seed, None)?;
    let mut spec = SyntheticSpec::for_pattern(args.pattern, seed);
    if let Some(v) = args.tasks {
        spec.tasks = v;
    }
    if let Some(v) = args.n {
        spec.n = v;
    }
    if let Some(v) = args.d {
        spec.d = v;
    }
    if let Some(v) = args.groups {
        spec.groups = v;
    }
    if let Some(v) = args.weight_scale {
        spec.weight_scale = v;
    }
    let (data, truth) = generate(&spec)?;
    prepare_out_dir(&args.out, args.force)?;

    let mut manifest = DatasetManifest::for_dataset(&data);
    manifest.seed = Some(seed);
    manifest.pattern = Some(spec.pattern);
    manifest.config_hash = Some(config_hash(&spec)?);
    manifest.truth = Some(write_ground_truth(&args.out, &truth)?);
    write_dataset(&args.out, &data, &manifest)?;
    println!(
        "wrote {} tasks ({} examples x {} features) to {}",
        data.n_tasks(),
        spec.n,
        spec.d,
        args.out.display()
    );
    Ok(EXIT_OK)
}

/// Metadata written next to the fitted matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSummary {
    pub config_hash: String,
    pub data: String,
    pub model: RegularizerSpec,
    pub options: FitOptions,
    pub tasks: Vec<String>,
    pub d: usize,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    pub max_delta: f64,
    pub final_objective: f64,
    pub inner_failures: usize,
    pub worst_kkt: f64,
}

pub const FIT_SUMMARY_FILE: &str = "fit.json";
pub const ALPHA_FILE: &str = "A.csv";

pub fn cmd_fit(args: &FitArgs) -> CliResult<i32> {
    let config = load_config(args.config.as_deref())?;
    let m = config.model;
    let model = RegularizerSpec::new(
        args.p.unwrap_or(m.p()),
        args.k.unwrap_or(m.k()),
        args.gamma1.unwrap_or(m.gamma1()),
        args.gamma2.unwrap_or(m.gamma2()),
        args.loss.unwrap_or(m.loss()),
    )?;
    let (data, _) = read_dataset(&args.data)?;
    let result = fit(&data, &model, &config.fit)?;

    fs::create_dir_all(&args.out).map_err(|e| CliError::from(Error::from(e)))?;
    let dec = &result.decomposition;
    let tasks: Vec<String> = data.tasks().iter().map(|t| t.id.clone()).collect();
    let c = DMatrix::from_column_slice(dec.n_features(), 1, dec.c().as_slice());
    write_matrix_csv(&args.out.join("c.csv"), &["c".to_string()], &c)?;
    write_matrix_csv(&args.out.join("B.csv"), &tasks, dec.b())?;
    write_matrix_csv(&args.out.join(ALPHA_FILE), &tasks, &dec.alpha())?;
    let trace = DMatrix::from_fn(result.objective_trace.len(), 2, |i, j| {
        if j == 0 {
            (i + 1) as f64
        } else {
            result.objective_trace[i]
        }
    });
    write_matrix_csv(&args.out.join("trace.csv"), &["iteration".into(), "objective".into()], &trace)?;

    let summary = FitSummary {
        config_hash: config_hash(&(&model, &config.fit))?,
        data: args.data.display().to_string(),
        model,
        options: config.fit.clone(),
        tasks,
        d: data.n_features(),
        iterations: result.iterations,
        converged: result.converged,
        termination: result.termination,
        max_delta: result.max_delta,
        final_objective: result.final_objective(),
        inner_failures: result.inner_failures,
        worst_kkt: result.worst_kkt,
    };
    write_json(&args.out.join(FIT_SUMMARY_FILE), &summary)?;
    println!(
        "{} after {} iterations ({:?}), objective {:.6e}",
        if result.converged { "converged" } else { "not converged" },
        result.iterations,
        result.termination,
        result.final_objective()
    );
    Ok(EXIT_OK)
}

/// `report.json` contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOutput {
    pub config_hash: String,
    pub plan: ExperimentPlan,
    #[serde(flatten)]
    pub report: ExperimentReport,
}

fn dataset_name(dir: &Path, manifest: &DatasetManifest) -> String {
    match manifest.pattern {
        Some(p) => p.to_string(),
        None => dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string()),
    }
}

pub fn cmd_benchmark(args: &BenchmarkArgs) -> CliResult<i32> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(r) = args.repeats {
        config.plan.repeats = r;
    }
    config.plan.validate()?;
    let seed = resolve_seed(args.seed, config.seed)?;
    let loss = config.model.loss();

    let mut report: Option<ExperimentReport> = None;
    for dir in &args.data {
        let (data, manifest) = read_dataset(dir)?;
        let name = dataset_name(dir, &manifest);
        eprintln!("benchmarking {name} ({} tasks, {} features)", data.n_tasks(), data.n_features());
        let part = run_benchmark(&name, &data, loss, &config.plan, &config.fit, seed)?;
        match &mut report {
            Some(r) => r.merge(part)?,
            None => report = Some(part),
        }
    }
    let report = report.expect("at least one dataset");

    fs::create_dir_all(&args.out).map_err(|e| CliError::from(Error::from(e)))?;
    let csv_file = fs::File::create(args.out.join("report.csv")).map_err(|e| CliError::from(Error::from(e)))?;
    report.write_csv(csv_file)?;
    for row in &report.rows {
        println!("{},{},{},{:.4},{:.4}", row.dataset, row.method, row.fraction, row.mean, row.std);
        for f in &row.failures {
            eprintln!("warning: {} {} {}: {f}", row.dataset, row.method, row.fraction);
        }
    }
    let all_failed = report.rows.iter().all(|r| r.scores.is_empty());
    let output = BenchmarkOutput {
        config_hash: config_hash(&(&config.plan, &config.fit, loss, seed))?,
        plan: config.plan,
        report,
    };
    write_json(&args.out.join("report.json"), &output)?;
    if all_failed {
        return Err(CliError { code: EXIT_DATA, message: "every benchmark cell failed".into() });
    }
    Ok(EXIT_OK)
}

/// Verification report file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOutput {
    pub config_hash: String,
    #[serde(flatten)]
    pub report: VerificationReport,
}

pub fn cmd_verify(args: &VerifyArgs) -> CliResult<i32> {
    let config = load_config(args.config.as_deref())?;
    let verify = VerifyConfig {
        seed: resolve_seed(args.seed, config.seed)?,
        sigma_trials: config.verify.sigma_trials,
        oracle_draws: config.verify.oracle_draws,
        equivalence_problems: config.verify.equivalence_problems,
        sigma_exponent: if args.use_paper_exponent { SigmaExponent::Typeset } else { SigmaExponent::Derived },
        fit: config.fit.clone(),
    };
    let report = run_suite(&verify)?;
    for check in &report.checks {
        println!(
            "{} {} worst={:.3e} trials={}",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.worst_residual,
            check.trials
        );
    }
    let passed = report.passed;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::from(Error::from(e)))?;
    }
    write_json(&args.out, &VerifyOutput { config_hash: config_hash(&verify)?, report })?;
    Ok(if passed { EXIT_OK } else { EXIT_VERIFY })
}

pub fn cmd_export_heatmap(args: &HeatmapArgs) -> CliResult<i32> {
    let summary_path = args.fit.join(FIT_SUMMARY_FILE);
    let alpha_path = args.fit.join(ALPHA_FILE);
    for path in [&summary_path, &alpha_path] {
        if !path.exists() {
            return Err(CliError {
                code: EXIT_DATA,
                message: format!("{} is missing; run `mmtfl fit` first", path.display()),
            });
        }
    }
    let summary: FitSummary = read_json(&summary_path)?;
    let (_, alpha) = read_matrix_csv(&alpha_path)?;
    if alpha.shape() != (summary.d, summary.tasks.len()) {
        return Err(Error::data(&alpha_path, "shape disagrees with fit.json").into());
    }
    let heat = alpha.transpose().abs();
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::from(Error::from(e)))?;
    }
    write_matrix_csv(&args.out, &feature_names(summary.d), &heat)?;
    println!("wrote {}x{} heatmap to {}", heat.nrows(), heat.ncols(), args.out.display());
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"seed": 3, "fit": {"epsilon": 1e-5}}"#).unwrap();
        let c = load_config(Some(&path)).unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.fit.epsilon, 1e-5);
        assert_eq!(c.fit.max_outer_iters, 500);
        fs::write(&path, r#"{"sed": 3}"#).unwrap();
        assert_eq!(load_config(Some(&path)).unwrap_err().code, EXIT_USAGE);
        fs::write(&path, r#"{"model": {"p": 3, "k": 1, "gamma1": 1, "gamma2": 1}}"#).unwrap();
        assert_eq!(load_config(Some(&path)).unwrap_err().code, EXIT_USAGE);
    }

    #[test]
    fn default_config_round_trips() {
        let c = RunConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), c);
    }

    #[test]
    fn flag_seed_wins() {
        assert_eq!(resolve_seed(Some(4), Some(5)).unwrap(), 4);
        assert_eq!(resolve_seed(None, Some(5)).unwrap(), 5);
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["mmtfl", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["mmtfl", "generate", "--pattern", "d3", "--out", "x"]), EXIT_USAGE);
        assert_eq!(run(["mmtfl", "--help"]), EXIT_OK);
    }
}
