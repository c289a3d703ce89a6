//! Batch command-line frontend.
//!
//! Exit codes: 0 success, 2 usage or configuration, 3 data or I/O,
//! 4 engine failure.

use std::collections::HashMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::engine::{fit, tune_k, EngineConfig, Mode};
use crate::error::{Error, Result};
use crate::io::{
    curves_csv, diagnostics_csv, into_bytes, fit_document, fmt_num, history_csv, json_bytes, labels_csv, rank_tests_csv,
    read_curves_path, read_labels_path, templates_csv, truth_csv, warps_csv, weight_csv, write_atomic,
};
use crate::metrics::MetricKind;
use crate::sim::{generate, misclassification, run_benchmark, BenchmarkSummary, Scenario, SimSpec};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_ENGINE: i32 = 4;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "SPARSE_KMA_OUT";

#[derive(Debug, Parser)]
#[command(name = "sparse-kma", version, about = "Joint clustering, alignment and domain selection of curves")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a simulated data set with its ground truth.
    Simulate(SimulateArgs),
    /// Fit a data set.
    Fit(FitArgs),
    /// Sweep the number of clusters and test adjacent values.
    Tune(TuneArgs),
    /// Repeat simulate + fit over seeded runs.
    Benchmark(BenchmarkArgs),
    /// Score estimated labels against true labels.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, env = OUT_ENV, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct EngineArgs {
    /// TOML file with `[engine]` and `[sim]` tables; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Required zero-set fraction of the weight function.
    #[arg(long)]
    pub m: Option<f64>,
    /// l2 or h1.
    #[arg(long)]
    pub metric: Option<MetricKind>,
    #[arg(long)]
    pub eps_a: Option<f64>,
    #[arg(long)]
    pub eps_b: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Points of the common evaluation grid.
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// sparse or kma.
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Local-regression templates instead of point-wise means.
    #[arg(long)]
    pub robust_templates: bool,
    /// Stop without waiting for the weight function to settle.
    #[arg(long)]
    pub ignore_weight_change: bool,
}

#[derive(Debug, Args, Default)]
pub struct SimArgs {
    /// sim1 or sim2.
    #[arg(long)]
    pub scenario: Option<Scenario>,
    #[arg(long)]
    pub n_per_class: Option<usize>,
    /// Extra shift on the second class's warps.
    #[arg(long)]
    pub phase_shift: Option<f64>,
    /// Samples per simulated curve.
    #[arg(long)]
    pub sim_resolution: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Data-set seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Curve CSV (`curve_id,dim,x,value`).
    pub data: PathBuf,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    pub data: PathBuf,
    /// Inclusive range such as `2..4`.
    #[arg(long, default_value = "2..4", value_parser = parse_k_range)]
    pub k_range: (usize, usize),
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, default_value_t = 20)]
    pub runs: usize,
    /// Comma-separated modes fitted on the same data sets.
    #[arg(long, value_delimiter = ',')]
    pub modes: Vec<Mode>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Estimated labels (`curve_id,cluster`).
    #[arg(long)]
    pub labels: PathBuf,
    /// True labels (`curve_id,true_label`).
    #[arg(long)]
    pub truth: PathBuf,
    /// Also write `eval.json` here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn parse_k_range(s: &str) -> std::result::Result<(usize, usize), String> {
    let (lo, hi) = s
        .split_once("..")
        .ok_or_else(|| format!("expected LO..HI, got `{s}`"))?;
    let hi = hi.strip_prefix('=').unwrap_or(hi);
    let lo: usize = lo.trim().parse().map_err(|_| format!("bad lower bound in `{s}`"))?;
    let hi: usize = hi.trim().parse().map_err(|_| format!("bad upper bound in `{s}`"))?;
    if lo < 1 || lo > hi {
        return Err(format!("empty or invalid K range `{s}`"));
    }
    Ok((lo, hi))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    engine: Option<EngineConfig>,
    sim: Option<SimSpec>,
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

impl EngineArgs {
    fn resolve(&self, base: EngineConfig) -> EngineConfig {
        let mut c = base;
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(k, m, metric, eps_a, eps_b, tol, max_iter, resolution, seed, mode);
        c.robust_templates |= self.robust_templates;
        if self.ignore_weight_change {
            c.stop_on_weight_change = false;
        }
        c
    }

    /// Defaults, then the config file, then flags.
    fn load(&self) -> Result<(EngineConfig, Option<SimSpec>)> {
        let file = load_config(self.config.as_deref())?;
        Ok((self.resolve(file.engine.unwrap_or_default()), file.sim))
    }
}

impl SimArgs {
    fn resolve(&self, file: Option<SimSpec>, seed: Option<u64>) -> SimSpec {
        let mut spec = match (self.scenario, file) {
            (Some(s), Some(f)) if f.scenario != s => SimSpec::for_scenario(s, f.seed),
            (_, Some(f)) => f,
            (Some(s), None) => SimSpec::for_scenario(s, 0),
            (None, None) => SimSpec::default(),
        };
        if let Some(n) = self.n_per_class {
            spec.n_per_class = n;
        }
        if let Some(p) = self.phase_shift {
            spec.phase_cluster_shift = p;
        }
        if let Some(r) = self.sim_resolution {
            spec.resolution = r;
        }
        if let Some(s) = seed {
            spec.seed = s;
        }
        spec
    }
}

/// Maps an error to its documented exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::InvalidConfig(_) | Error::SingleClusterSparse | Error::EmptySupport { .. } => EXIT_USAGE,
        Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_)
        | Error::Data(_)
        | Error::InvalidCurve { .. }
        | Error::InvalidGrid(_)
        | Error::InvalidInterval { .. }
        | Error::GridMismatch
        | Error::DimensionMismatch { .. }
        | Error::EmptyInput(_)
        | Error::TooFewPoints { .. } => EXIT_DATA,
        _ => EXIT_ENGINE,
    }
}

struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        }
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Writes the deterministic manifest and the separate timing record.
    fn finish(mut self, command: &str, argv: &[String], config: serde_json::Value, inputs: &[&Path], seed: u64, started: Instant) -> Result<()> {
        self.written.sort();
        let manifest = json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "args": argv,
            "config": config,
            "inputs": inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "outputs": self.written,
            "seed": seed,
        });
        write_atomic(&self.dir.join("manifest.json"), &json_bytes(&manifest)?)?;
        let timing = json!({ "command": command, "wall_seconds": started.elapsed().as_secs_f64() });
        write_atomic(&self.dir.join("timing.json"), &json_bytes(&timing)?)
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(v)?)
}

fn cmd_simulate(a: &SimulateArgs, argv: &[String]) -> Result<()> {
    let started = Instant::now();
    let file = load_config(a.config.as_deref())?;
    let spec = a.sim.resolve(file.sim, a.seed);
    let data = generate(&spec)?;
    let mut out = Outputs::new(&a.out.out);
    out.put("curves.csv", &curves_csv(&data.curves)?)?;
    out.put("truth.csv", &truth_csv(&data.truth_rows())?)?;
    out.finish("simulate", argv, to_value(&spec)?, &[], spec.seed, started)
}

fn write_fit(out: &mut Outputs, result: &crate::engine::FitResult, curves: &[crate::curve::SampledCurve]) -> Result<()> {
    out.put("fit.json", &json_bytes(&fit_document(result))?)?;
    out.put("warps.csv", &warps_csv(&result.curve_ids, &result.warps)?)?;
    out.put("labels.csv", &labels_csv(&result.curve_ids, result.labels.labels())?)?;
    out.put("weight.csv", &weight_csv(result)?)?;
    out.put("templates.csv", &templates_csv(result)?)?;
    out.put("aligned.csv", &curves_csv(&result.aligned(curves)?)?)?;
    out.put("history.csv", &history_csv(result)?)
}

fn cmd_fit(a: &FitArgs, argv: &[String]) -> Result<()> {
    let started = Instant::now();
    let (config, _) = a.engine.load()?;
    let curves = read_curves_path(&a.data)?;
    config.validate(curves.len())?;
    let result = fit(&curves, &config)?;
    let mut out = Outputs::new(&a.out.out);
    write_fit(&mut out, &result, &curves)?;
    out.finish("fit", argv, to_value(&config)?, &[&a.data], config.seed, started)
}

fn cmd_tune(a: &TuneArgs, argv: &[String]) -> Result<()> {
    let started = Instant::now();
    let (config, _) = a.engine.load()?;
    let curves = read_curves_path(&a.data)?;
    let report = tune_k(&curves, &config, a.k_range.0..=a.k_range.1)?;
    let ids: Vec<String> = curves.iter().map(|c| c.id().to_string()).collect();
    let mut out = Outputs::new(&a.out.out);
    out.put("diagnostics.csv", &diagnostics_csv(&report, &ids)?)?;
    out.put("rank_tests.csv", &rank_tests_csv(&report)?)?;
    out.finish("tune", argv, to_value(&config)?, &[&a.data], config.seed, started)
}

/// One row per mode; the sd column is empty for a single run.
pub fn summary_csv(summary: &BenchmarkSummary) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "scenario",
        "mode",
        "runs",
        "mean_misclassification",
        "sd_misclassification",
        "mean_iterations",
        "converged_runs",
    ])?;
    for r in &summary.rows {
        w.write_record([
            r.scenario.to_string(),
            r.mode.to_string(),
            r.runs.to_string(),
            fmt_num(r.mean_misclassification),
            r.sd_misclassification.map(fmt_num).unwrap_or_default(),
            fmt_num(r.mean_iterations),
            r.converged_runs.to_string(),
        ])?;
    }
    into_bytes(w)
}

/// Per-run rows, timing excluded.
pub fn runs_csv(summary: &BenchmarkSummary) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["run", "mode", "dataset_seed", "fit_seed", "digest", "misclassification", "iterations", "converged", "objective_dips"])?;
    for r in &summary.runs {
        w.write_record([
            r.run.to_string(),
            r.mode.to_string(),
            r.dataset_seed.to_string(),
            r.fit_seed.to_string(),
            r.digest.clone(),
            fmt_num(r.misclassification),
            r.iterations.to_string(),
            r.converged.to_string(),
            r.fit.objective_dips().to_string(),
        ])?;
    }
    into_bytes(w)
}

fn cmd_benchmark(a: &BenchmarkArgs, argv: &[String]) -> Result<()> {
    let started = Instant::now();
    let (base, file_sim) = a.engine.load()?;
    let spec = a.sim.resolve(file_sim, a.engine.seed);
    let from_scenario = a.engine.resolve(spec.scenario.engine_config());
    let base = if a.engine.config.is_some() { base } else { from_scenario };
    let modes = if a.modes.is_empty() { vec![base.mode] } else { a.modes.clone() };
    let configs: Vec<EngineConfig> = modes.iter().map(|&mode| EngineConfig { mode, ..base.clone() }).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let summary = pool.install(|| run_benchmark(&spec, &configs, a.runs))?;
    let mut out = Outputs::new(&a.out.out);
    out.put("summary.csv", &summary_csv(&summary)?)?;
    out.put("runs.csv", &runs_csv(&summary)?)?;
    let seconds: Vec<_> = summary
        .runs
        .iter()
        .map(|r| json!({ "run": r.run, "mode": r.mode.to_string(), "seconds": r.seconds }))
        .collect();
    write_atomic(&a.out.out.join("run_timing.json"), &json_bytes(&json!(seconds))?)?;
    let config = json!({ "sim": to_value(&spec)?, "engines": to_value(&configs)?, "runs": a.runs });
    out.finish("benchmark", argv, config, &[], spec.seed, started)
}

fn cmd_eval(a: &EvalArgs) -> Result<f64> {
    let est = read_labels_path(&a.labels)?;
    let truth: HashMap<String, usize> = read_labels_path(&a.truth)?.into_iter().collect();
    if truth.len() != est.len() {
        return Err(Error::Data(format!("{} estimated labels against {} true labels", est.len(), truth.len())));
    }
    let mut e = Vec::with_capacity(est.len());
    let mut t = Vec::with_capacity(est.len());
    for (id, label) in est {
        let Some(&tl) = truth.get(&id) else {
            return Err(Error::Data(format!("curve `{id}` has no true label")));
        };
        e.push(label);
        t.push(tl);
    }
    let rate = misclassification(&e, &t)?;
    println!("misclassification {}", fmt_num(rate));
    if let Some(dir) = &a.out {
        let doc = json!({ "curves": e.len(), "misclassification": crate::io::round12(rate) });
        write_atomic(&dir.join("eval.json"), &json_bytes(&doc)?)?;
    }
    Ok(rate)
}

pub fn execute(cli: &Cli, argv: &[String]) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, argv),
        Command::Fit(a) => cmd_fit(a, argv),
        Command::Tune(a) => cmd_tune(a, argv),
        Command::Benchmark(a) => cmd_benchmark(a, argv),
        Command::Eval(a) => cmd_eval(a).map(|_| ()),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let argv: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
