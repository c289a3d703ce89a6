//! Synthetic two-class benchmarks with random amplitude and affine
//! misalignment, and the harness that scores repeated fits on them.

use std::f64::consts::PI;
use std::time::Instant;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::curve::SampledCurve;
use crate::engine::{fit, EngineConfig, FitResult, Mode};
use crate::error::{Error, Result};
use crate::grid::{Interval, UniformGrid};
use crate::io::{curves_csv, TruthRow};
use crate::warp::AffineWarp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// `q x⁹` on [-1, 1] against `q x⁹` / `q x²` split at 0.
    Sim1,
    /// `q sin x` on [0, 2π] against a reflected bump on [π/3, 2π/3].
    Sim2,
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scenario::Sim1 => "sim1",
            Scenario::Sim2 => "sim2",
        })
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sim1" => Ok(Scenario::Sim1),
            "sim2" => Ok(Scenario::Sim2),
            other => Err(Error::InvalidConfig(format!("unknown scenario `{other}` (expected sim1 or sim2)"))),
        }
    }
}

impl Scenario {
    pub fn domain(&self) -> Interval {
        match self {
            Scenario::Sim1 => Interval::new(-1.0, 1.0),
            Scenario::Sim2 => Interval::new(0.0, 2.0 * PI),
        }
        .expect("valid domain")
    }

    /// Mean of `class` (0 or 1) with amplitude `q` at `x` in the domain.
    pub fn class_mean(&self, class: usize, q: f64, x: f64) -> f64 {
        match (self, class) {
            (Scenario::Sim1, 0) => q * x.powi(9),
            (Scenario::Sim1, _) => {
                if x <= 0.0 {
                    q * x.powi(9)
                } else {
                    q * x * x
                }
            }
            (Scenario::Sim2, 0) => q * x.sin(),
            (Scenario::Sim2, _) => {
                if (PI / 3.0..=2.0 * PI / 3.0).contains(&x) {
                    q * (3f64.sqrt() - x.sin())
                } else {
                    q * x.sin()
                }
            }
        }
    }

    /// Engine settings used for this scenario's benchmark.
    pub fn engine_config(&self) -> EngineConfig {
        match self {
            Scenario::Sim1 => EngineConfig::default(),
            Scenario::Sim2 => EngineConfig {
                m: 0.3,
                eps_a: 0.05,
                eps_b: 0.05,
                // Sparse and plain fits stop on the same rule.
                stop_on_weight_change: false,
                ..EngineConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSpec {
    pub scenario: Scenario,
    pub n_per_class: usize,
    pub q_mean: f64,
    pub q_sd: f64,
    /// Closed range of the dilation draws; equal ends give a constant.
    pub a_range: (f64, f64),
    pub b_range: (f64, f64),
    /// Added to the shift draws of the second class.
    pub phase_cluster_shift: f64,
    /// Samples per curve.
    pub resolution: usize,
    pub seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self::sim1(0)
    }
}

impl SimSpec {
    pub fn sim1(seed: u64) -> Self {
        Self {
            scenario: Scenario::Sim1,
            n_per_class: 100,
            q_mean: 1.0,
            q_sd: 0.15,
            a_range: (0.9, 1.1),
            b_range: (-0.1, 0.1),
            phase_cluster_shift: 0.0,
            resolution: 200,
            seed,
        }
    }

    /// Twice the first scenario's warp ranges, and class-2 shifts offset
    /// by 0.15.
    pub fn sim2(seed: u64) -> Self {
        Self {
            scenario: Scenario::Sim2,
            a_range: (0.8, 1.2),
            b_range: (-0.2, 0.2),
            phase_cluster_shift: 0.15,
            ..Self::sim1(seed)
        }
    }

    pub fn for_scenario(scenario: Scenario, seed: u64) -> Self {
        match scenario {
            Scenario::Sim1 => Self::sim1(seed),
            Scenario::Sim2 => Self::sim2(seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_per_class == 0 {
            return bad("n_per_class must be at least 1".into());
        }
        if !(self.a_range.0 > 0.0 && self.a_range.0 <= self.a_range.1 && self.a_range.1.is_finite()) {
            return bad(format!("dilation range {:?} must be positive and ordered", self.a_range));
        }
        if !(self.b_range.0 <= self.b_range.1 && self.b_range.0.is_finite() && self.b_range.1.is_finite()) {
            return bad(format!("shift range {:?} must be finite and ordered", self.b_range));
        }
        if !(self.q_sd >= 0.0 && self.q_mean.is_finite() && self.q_sd.is_finite()) {
            return bad("q_sd must be non-negative and q_mean finite".into());
        }
        if !self.phase_cluster_shift.is_finite() {
            return bad("phase_cluster_shift must be finite".into());
        }
        if self.resolution < 2 {
            return bad("resolution must be at least 2".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub curves: Vec<SampledCurve>,
    /// 0-based classes.
    pub true_labels: Vec<usize>,
    /// Warps applied to each curve: the curve is `y ∘ h`.
    pub true_warps: Vec<AffineWarp>,
    pub amplitudes: Vec<f64>,
}

impl LabeledDataset {
    pub fn truth_rows(&self) -> Vec<TruthRow> {
        self.curves
            .iter()
            .zip(&self.true_labels)
            .zip(&self.true_warps)
            .map(|((c, &label), &warp)| TruthRow {
                curve_id: c.id().to_string(),
                label,
                warp,
            })
            .collect()
    }

    /// Hex SHA-256 of the curve CSV.
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(curves_csv(&self.curves)?)))
    }
}

/// Uniform in (0, 1) from the top 53 bits.
fn unit(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

fn between(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    let u = unit(rng);
    lo + (hi - lo) * u
}

/// Generates the data set. Curve `i` draws from its own ChaCha8 stream
/// `i` of `seed`, in the order amplitude, dilation, shift; normals come
/// from the inverse normal CDF.
pub fn generate(spec: &SimSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let domain = spec.scenario.domain();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let n = 2 * spec.n_per_class;
    let mut out = LabeledDataset {
        curves: Vec::with_capacity(n),
        true_labels: Vec::with_capacity(n),
        true_warps: Vec::with_capacity(n),
        amplitudes: Vec::with_capacity(n),
    };
    for i in 0..n {
        let class = i / spec.n_per_class;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        let q = spec.q_mean + spec.q_sd * normal.inverse_cdf(unit(&mut rng));
        let a = between(&mut rng, spec.a_range);
        let mut b = between(&mut rng, spec.b_range);
        if class == 1 {
            b += spec.phase_cluster_shift;
        }
        let h = AffineWarp::new(a, b)?;
        let support = h.preimage(&domain);
        let grid = UniformGrid::spanning(support, spec.resolution)?;
        let scenario = spec.scenario;
        let curve = SampledCurve::from_fn(format!("curve_{:04}", i + 1), support, grid, 1, |_, x| {
            let y = h.apply(x).clamp(domain.lo(), domain.hi());
            scenario.class_mean(class, q, y)
        })?;
        out.curves.push(curve);
        out.true_labels.push(class);
        out.true_warps.push(h);
        out.amplitudes.push(q);
    }
    Ok(out)
}

pub fn gen_sim1(spec: &SimSpec) -> Result<LabeledDataset> {
    if spec.scenario != Scenario::Sim1 {
        return Err(Error::InvalidConfig("gen_sim1 needs the sim1 scenario".into()));
    }
    generate(spec)
}

pub fn gen_sim2(spec: &SimSpec) -> Result<LabeledDataset> {
    if spec.scenario != Scenario::Sim2 {
        return Err(Error::InvalidConfig("gen_sim2 needs the sim2 scenario".into()));
    }
    generate(spec)
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// Smallest fraction of mismatches over relabelings of `estimated`.
pub fn misclassification(estimated: &[usize], truth: &[usize]) -> Result<f64> {
    if estimated.len() != truth.len() {
        return Err(Error::InvalidConfig(format!(
            "{} estimated labels for {} true labels",
            estimated.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let k = estimated.iter().chain(truth).max().expect("non-empty") + 1;
    if k > 8 {
        return Err(Error::InvalidConfig(format!("misclassification supports up to 8 labels, got {k}")));
    }
    let mut table = vec![vec![0usize; k]; k];
    for (&e, &t) in estimated.iter().zip(truth) {
        table[e][t] += 1;
    }
    let best = permutations(k)
        .iter()
        .map(|p| (0..k).map(|e| table[e][p[e]]).sum::<usize>())
        .max()
        .expect("at least one permutation");
    Ok((truth.len() - best) as f64 / truth.len() as f64)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of stream `stream` derived from `base`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream))
}

#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub run: usize,
    pub mode: Mode,
    pub dataset_seed: u64,
    pub fit_seed: u64,
    pub digest: String,
    pub misclassification: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seconds: f64,
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub scenario: Scenario,
    pub mode: Mode,
    pub runs: usize,
    pub mean_misclassification: f64,
    /// Absent for a single run.
    pub sd_misclassification: Option<f64>,
    pub mean_iterations: f64,
    pub mean_seconds: f64,
    pub converged_runs: usize,
}

#[derive(Debug, Clone)]
pub struct BenchmarkSummary {
    pub rows: Vec<BenchmarkRow>,
    pub runs: Vec<BenchmarkRun>,
}

impl BenchmarkSummary {
    pub fn row(&self, mode: Mode) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| r.mode == mode)
    }
}

/// Generates `runs` data sets from seeds derived from `spec.seed` and fits
/// each one in every configuration of `configs`. All configurations see
/// the same data sets and initial partitions.
pub fn run_benchmark(spec: &SimSpec, configs: &[EngineConfig], runs: usize) -> Result<BenchmarkSummary> {
    if runs == 0 {
        return Err(Error::InvalidConfig("runs must be at least 1".into()));
    }
    if configs.is_empty() {
        return Err(Error::InvalidConfig("no configuration to benchmark".into()));
    }
    spec.validate()?;
    let per_run: Vec<Vec<BenchmarkRun>> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let dataset_seed = derive_seed(spec.seed, run as u64);
            let fit_seed = derive_seed(dataset_seed, u64::MAX);
            let data = generate(&SimSpec {
                seed: dataset_seed,
                ..spec.clone()
            })?;
            let digest = data.digest()?;
            configs
                .iter()
                .map(|cfg| {
                    let cfg = EngineConfig {
                        seed: fit_seed,
                        ..cfg.clone()
                    };
                    let started = Instant::now();
                    let fit = fit(&data.curves, &cfg).map_err(|e| e.context(format!("run {run}, {} mode", cfg.mode)))?;
                    let seconds = started.elapsed().as_secs_f64();
                    Ok(BenchmarkRun {
                        run,
                        mode: cfg.mode,
                        dataset_seed,
                        fit_seed,
                        digest: digest.clone(),
                        misclassification: misclassification(fit.labels.labels(), &data.true_labels)?,
                        iterations: fit.iterations,
                        converged: fit.converged,
                        seconds,
                        fit,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let runs_flat: Vec<BenchmarkRun> = per_run.into_iter().flatten().collect();
    let rows = configs
        .iter()
        .map(|cfg| {
            let mine: Vec<&BenchmarkRun> = runs_flat.iter().filter(|r| r.mode == cfg.mode).collect();
            let n = mine.len() as f64;
            let mean = mine.iter().map(|r| r.misclassification).sum::<f64>() / n;
            let sd = (mine.len() > 1).then(|| {
                (mine.iter().map(|r| (r.misclassification - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            });
            BenchmarkRow {
                scenario: spec.scenario,
                mode: cfg.mode,
                runs: mine.len(),
                mean_misclassification: mean,
                sd_misclassification: sd,
                mean_iterations: mine.iter().map(|r| r.iterations as f64).sum::<f64>() / n,
                mean_seconds: mine.iter().map(|r| r.seconds).sum::<f64>() / n,
                converged_runs: mine.iter().filter(|r| r.converged).count(),
            }
        })
        .collect();
    Ok(BenchmarkSummary { rows, runs: runs_flat })
}
