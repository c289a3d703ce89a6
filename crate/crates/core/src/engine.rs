//! The sparse K-mean alignment loop and its plain alignment baseline.
//!
//! Each iteration runs three steps on a common grid:
//!
//! 1. warp every curve against its cluster template (weighted by `w`),
//!    compose with its cumulative warp and normalize per cluster;
//! 2. re-estimate templates and reassign curves;
//! 3. in sparse mode, recompute the point-wise criterion and solve for `w`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{assign_from_scores, better, normalize_warps, score_matrix, WarpBounds, WarpScorer, WarpTarget};
use crate::criterion::{bcss_centroid_rows, bcss_pairwise_rows, normalized_derivative_rows, wcsim_rows, CriterionProfile};
use crate::curve::{common_grid, SampledCurve};
use crate::error::{Error, Result};
use crate::grid::{UniformGrid, MISSING};
use crate::metrics::{estimate_derivative, MetricKind};
use crate::partition::Partition;
use crate::stats::{mann_whitney, RankSumTest};
use crate::template::{build_template, Template, TemplateRule, DEFAULT_SPAN};
use crate::warp::AffineWarp;
use crate::weight::{solve_weight, verify_weight, SparsityParam, WeightFunction};

/// Schema tag of serialized fit results.
pub const SCHEMA: &str = "sparse-kma/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Sparse,
    Kma,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Sparse => "sparse",
            Mode::Kma => "kma",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sparse" => Ok(Mode::Sparse),
            "kma" => Ok(Mode::Kma),
            other => Err(Error::InvalidConfig(format!("unknown mode `{other}` (expected sparse or kma)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub k: usize,
    pub metric: MetricKind,
    /// Required zero-set fraction of `w`.
    pub m: f64,
    pub eps_a: f64,
    pub eps_b: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub resolution: usize,
    pub seed: u64,
    pub mode: Mode,
    pub robust_templates: bool,
    /// Require a small change in `w` before stopping (sparse mode).
    pub stop_on_weight_change: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            k: 2,
            metric: MetricKind::L2,
            m: 0.4,
            eps_a: 0.01,
            eps_b: 0.01,
            tol: 1e-3,
            max_iter: 50,
            resolution: 200,
            seed: 0,
            mode: Mode::Sparse,
            robust_templates: false,
            stop_on_weight_change: true,
        }
    }
}

impl EngineConfig {
    pub fn bounds(&self) -> Result<WarpBounds> {
        WarpBounds::new(self.eps_a, self.eps_b)
    }

    pub fn sparsity(&self) -> Result<SparsityParam> {
        SparsityParam::new(self.m)
    }

    /// Checks the configuration against a data set of `n` curves.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("K must be at least 1".into()));
        }
        if self.mode == Mode::Sparse && self.k < 2 {
            return Err(Error::SingleClusterSparse);
        }
        if n < self.k {
            return Err(Error::InvalidConfig(format!("{n} curves cannot form {} clusters", self.k)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be positive".into()));
        }
        if self.resolution < 2 {
            return Err(Error::InvalidConfig("resolution must be at least 2".into()));
        }
        self.bounds()?;
        self.sparsity()?;
        Ok(())
    }
}

/// One iteration of the loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `∫ w g dx` after the iteration; absent for K = 1.
    pub objective: Option<f64>,
    /// Mean distance (or similarity) of each curve to its template.
    pub mean_score: f64,
    /// Mean absolute point-wise change of `w`.
    pub weight_change: f64,
    pub labels_changed: usize,
    pub repairs: usize,
    /// Curves whose warp search ended worse than the identity.
    pub warp_step_violations: usize,
    /// Curves whose reassignment worsened their template score.
    pub assign_step_violations: usize,
    /// The weight update lowered `∫ w g` against a feasible previous `w`.
    pub weight_step_violation: bool,
    /// `w` after this iteration passes the constraint checks.
    pub weight_feasible: bool,
    /// Largest deviation of per-cluster mean warp parameters from (1, 0).
    pub normalization_error: f64,
    /// The objective fell by more than the relative slack.
    pub objective_dip: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub config: EngineConfig,
    pub grid: UniformGrid,
    pub curve_ids: Vec<String>,
    pub labels: Partition,
    /// Cumulative normalized warps, one per curve.
    pub warps: Vec<AffineWarp>,
    pub weight: WeightFunction,
    pub templates: Vec<Template>,
    /// Final weighted score of each curve against its template.
    pub scores: Vec<f64>,
    /// Within-cluster value of each curve for diagnostics: the weighted
    /// distance in L² mode, the unweighted similarity (in [-1, 1]) in H¹
    /// mode.
    pub within: Vec<f64>,
    pub history: Vec<IterationRecord>,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    /// Input curves resampled on the fit grid through their final warps.
    pub fn aligned(&self, curves: &[SampledCurve]) -> Result<Vec<SampledCurve>> {
        curves
            .iter()
            .zip(&self.warps)
            .map(|(c, h)| c.warp(h, &self.grid))
            .collect()
    }

    pub fn objective_dips(&self) -> usize {
        self.history.iter().filter(|r| r.objective_dip).count()
    }
}

/// Relative slack on the full objective before a decrease counts as a dip.
pub const DIP_SLACK: f64 = 1e-6;

/// Per-curve data carried through the loop.
struct Aligned {
    values: Vec<Vec<f64>>,
    /// Warped derivative (H¹ mode).
    derivative: Option<Vec<Vec<f64>>>,
    /// Warped derivative over its semi-norm (H¹ mode).
    normalized: Option<Vec<Vec<f64>>>,
}

struct State<'a> {
    curves: &'a [SampledCurve],
    derivatives: Option<Vec<SampledCurve>>,
    grid: UniformGrid,
    kind: MetricKind,
    rule: TemplateRule,
    warps: Vec<AffineWarp>,
    aligned: Vec<Aligned>,
    templates: Vec<Template>,
}

impl<'a> State<'a> {
    fn realign(&mut self) -> Result<()> {
        let grid = self.grid;
        let dims = self.curves[0].dims();
        let derivatives = self.derivatives.as_deref();
        self.aligned = self
            .curves
            .par_iter()
            .zip(self.warps.par_iter())
            .enumerate()
            .map(|(i, (c, h))| {
                let mut values = vec![vec![MISSING; grid.count()]; dims];
                if c.warp_into(h, &grid, &mut values) < 2 {
                    return Err(Error::DegenerateWarp { id: c.id().to_string() });
                }
                let (derivative, normalized) = match derivatives {
                    None => (None, None),
                    Some(ds) => {
                        let mut d = vec![vec![MISSING; grid.count()]; dims];
                        ds[i].warp_into(h, &grid, &mut d);
                        for row in &mut d {
                            row.iter_mut().for_each(|v| *v *= h.a());
                        }
                        let n = normalized_derivative_rows(&d, &grid)
                            .ok_or_else(|| Error::DegenerateSimilarity { id: c.id().to_string() })?;
                        (Some(d), Some(n))
                    }
                };
                Ok(Aligned {
                    values,
                    derivative,
                    normalized,
                })
            })
            .collect::<Result<_>>()?;
        Ok(())
    }

    fn rebuild_templates(&mut self, partition: &Partition) -> Result<()> {
        let values: Vec<&[Vec<f64>]> = self.aligned.iter().map(|a| a.values.as_slice()).collect();
        let normalized: Option<Vec<&[Vec<f64>]>> = match self.kind {
            MetricKind::L2 => None,
            MetricKind::H1 => Some(
                self.aligned
                    .iter()
                    .map(|a| a.normalized.as_deref().expect("H1 rows"))
                    .collect(),
            ),
        };
        self.templates = (0..partition.k())
            .map(|c| {
                build_template(
                    c,
                    self.kind,
                    &self.grid,
                    &values,
                    normalized.as_deref(),
                    &partition.members(c),
                    self.rule,
                )
            })
            .collect::<Result<_>>()?;
        Ok(())
    }

    fn match_rows(&self) -> Vec<&[Vec<f64>]> {
        self.aligned
            .iter()
            .map(|a| match self.kind {
                MetricKind::L2 => a.values.as_slice(),
                MetricKind::H1 => a.derivative.as_deref().expect("H1 rows"),
            })
            .collect()
    }

    fn scores(&self, w: &WeightFunction) -> Vec<Vec<f64>> {
        score_matrix(&self.match_rows(), &self.templates, Some(w.values()))
    }

    fn criterion(&self, partition: &Partition) -> Vec<f64> {
        match self.kind {
            MetricKind::L2 => {
                let rows: Vec<&[Vec<f64>]> = self.aligned.iter().map(|a| a.values.as_slice()).collect();
                bcss_centroid_rows(&rows, partition, &self.grid)
                    .unwrap_or_else(|| bcss_pairwise_rows(&rows, partition, &self.grid).0)
            }
            MetricKind::H1 => {
                let rows: Vec<&[Vec<f64>]> = self
                    .aligned
                    .iter()
                    .map(|a| a.normalized.as_deref().expect("H1 rows"))
                    .collect();
                wcsim_rows(&rows, partition, &self.grid)
            }
        }
    }
}

fn normalization_error(warps: &[AffineWarp], partition: &Partition) -> f64 {
    let sizes = partition.sizes();
    let mut sa = vec![0.0; partition.k()];
    let mut sb = vec![0.0; partition.k()];
    for (h, &l) in warps.iter().zip(partition.labels()) {
        sa[l] += h.a();
        sb[l] += h.b();
    }
    (0..partition.k())
        .filter(|&c| sizes[c] > 0)
        .map(|c| {
            let n = sizes[c] as f64;
            (sa[c] / n - 1.0).abs().max((sb[c] / n).abs())
        })
        .fold(0.0, f64::max)
}

fn mean_finite(v: &[f64]) -> f64 {
    let (s, c) = v
        .iter()
        .filter(|x| x.is_finite())
        .fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if c == 0 {
        f64::NAN
    } else {
        s / c as f64
    }
}

/// Uniformly random labels in `0..k` with every cluster non-empty.
pub fn initial_partition(n: usize, k: usize, seed: u64) -> Partition {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    loop {
        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            break;
        };
        let largest = (0..k).fold(0, |m, c| if sizes[c] > sizes[m] { c } else { m });
        let last = labels.iter().rposition(|&l| l == largest).expect("largest cluster has members");
        labels[last] = empty;
    }
    Partition::new(labels, k).expect("labels below K")
}

/// Runs the loop from the seeded random partition.
pub fn fit(curves: &[SampledCurve], config: &EngineConfig) -> Result<FitResult> {
    config.validate(curves.len())?;
    let init = initial_partition(curves.len(), config.k, config.seed);
    fit_from(curves, config, init)
}

/// The alignment-only baseline: `w` stays uniform and is never updated.
pub fn fit_kma_baseline(curves: &[SampledCurve], config: &EngineConfig) -> Result<FitResult> {
    let config = EngineConfig {
        mode: Mode::Kma,
        ..config.clone()
    };
    fit(curves, &config)
}

/// Runs the loop from a given initial partition.
pub fn fit_from(curves: &[SampledCurve], config: &EngineConfig, init: Partition) -> Result<FitResult> {
    config.validate(curves.len())?;
    if init.len() != curves.len() || init.k() != config.k {
        return Err(Error::InvalidConfig(format!(
            "initial partition has {} labels and K = {}; expected {} and {}",
            init.len(),
            init.k(),
            curves.len(),
            config.k
        )));
    }
    init.check_nonempty()?;
    let first = &curves[0];
    if let Some(c) = curves.iter().find(|c| c.dims() != first.dims()) {
        return Err(Error::DimensionMismatch {
            left: first.dims(),
            right: c.dims(),
        });
    }
    let bounds = config.bounds()?;
    let m = config.sparsity()?;
    let kind = config.metric;
    let grid = common_grid(curves, config.resolution)?;
    let derivatives = match kind {
        MetricKind::L2 => None,
        MetricKind::H1 => Some(
            curves
                .iter()
                .map(|c| estimate_derivative(c).map(|d| d.into_curve()))
                .collect::<Result<Vec<_>>>()?,
        ),
    };

    let mut state = State {
        curves,
        derivatives,
        grid,
        kind,
        rule: TemplateRule {
            robust: config.robust_templates,
            span: DEFAULT_SPAN,
        },
        warps: vec![AffineWarp::IDENTITY; curves.len()],
        aligned: Vec::new(),
        templates: Vec::new(),
    };
    let mut partition = init;
    state.realign()?;
    state.rebuild_templates(&partition)?;

    let mut w = WeightFunction::uniform(grid);
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut converged = false;
    let mut final_scores = Vec::new();

    for iteration in 1..=config.max_iter {
        // Step 1: alignment against the current templates.
        let searches: Vec<_> = {
            let derivs = state.derivatives.as_deref();
            let templates = &state.templates;
            let labels = partition.labels();
            let wv = w.values();
            let grid = &state.grid;
            (0..curves.len())
                .into_par_iter()
                .map(|i| {
                    let target = WarpTarget {
                        source: &curves[i],
                        derivative: derivs.map(|d| &d[i]),
                        base: state.warps[i],
                    };
                    WarpScorer::new(target, &templates[labels[i]], Some(wv), grid).search(bounds)
                })
                .collect()
        };
        let warp_step_violations = searches
            .iter()
            .filter(|s| !s.degenerate && better(kind, s.identity_score, s.score))
            .count();
        let composed: Vec<AffineWarp> = state
            .warps
            .iter()
            .zip(&searches)
            .map(|(h, s)| if s.degenerate { *h } else { h.compose(&s.warp) })
            .collect();
        state.warps = normalize_warps(&composed, &partition);
        state.realign().map_err(|e| e.context(format!("iteration {iteration}")))?;
        state.rebuild_templates(&partition)?;

        // Step 2: reassignment with w fixed.
        let scores = state.scores(&w);
        let assignment = assign_from_scores(&scores, kind, Some(&partition));
        let assign_step_violations = (0..curves.len())
            .filter(|i| !assignment.repaired.contains(i))
            .filter(|&i| better(kind, scores[i][partition.label(i)], assignment.scores[i]))
            .count();
        let labels_changed = assignment.partition.changes_from(&partition);
        let repairs = assignment.repaired.len();
        partition = assignment.partition;
        if labels_changed > 0 {
            state.warps = normalize_warps(&state.warps, &partition);
            state.realign().map_err(|e| e.context(format!("iteration {iteration}")))?;
            state.rebuild_templates(&partition)?;
        }

        // Step 3: weight update.
        let g = (config.k >= 2).then(|| state.criterion(&partition));
        let mut weight_step_violation = false;
        let mut weight_change = 0.0;
        if config.mode == Mode::Sparse {
            let g = g.as_ref().expect("sparse mode has K >= 2");
            let profile = CriterionProfile::new(grid, g.clone(), kind);
            let next = solve_weight(&profile, m).map_err(|e| e.context(format!("weight update in iteration {iteration}")))?;
            if verify_weight(&w).satisfied() {
                let before = w.objective(g);
                let after = next.objective(g);
                weight_step_violation = after < before - 1e-12 * before.abs().max(1.0);
            }
            weight_change = next.mean_abs_change(&w);
            w = next;
        }
        let objective = g.as_ref().map(|g| w.objective(g));

        let final_matrix = state.scores(&w);
        final_scores = (0..curves.len()).map(|i| final_matrix[i][partition.label(i)]).collect();
        let mean_score = mean_finite(&final_scores);

        let objective_dip = match (history.last().and_then(|r| r.objective), objective) {
            (Some(prev), Some(cur)) => cur < prev - DIP_SLACK * prev.abs(),
            _ => false,
        };
        if objective_dip {
            log::warn!("objective decreased in iteration {iteration}");
        }
        let record = IterationRecord {
            iteration,
            objective,
            mean_score,
            weight_change,
            labels_changed,
            repairs,
            warp_step_violations,
            assign_step_violations,
            weight_step_violation,
            weight_feasible: config.mode == Mode::Kma || verify_weight(&w).satisfied(),
            normalization_error: normalization_error(&state.warps, &partition),
            objective_dip,
        };
        log::debug!(
            "iteration {iteration}: mean score {mean_score:.6}, {labels_changed} labels changed, dw {weight_change:.3e}"
        );
        let score_stable = history
            .last()
            .is_some_and(|prev| (prev.mean_score - mean_score).abs() < config.tol);
        let weight_stable = config.mode == Mode::Kma || !config.stop_on_weight_change || weight_change < config.tol;
        history.push(record);
        if score_stable && weight_stable && labels_changed == 0 {
            converged = true;
            break;
        }
    }

    let within = match kind {
        MetricKind::L2 => final_scores.clone(),
        MetricKind::H1 => {
            let unweighted = score_matrix(&state.match_rows(), &state.templates, None);
            (0..curves.len()).map(|i| unweighted[i][partition.label(i)]).collect()
        }
    };
    Ok(FitResult {
        config: config.clone(),
        grid,
        curve_ids: curves.iter().map(|c| c.id().to_string()).collect(),
        labels: partition,
        warps: state.warps,
        weight: w,
        templates: state.templates,
        scores: final_scores,
        within,
        iterations: history.len(),
        history,
        converged,
    })
}

/// `∫ w g dx` for curves already on the grid of `w`; zero in L² mode
/// for a single cluster.
pub fn objective(curves: &[SampledCurve], partition: &Partition, w: &WeightFunction, metric: MetricKind) -> Result<f64> {
    if curves.is_empty() {
        return Ok(0.0);
    }
    if curves.iter().any(|c| !c.grid().matches(w.grid())) {
        return Err(Error::GridMismatch);
    }
    if partition.len() != curves.len() {
        return Err(Error::InvalidConfig("one label per curve required".into()));
    }
    let grid = *w.grid();
    let g = match metric {
        MetricKind::L2 => {
            let rows: Vec<&[Vec<f64>]> = curves.iter().map(|c| c.all_values()).collect();
            bcss_pairwise_rows(&rows, partition, &grid).0
        }
        MetricKind::H1 => {
            let mut normalized = Vec::with_capacity(curves.len());
            for c in curves {
                let d = estimate_derivative(c)?;
                normalized.push(
                    normalized_derivative_rows(d.curve().all_values(), &grid)
                        .ok_or_else(|| Error::DegenerateSimilarity { id: c.id().to_string() })?,
                );
            }
            let rows: Vec<&[Vec<f64>]> = normalized.iter().map(|r| r.as_slice()).collect();
            wcsim_rows(&rows, partition, &grid)
        }
    };
    Ok(w.objective(&g))
}

/// Scores at one K of a tuning sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KSummary {
    pub k: usize,
    pub scores: Vec<f64>,
    pub median: f64,
    pub mean: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub metric: MetricKind,
    pub mode: Mode,
    pub per_k: Vec<KSummary>,
    /// Rank-sum tests between consecutive K.
    pub tests: Vec<RankSumTest>,
}

impl DiagnosticsReport {
    /// Test between `k` and `k + 1`.
    pub fn test(&self, k: usize) -> Option<&RankSumTest> {
        self.tests.iter().find(|t| t.k_from == k)
    }
}

pub(crate) fn median(v: &[f64]) -> f64 {
    let mut s: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    if s.is_empty() {
        return f64::NAN;
    }
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Fits every K in `ks` with the same seed and compares the within-cluster
/// score samples of consecutive K.
pub fn tune_k(curves: &[SampledCurve], config: &EngineConfig, ks: std::ops::RangeInclusive<usize>) -> Result<DiagnosticsReport> {
    let (lo, hi) = (*ks.start(), *ks.end());
    let min_k = if config.mode == Mode::Sparse { 2 } else { 1 };
    if lo > hi || lo < min_k || hi >= curves.len() {
        return Err(Error::InvalidConfig(format!(
            "K range {lo}..{hi} must be increasing within [{min_k}, {})",
            curves.len()
        )));
    }
    let mut per_k = Vec::new();
    for k in ks {
        let cfg = EngineConfig { k, ..config.clone() };
        let fit = fit(curves, &cfg).map_err(|e| e.context(format!("K = {k}")))?;
        per_k.push(KSummary {
            k,
            median: median(&fit.within),
            mean: mean_finite(&fit.within),
            scores: fit.within,
            iterations: fit.iterations,
            converged: fit.converged,
        });
    }
    let tests = per_k
        .windows(2)
        .map(|w| {
            let a: Vec<f64> = w[0].scores.iter().copied().filter(|x| x.is_finite()).collect();
            let b: Vec<f64> = w[1].scores.iter().copied().filter(|x| x.is_finite()).collect();
            mann_whitney(&a, &b).map(|t| t.between(w[0].k, w[1].k))
        })
        .collect::<Result<_>>()?;
    Ok(DiagnosticsReport {
        metric: config.metric,
        mode: config.mode,
        per_k,
        tests,
    })
}
