//! Warp search against cluster templates, warp normalization and cluster
//! assignment.

use serde::{Deserialize, Serialize};

use crate::curve::SampledCurve;
use crate::error::{Error, Result};
use crate::grid::{UniformGrid, MISSING};
use crate::metrics::{distance_rows, similarity_rows, MetricKind};
use crate::partition::Partition;
use crate::template::Template;
use crate::warp::AffineWarp;
use crate::weight::WeightFunction;

/// Points per axis of the coarse search grid.
const SEARCH_POINTS: usize = 21;
const GOLDEN_ITERATIONS: usize = 30;

/// Per-iteration half-widths of the warp search box
/// `[1 - eps_a, 1 + eps_a] x [-eps_b, eps_b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpBounds {
    pub eps_a: f64,
    pub eps_b: f64,
}

impl WarpBounds {
    pub fn new(eps_a: f64, eps_b: f64) -> Result<Self> {
        if !(eps_a >= 0.0 && eps_b >= 0.0 && eps_a < 1.0 && eps_b.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "warp bounds need 0 <= eps_a < 1 and eps_b >= 0, got ({eps_a}, {eps_b})"
            )));
        }
        Ok(Self { eps_a, eps_b })
    }

    pub const NONE: WarpBounds = WarpBounds { eps_a: 0.0, eps_b: 0.0 };
}

/// Outcome of a warp search. Scores are template distances in L² mode and
/// template similarities in H¹ mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpSearch {
    pub warp: AffineWarp,
    pub score: f64,
    pub identity_score: f64,
    /// No candidate (identity included) kept two valid grid points.
    pub degenerate: bool,
}

/// A curve as seen through its current cumulative warp.
pub(crate) struct WarpTarget<'a> {
    pub source: &'a SampledCurve,
    /// Derivative of `source` on its own grid (H¹ mode).
    pub derivative: Option<&'a SampledCurve>,
    pub base: AffineWarp,
}

/// Scores candidate warps of one curve against one template.
pub(crate) struct WarpScorer<'a> {
    target: WarpTarget<'a>,
    template: &'a [Vec<f64>],
    weight: Option<&'a [f64]>,
    grid: &'a UniformGrid,
    kind: MetricKind,
    scratch: Vec<Vec<f64>>,
}

impl<'a> WarpScorer<'a> {
    pub fn new(
        target: WarpTarget<'a>,
        template: &'a Template,
        weight: Option<&'a [f64]>,
        grid: &'a UniformGrid,
    ) -> Self {
        let dims = target.source.dims();
        Self {
            target,
            template: template.match_rows(),
            weight,
            grid,
            kind: template.kind(),
            scratch: vec![vec![MISSING; grid.count()]; dims],
        }
    }

    /// Template score of `source ∘ base ∘ h`, or `None` if degenerate.
    pub fn score(&mut self, h: &AffineWarp) -> Option<f64> {
        let total = self.target.base.compose(h);
        match self.kind {
            MetricKind::L2 => {
                if self.target.source.warp_into(&total, self.grid, &mut self.scratch) < 2 {
                    return None;
                }
                distance_rows(&self.scratch, self.template, self.weight)
            }
            MetricKind::H1 => {
                let deriv = self.target.derivative.expect("H1 scoring needs derivatives");
                if deriv.warp_into(&total, self.grid, &mut self.scratch) < 2 {
                    return None;
                }
                // (f ∘ h)′ = a f′ ∘ h; the factor cancels in the normalized
                // index but is kept so the rows are true derivatives.
                for row in &mut self.scratch {
                    row.iter_mut().for_each(|v| *v *= total.a());
                }
                similarity_rows(&self.scratch, self.template, self.weight)
            }
        }
    }

    /// Cost to minimize: distance, or negated similarity.
    fn cost(&mut self, h: &AffineWarp) -> f64 {
        match self.score(h) {
            Some(s) if self.kind.maximizes() => -s,
            Some(s) => s,
            None => f64::INFINITY,
        }
    }

    fn cost_ab(&mut self, a: f64, b: f64) -> f64 {
        self.cost(&AffineWarp::new(a, b).expect("search box keeps a > 0"))
    }

    /// Coarse grid over the bounds box followed by one golden-section pass
    /// per coordinate around the best grid node.
    pub fn search(&mut self, bounds: WarpBounds) -> WarpSearch {
        let identity_cost = self.cost(&AffineWarp::IDENTITY);
        let sign = if self.kind.maximizes() { -1.0 } else { 1.0 };
        let as_score = |c: f64| if c.is_finite() { sign * c } else { f64::NAN };

        let axis = |eps: f64| -> Vec<f64> {
            if eps == 0.0 {
                vec![0.0]
            } else {
                let half = (SEARCH_POINTS - 1) / 2;
                (0..SEARCH_POINTS)
                    .map(|i| eps * (i as f64 - half as f64) / half as f64)
                    .collect()
            }
        };
        let da = axis(bounds.eps_a);
        let db = axis(bounds.eps_b);

        let mut best = (1.0, 0.0, identity_cost);
        for &ua in &da {
            for &ub in &db {
                let (a, b) = (1.0 + ua, ub);
                if a == 1.0 && b == 0.0 {
                    continue;
                }
                let c = self.cost_ab(a, b);
                if c < best.2 {
                    best = (a, b, c);
                }
            }
        }

        if best.2.is_finite() {
            if da.len() > 1 {
                let step = da[1] - da[0];
                let lo = (best.0 - step).max(1.0 - bounds.eps_a);
                let hi = (best.0 + step).min(1.0 + bounds.eps_a);
                let b = best.1;
                let (a, c) = golden_section(lo, hi, |a| self.cost_ab(a, b));
                if c < best.2 {
                    best = (a, b, c);
                }
            }
            if db.len() > 1 {
                let step = db[1] - db[0];
                let lo = (best.1 - step).max(-bounds.eps_b);
                let hi = (best.1 + step).min(bounds.eps_b);
                let a = best.0;
                let (b, c) = golden_section(lo, hi, |b| self.cost_ab(a, b));
                if c < best.2 {
                    best = (a, b, c);
                }
            }
        }

        if !best.2.is_finite() {
            return WarpSearch {
                warp: AffineWarp::IDENTITY,
                score: f64::NAN,
                identity_score: f64::NAN,
                degenerate: true,
            };
        }
        WarpSearch {
            warp: AffineWarp::new(best.0, best.1).expect("a > 0"),
            score: as_score(best.2),
            identity_score: as_score(identity_cost),
            degenerate: false,
        }
    }
}

/// Minimizes `f` on `[lo, hi]`; returns the best evaluated point.
fn golden_section(lo: f64, hi: f64, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut best = if fd < fc { (d, fd) } else { (c, fc) };
    for _ in 0..GOLDEN_ITERATIONS {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
            if fc < best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
            if fd < best.1 {
                best = (d, fd);
            }
        }
    }
    best
}

/// Best warp of `f` against `template` within `bounds`, with `f ∘ h`
/// evaluated on the weight's grid.
///
/// L² mode minimizes the weighted distance; H¹ mode maximizes the weighted
/// similarity. The identity is always a candidate.
pub fn best_warp(
    f: &SampledCurve,
    template: &Template,
    w: &WeightFunction,
    bounds: WarpBounds,
) -> Result<WarpSearch> {
    let derivative = match template.kind() {
        MetricKind::L2 => None,
        MetricKind::H1 => Some(crate::metrics::estimate_derivative(f)?.into_curve()),
    };
    let target = WarpTarget {
        source: f,
        derivative: derivative.as_ref(),
        base: AffineWarp::IDENTITY,
    };
    let mut scorer = WarpScorer::new(target, template, Some(w.values()), w.grid());
    Ok(scorer.search(bounds))
}

/// Composes each warp with the inverse of its cluster's mean warp, so the
/// mean dilation and shift of every cluster become 1 and 0.
pub fn normalize_warps(warps: &[AffineWarp], partition: &Partition) -> Vec<AffineWarp> {
    let k = partition.k();
    let mut sum_a = vec![0.0; k];
    let mut sum_b = vec![0.0; k];
    let sizes = partition.sizes();
    for (h, &l) in warps.iter().zip(partition.labels()) {
        sum_a[l] += h.a();
        sum_b[l] += h.b();
    }
    let inverse: Vec<Option<AffineWarp>> = (0..k)
        .map(|c| {
            (sizes[c] > 0).then(|| {
                let n = sizes[c] as f64;
                AffineWarp::new(sum_a[c] / n, sum_b[c] / n)
                    .expect("mean of positive dilations is positive")
                    .invert()
            })
        })
        .collect();
    warps
        .iter()
        .zip(partition.labels())
        .map(|(h, &l)| h.compose(&inverse[l].expect("member's cluster is non-empty")))
        .collect()
}

/// Scores of every curve against every template (`scores[i][k]`), `NaN`
/// where the overlap is too short.
pub(crate) fn score_matrix(
    rows: &[&[Vec<f64>]],
    templates: &[Template],
    weight: Option<&[f64]>,
) -> Vec<Vec<f64>> {
    use rayon::prelude::*;
    rows.par_iter()
        .map(|r| {
            templates
                .iter()
                .map(|t| {
                    let s = match t.kind() {
                        MetricKind::L2 => distance_rows(r, t.match_rows(), weight),
                        MetricKind::H1 => similarity_rows(r, t.match_rows(), weight),
                    };
                    s.unwrap_or(f64::NAN)
                })
                .collect()
        })
        .collect()
}

/// `a` is a strictly better score than `b`.
#[inline]
pub(crate) fn better(kind: MetricKind, a: f64, b: f64) -> bool {
    if a.is_nan() {
        return false;
    }
    if b.is_nan() {
        return true;
    }
    if kind.maximizes() {
        a > b
    } else {
        a < b
    }
}

/// Assignment outcome with the score of each curve to its new template.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub partition: Partition,
    pub scores: Vec<f64>,
    /// Curves moved to fill empty clusters.
    pub repaired: Vec<usize>,
}

/// Reassigns from a score matrix. Curves move only to strictly better
/// templates; without a current partition ties go to the lowest index.
pub(crate) fn assign_from_scores(
    scores: &[Vec<f64>],
    kind: MetricKind,
    current: Option<&Partition>,
) -> Assignment {
    let k = scores.first().map_or(1, |s| s.len());
    let mut labels: Vec<usize> = scores
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut best = current.map_or(0, |p| p.label(i));
            for c in 0..k {
                if better(kind, s[c], s[best]) {
                    best = c;
                }
            }
            best
        })
        .collect();

    let mut repaired = Vec::new();
    loop {
        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            break;
        };
        let largest = (0..k).fold(0, |m, c| if sizes[c] > sizes[m] { c } else { m });
        if sizes[largest] < 2 {
            break;
        }
        // Worst-fitting member of the largest cluster.
        let mut worst: Option<usize> = None;
        for i in 0..labels.len() {
            if labels[i] != largest {
                continue;
            }
            worst = match worst {
                None => Some(i),
                Some(j) if better(kind, scores[j][largest], scores[i][largest]) => Some(i),
                keep => keep,
            };
        }
        let moved = worst.expect("largest cluster has members");
        labels[moved] = empty;
        repaired.push(moved);
    }
    let assigned: Vec<f64> = labels.iter().enumerate().map(|(i, &l)| scores[i][l]).collect();
    Assignment {
        partition: Partition::new(labels, k).expect("labels below K"),
        scores: assigned,
        repaired,
    }
}

/// Assigns each (already aligned) curve to its best template under the
/// weighted metric; empty clusters take the worst-fitting curve of the
/// largest cluster.
pub fn assign_clusters(curves: &[SampledCurve], templates: &[Template], w: &WeightFunction) -> Result<Assignment> {
    let kind = templates.first().ok_or(Error::EmptyInput("no templates"))?.kind();
    let mut rows_owned = Vec::new();
    for c in curves {
        if !c.grid().matches(w.grid()) {
            return Err(Error::GridMismatch);
        }
        rows_owned.push(match kind {
            MetricKind::L2 => c.all_values().to_vec(),
            MetricKind::H1 => crate::metrics::estimate_derivative(c)?.curve().all_values().to_vec(),
        });
    }
    let rows: Vec<&[Vec<f64>]> = rows_owned.iter().map(|r| r.as_slice()).collect();
    let scores = score_matrix(&rows, templates, Some(w.values()));
    Ok(assign_from_scores(&scores, kind, None))
}
