//! Point-wise clustering criterion `g(x)`.
//!
//! In L² mode `g` is the between-cluster sum of squares of the aligned
//! curves, where each ordered pair `(i, j)` contributes
//! `G_ij(x) = |f_i(x) - f_j(x)|² 1_{overlap}(x) / √μ(overlap_ij)`:
//!
//! ```text
//! g(x) = (1/n) Σ_{i,j} G_ij(x) - Σ_k (1/n_k) Σ_{i,j ∈ C_k} G_ij(x)
//! ```
//!
//! In H¹ mode `g` is the within-cluster similarity built from derivatives
//! normalized by their semi-norms, averaged over dimensions.

use rayon::prelude::*;
use serde::Serialize;

use crate::curve::SampledCurve;
use crate::error::{Error, Result};
use crate::grid::{is_missing, UniformGrid};
use crate::metrics::MetricKind;
use crate::partition::Partition;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionProfile {
    grid: UniformGrid,
    values: Vec<f64>,
    kind: MetricKind,
}

impl CriterionProfile {
    pub fn new(grid: UniformGrid, values: Vec<f64>, kind: MetricKind) -> Self {
        assert_eq!(values.len(), grid.count(), "one criterion value per grid point");
        Self { grid, values, kind }
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    /// `∫ g dx`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.step()
    }
}

/// Pairs whose warped domains do not overlap; they contribute zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OverlapReport {
    pub empty_pairs: usize,
}

fn check_inputs(curves: &[SampledCurve], partition: &Partition) -> Result<UniformGrid> {
    let first = curves.first().ok_or(Error::EmptyInput("no curves"))?;
    if partition.len() != curves.len() {
        return Err(Error::InvalidConfig(format!(
            "{} labels for {} curves",
            partition.len(),
            curves.len()
        )));
    }
    if partition.k() < 2 {
        return Err(Error::SingleClusterSparse);
    }
    partition.check_nonempty()?;
    for c in curves {
        if !c.grid().matches(first.grid()) {
            return Err(Error::GridMismatch);
        }
        if c.dims() != first.dims() {
            return Err(Error::DimensionMismatch {
                left: first.dims(),
                right: c.dims(),
            });
        }
    }
    Ok(*first.grid())
}

fn observed_mask(rows: &[Vec<f64>]) -> Vec<bool> {
    (0..rows[0].len())
        .map(|j| rows.iter().all(|r| !is_missing(r[j])))
        .collect()
}

/// Exact pairwise criterion from sample rows on a common grid.
pub(crate) fn bcss_pairwise_rows(
    rows: &[&[Vec<f64>]],
    partition: &Partition,
    grid: &UniformGrid,
) -> (Vec<f64>, OverlapReport) {
    let n = rows.len();
    let masks: Vec<Vec<bool>> = rows.iter().map(|r| observed_mask(r)).collect();
    let sizes = partition.sizes();
    let labels = partition.labels();

    // 1/√μ(overlap) for each unordered pair, 0 for empty overlaps.
    let mut scale = vec![0.0; n * n];
    let mut report = OverlapReport::default();
    for i in 0..n {
        for j in (i + 1)..n {
            let c = masks[i].iter().zip(&masks[j]).filter(|(a, b)| **a && **b).count();
            if c == 0 {
                report.empty_pairs += 1;
            } else {
                scale[i * n + j] = 1.0 / (c as f64 * grid.step()).sqrt();
            }
        }
    }

    let values = (0..grid.count())
        .into_par_iter()
        .map(|x| {
            let mut total = 0.0;
            let mut within = 0.0;
            for i in 0..n {
                if !masks[i][x] {
                    continue;
                }
                for j in (i + 1)..n {
                    if !masks[j][x] {
                        continue;
                    }
                    let s = scale[i * n + j];
                    if s == 0.0 {
                        continue;
                    }
                    let sq: f64 = rows[i]
                        .iter()
                        .zip(rows[j])
                        .map(|(a, b)| (a[x] - b[x]) * (a[x] - b[x]))
                        .sum();
                    // Ordered pairs: (i, j) and (j, i) both appear.
                    let g = 2.0 * sq * s;
                    total += g;
                    if labels[i] == labels[j] {
                        within += g / sizes[labels[i]] as f64;
                    }
                }
            }
            total / n as f64 - within
        })
        .collect();
    (values, report)
}

/// Between-cluster sum of squares, exact for heterogeneous domains.
pub fn bcss_pairwise(curves: &[SampledCurve], partition: &Partition) -> Result<CriterionProfile> {
    bcss_pairwise_with_report(curves, partition).map(|(p, _)| p)
}

pub fn bcss_pairwise_with_report(
    curves: &[SampledCurve],
    partition: &Partition,
) -> Result<(CriterionProfile, OverlapReport)> {
    let grid = check_inputs(curves, partition)?;
    let rows: Vec<&[Vec<f64>]> = curves.iter().map(|c| c.all_values()).collect();
    let (values, report) = bcss_pairwise_rows(&rows, partition, &grid);
    Ok((CriterionProfile::new(grid, values, MetricKind::L2), report))
}

/// Centroid form of the criterion, valid when every curve is observed on
/// the same grid points; `None` otherwise.
pub(crate) fn bcss_centroid_rows(
    rows: &[&[Vec<f64>]],
    partition: &Partition,
    grid: &UniformGrid,
) -> Option<Vec<f64>> {
    let mask = observed_mask(rows[0]);
    if rows.iter().skip(1).any(|r| observed_mask(r) != mask) {
        return None;
    }
    let observed = mask.iter().filter(|m| **m).count();
    if observed == 0 {
        return Some(vec![0.0; grid.count()]);
    }
    let c = 2.0 / (observed as f64 * grid.step()).sqrt();
    let n = rows.len();
    let k = partition.k();
    let sizes = partition.sizes();
    let labels = partition.labels();
    let dims = rows[0].len();

    let values = (0..grid.count())
        .map(|x| {
            if !mask[x] {
                return 0.0;
            }
            let mut g = 0.0;
            for d in 0..dims {
                let mean = rows.iter().map(|r| r[d][x]).sum::<f64>() / n as f64;
                let mut cmean = vec![0.0; k];
                for (i, r) in rows.iter().enumerate() {
                    cmean[labels[i]] += r[d][x];
                }
                for (m, s) in cmean.iter_mut().zip(&sizes) {
                    *m /= *s as f64;
                }
                let mut total = 0.0;
                let mut within = 0.0;
                for (i, r) in rows.iter().enumerate() {
                    let v = r[d][x];
                    total += (v - mean) * (v - mean);
                    within += (v - cmean[labels[i]]) * (v - cmean[labels[i]]);
                }
                g += total - within;
            }
            c * g
        })
        .collect();
    Some(values)
}

/// O(n) centroid form of [`bcss_pairwise`] for curves sharing one domain.
pub fn bcss_centroid_fast(curves: &[SampledCurve], partition: &Partition) -> Result<CriterionProfile> {
    let grid = check_inputs(curves, partition)?;
    let rows: Vec<&[Vec<f64>]> = curves.iter().map(|c| c.all_values()).collect();
    let values = bcss_centroid_rows(&rows, partition, &grid).ok_or(Error::DomainsDiffer)?;
    Ok(CriterionProfile::new(grid, values, MetricKind::L2))
}

/// Within-cluster similarity from derivative rows already divided by their
/// per-dimension semi-norms.
pub(crate) fn wcsim_rows(
    normalized: &[&[Vec<f64>]],
    partition: &Partition,
    grid: &UniformGrid,
) -> Vec<f64> {
    let k = partition.k();
    let sizes = partition.sizes();
    let labels = partition.labels();
    let dims = normalized[0].len();
    (0..grid.count())
        .map(|x| {
            let mut g = 0.0;
            for d in 0..dims {
                let mut sums = vec![0.0; k];
                for (i, r) in normalized.iter().enumerate() {
                    let v = r[d][x];
                    if !is_missing(v) {
                        sums[labels[i]] += v;
                    }
                }
                g += sums
                    .iter()
                    .zip(&sizes)
                    .map(|(s, n)| s * s / *n as f64)
                    .sum::<f64>();
            }
            g / dims as f64
        })
        .collect()
}

/// Derivative rows divided by their semi-norm over the curve's own domain.
pub(crate) fn normalized_derivative_rows(
    rows: &[Vec<f64>],
    grid: &UniformGrid,
) -> Option<Vec<Vec<f64>>> {
    rows.iter()
        .map(|r| {
            let norm = (r
                .iter()
                .filter(|v| !is_missing(**v))
                .map(|v| v * v)
                .sum::<f64>()
                * grid.step())
            .sqrt();
            (norm > 0.0).then(|| r.iter().map(|v| v / norm).collect())
        })
        .collect()
}

/// Within-cluster H¹ similarity criterion.
pub fn wcsim_pointwise(curves: &[SampledCurve], partition: &Partition) -> Result<CriterionProfile> {
    let grid = check_inputs(curves, partition)?;
    let mut normalized = Vec::with_capacity(curves.len());
    for c in curves {
        let deriv = crate::metrics::estimate_derivative(c)?;
        let rows = normalized_derivative_rows(deriv.curve().all_values(), &grid)
            .ok_or_else(|| Error::DegenerateSimilarity { id: c.id().to_string() })?;
        normalized.push(rows);
    }
    let refs: Vec<&[Vec<f64>]> = normalized.iter().map(|r| r.as_slice()).collect();
    Ok(CriterionProfile::new(grid, wcsim_rows(&refs, partition, &grid), MetricKind::H1))
}
