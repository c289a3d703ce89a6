//! Cluster templates: point-wise means, or a local linear (tricube,
//! nearest-neighbour span) fit over the pooled member samples when member
//! domains are heterogeneous.

use serde::{Deserialize, Serialize};

use crate::criterion::normalized_derivative_rows;
use crate::curve::SampledCurve;
use crate::error::{Error, Result};
use crate::grid::{is_missing, Interval, UniformGrid, MISSING};
use crate::metrics::{derivative_row, MetricKind};

/// Default nearest-neighbour span of the local fit.
pub const DEFAULT_SPAN: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    cluster: usize,
    kind: MetricKind,
    curve: SampledCurve,
    /// Mean normalized derivative per dimension (H¹ mode only).
    derivative: Option<Vec<Vec<f64>>>,
}

impl Template {
    pub fn cluster(&self) -> usize {
        self.cluster
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn curve(&self) -> &SampledCurve {
        &self.curve
    }

    pub fn derivative(&self) -> Option<&[Vec<f64>]> {
        self.derivative.as_deref()
    }

    /// The rows compared against warped curves: values in L² mode,
    /// normalized derivatives in H¹ mode.
    pub(crate) fn match_rows(&self) -> &[Vec<f64>] {
        match self.kind {
            MetricKind::L2 => self.curve.all_values(),
            MetricKind::H1 => self.derivative.as_deref().expect("H1 template has derivatives"),
        }
    }
}

/// Minimum number of observed members for a template grid point.
pub fn min_count(members: usize) -> usize {
    let wanted = 2.max((0.05 * members as f64).ceil() as usize);
    wanted.min(members.max(1))
}

/// Point-wise member mean where at least `min_count` members are observed.
pub(crate) fn mean_rows(rows: &[&[Vec<f64>]], members: &[usize], min: usize) -> Vec<Vec<f64>> {
    let dims = rows[members[0]].len();
    let n = rows[members[0]][0].len();
    (0..dims)
        .map(|d| {
            (0..n)
                .map(|x| {
                    let mut sum = 0.0;
                    let mut count = 0;
                    for &i in members {
                        let v = rows[i][d][x];
                        if !is_missing(v) {
                            sum += v;
                            count += 1;
                        }
                    }
                    if count >= min.max(1) {
                        sum / count as f64
                    } else {
                        MISSING
                    }
                })
                .collect()
        })
        .collect()
}

/// Local linear regression with tricube weights over samples pooled on the
/// grid: `counts[j]` samples with total `sums[j]` at grid point `j`.
/// Evaluated between the first and last observed grid points.
pub(crate) fn local_linear(counts: &[usize], sums: &[f64], grid: &UniformGrid, span: f64) -> Vec<f64> {
    let n = counts.len();
    let total: usize = counts.iter().sum();
    let mut out = vec![MISSING; n];
    let (Some(first), Some(last)) = (
        counts.iter().position(|&c| c > 0),
        counts.iter().rposition(|&c| c > 0),
    ) else {
        return out;
    };
    let q = ((span * total as f64).ceil() as usize).clamp(1, total);
    for x0 in first..=last {
        // Grow a window until it holds q samples; the radius is the distance
        // (in grid steps) of the farthest sample needed.
        let mut held = counts[x0];
        let mut radius = 0usize;
        while held < q {
            radius += 1;
            if x0 >= radius {
                held += counts[x0 - radius];
            }
            if x0 + radius < n {
                held += counts[x0 + radius];
            }
        }
        // Tricube weight vanishes at the bandwidth; keep the farthest
        // neighbours with a small positive weight.
        let h = (radius as f64 + 1.0) * grid.step();
        let lo = x0.saturating_sub(radius);
        let hi = (x0 + radius).min(n - 1);
        let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for j in lo..=hi {
            if counts[j] == 0 {
                continue;
            }
            let dx = (j as f64 - x0 as f64) * grid.step();
            let u = (dx / h).abs();
            let w = (1.0 - u * u * u).powi(3);
            let c = counts[j] as f64;
            s0 += w * c;
            s1 += w * c * dx;
            s2 += w * c * dx * dx;
            t0 += w * sums[j];
            t1 += w * dx * sums[j];
        }
        let det = s0 * s2 - s1 * s1;
        out[x0] = if det > 1e-12 * s0 * s2.max(f64::MIN_POSITIVE) {
            (s2 * t0 - s1 * t1) / det
        } else {
            t0 / s0
        };
    }
    out
}

pub(crate) fn local_linear_rows(
    rows: &[&[Vec<f64>]],
    members: &[usize],
    grid: &UniformGrid,
    span: f64,
) -> Vec<Vec<f64>> {
    let dims = rows[members[0]].len();
    (0..dims)
        .map(|d| {
            let mut counts = vec![0usize; grid.count()];
            let mut sums = vec![0.0; grid.count()];
            for &i in members {
                for (x, v) in rows[i][d].iter().enumerate() {
                    if !is_missing(*v) {
                        counts[x] += 1;
                        sums[x] += v;
                    }
                }
            }
            local_linear(&counts, &sums, grid, span)
        })
        .collect()
}

/// How templates are computed from member rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct TemplateRule {
    pub robust: bool,
    pub span: f64,
}

/// Template rows from member rows; `None` if no grid point qualifies.
pub(crate) fn template_rows(
    rows: &[&[Vec<f64>]],
    members: &[usize],
    grid: &UniformGrid,
    rule: TemplateRule,
) -> Option<Vec<Vec<f64>>> {
    let out = if rule.robust {
        local_linear_rows(rows, members, grid, rule.span)
    } else {
        mean_rows(rows, members, min_count(members.len()))
    };
    let valid = (0..grid.count())
        .filter(|&x| out.iter().all(|r| !is_missing(r[x])))
        .count();
    (valid >= 2).then_some(out)
}

pub(crate) fn build_template(
    cluster: usize,
    kind: MetricKind,
    grid: &UniformGrid,
    value_rows: &[&[Vec<f64>]],
    derivative_rows: Option<&[&[Vec<f64>]]>,
    members: &[usize],
    rule: TemplateRule,
) -> Result<Template> {
    let no_support = || Error::NoTemplateSupport {
        cluster,
        min_count: if rule.robust { 1 } else { min_count(members.len()) },
    };
    if members.is_empty() {
        return Err(Error::EmptyCluster(cluster));
    }
    let values = template_rows(value_rows, members, grid, rule).ok_or_else(no_support)?;
    let derivative = match (kind, derivative_rows) {
        (MetricKind::H1, Some(d)) => Some(template_rows(d, members, grid, rule).ok_or_else(no_support)?),
        (MetricKind::H1, None) => unreachable!("H1 templates need derivative rows"),
        (MetricKind::L2, _) => None,
    };
    let curve = rows_to_curve(format!("template_{}", cluster + 1), grid, values).ok_or_else(no_support)?;
    Ok(Template {
        cluster,
        kind,
        curve,
        derivative,
    })
}

/// Wraps rows as a curve whose domain spans its observed points.
pub(crate) fn rows_to_curve(id: String, grid: &UniformGrid, mut rows: Vec<Vec<f64>>) -> Option<SampledCurve> {
    // Points must be observed in every dimension.
    for x in 0..grid.count() {
        if rows.iter().any(|r| is_missing(r[x])) {
            rows.iter_mut().for_each(|r| r[x] = MISSING);
        }
    }
    let first = (0..grid.count()).find(|&x| !is_missing(rows[0][x]))?;
    let last = (0..grid.count()).rev().find(|&x| !is_missing(rows[0][x]))?;
    let domain = Interval::new(grid.point(first), grid.point(last)).ok()?;
    SampledCurve::new(id, domain, *grid, rows).ok()
}

/// Template of `members` among `curves` (all on one common grid).
///
/// In H¹ mode the template also carries the mean of the members'
/// derivatives divided by their semi-norms. With `robust`, a local linear
/// fit with span [`DEFAULT_SPAN`] replaces the point-wise mean.
pub fn estimate_template(
    curves: &[SampledCurve],
    members: &[usize],
    cluster: usize,
    kind: MetricKind,
    robust: bool,
) -> Result<Template> {
    let first = curves.first().ok_or(Error::EmptyInput("no curves"))?;
    let grid = *first.grid();
    if curves.iter().any(|c| !c.grid().matches(&grid)) {
        return Err(Error::GridMismatch);
    }
    let rows: Vec<&[Vec<f64>]> = curves.iter().map(|c| c.all_values()).collect();
    let rule = TemplateRule {
        robust,
        span: DEFAULT_SPAN,
    };
    let derivs: Option<Vec<Vec<Vec<f64>>>> = match kind {
        MetricKind::L2 => None,
        MetricKind::H1 => {
            let mut all = Vec::with_capacity(curves.len());
            for c in curves {
                let d: Vec<Vec<f64>> = (0..c.dims()).map(|d| derivative_row(c.values(d), grid.step())).collect();
                let norm = normalized_derivative_rows(&d, &grid)
                    .ok_or_else(|| Error::DegenerateSimilarity { id: c.id().to_string() })?;
                all.push(norm);
            }
            Some(all)
        }
    };
    let drefs: Option<Vec<&[Vec<f64>]>> = derivs.as_ref().map(|d| d.iter().map(|r| r.as_slice()).collect());
    build_template(cluster, kind, &grid, &rows, drefs.as_deref(), members, rule)
}
