//! Two-sided Wilcoxon rank-sum (Mann–Whitney U) test.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankSumTest {
    /// Labels of the two samples (K values in a tuning sweep).
    pub k_from: usize,
    pub k_to: usize,
    pub n1: usize,
    pub n2: usize,
    /// U statistic of the first sample.
    pub u: f64,
    pub z: f64,
    pub p_value: f64,
}

impl RankSumTest {
    pub fn between(self, k_from: usize, k_to: usize) -> Self {
        Self { k_from, k_to, ..self }
    }
}

/// Mid-ranks (1-based) of `values`, and `Σ (t³ - t)` over tie groups.
fn ranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut out = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let mid = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            out[i] = mid;
        }
        let t = (end - start) as f64;
        ties += t * t * t - t;
        start = end;
    }
    (out, ties)
}

/// Normal approximation with tie correction and a 0.5 continuity
/// correction toward the null.
pub fn mann_whitney(x: &[f64], y: &[f64]) -> Result<RankSumTest> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyInput("rank-sum test needs two non-empty samples"));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::Data("rank-sum sample contains NaN".into()));
    }
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let (r, ties) = ranks(&pooled);
    let r1: f64 = r[..x.len()].iter().sum();
    let u = r1 - n1 * (n1 + 1.0) / 2.0;
    let n = n1 + n2;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    let diff = u - n1 * n2 / 2.0;
    let corrected = if diff > 0.0 {
        diff - 0.5
    } else if diff < 0.0 {
        diff + 0.5
    } else {
        0.0
    };
    let z = if var > 0.0 { corrected / var.sqrt() } else { 0.0 };
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    let p = (2.0 * std.cdf(-z.abs())).min(1.0);
    Ok(RankSumTest {
        k_from: 0,
        k_to: 0,
        n1: x.len(),
        n2: y.len(),
        u,
        z,
        p_value: p,
    })
}
