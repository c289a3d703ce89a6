//! Optimal weight function for a fixed partition and fixed warps.
//!
//! Maximizes `∫ w g dx` subject to `‖w‖₂ ≤ 1`, `w ≥ 0` and
//! `μ({w = 0}) ≥ m μ(D)`. The maximizer zeroes the grid points with the
//! smallest clipped criterion `g⁺ = max(g, 0)` until the zero set reaches
//! the required measure, and is proportional to `g⁺` elsewhere.

use serde::{Deserialize, Serialize};

use crate::criterion::CriterionProfile;
use crate::error::{Error, Result};
use crate::grid::UniformGrid;

/// Required measure of the zero set of `w`, as a fraction of `μ(D)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SparsityParam(f64);

impl SparsityParam {
    pub fn new(m_fraction: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&m_fraction) {
            return Err(Error::InvalidConfig(format!(
                "sparsity fraction must lie in [0, 1), got {m_fraction}"
            )));
        }
        Ok(Self(m_fraction))
    }

    pub fn fraction(&self) -> f64 {
        self.0
    }

    /// Number of grid points that must be zero on an `n`-point grid.
    pub fn zero_count(&self, n: usize) -> usize {
        (self.0 * n as f64 - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    grid: UniformGrid,
    values: Vec<f64>,
    m_fraction: f64,
}

impl WeightFunction {
    /// Wraps raw values without checking the constraints; see [`verify_weight`].
    pub fn from_values(grid: UniformGrid, values: Vec<f64>, m_fraction: f64) -> Self {
        assert_eq!(values.len(), grid.count(), "one weight per grid point");
        Self {
            grid,
            values,
            m_fraction,
        }
    }

    /// Constant `1 / √μ(D)`, the unit-norm weight with no zero set.
    pub fn uniform(grid: UniformGrid) -> Self {
        let v = 1.0 / grid.measure().sqrt();
        Self::from_values(grid, vec![v; grid.count()], 0.0)
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn m_fraction(&self) -> f64 {
        self.m_fraction
    }

    pub fn norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.step()).sqrt()
    }

    /// Measure of `{w = 0}`.
    pub fn zero_measure(&self) -> f64 {
        self.values.iter().filter(|v| **v == 0.0).count() as f64 * self.grid.step()
    }

    /// `∫ w g dx` under rectangle quadrature.
    pub fn objective(&self, g: &[f64]) -> f64 {
        self.values.iter().zip(g).map(|(w, g)| w * g).sum::<f64>() * self.grid.step()
    }

    /// Mean absolute point-wise difference to `other`.
    pub fn mean_abs_change(&self, other: &WeightFunction) -> f64 {
        let n = self.values.len() as f64;
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / n
    }
}

pub fn solve_weight(g: &CriterionProfile, m: SparsityParam) -> Result<WeightFunction> {
    let grid = *g.grid();
    let n = grid.count();
    if g.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("criterion profile has non-finite values".into()));
    }
    let zeroed = m.zero_count(n);
    if zeroed >= n {
        return Err(Error::EmptySupport { m: m.fraction() });
    }
    let clipped: Vec<f64> = g.values().iter().map(|v| v.max(0.0)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps lower indices first among ties.
    order.sort_by(|&i, &j| clipped[i].total_cmp(&clipped[j]));

    let mut values = clipped;
    for &j in &order[..zeroed] {
        values[j] = 0.0;
    }
    let norm = (values.iter().map(|v| v * v).sum::<f64>() * grid.step()).sqrt();
    if norm <= 0.0 {
        return Err(Error::DegenerateCriterion);
    }
    values.iter_mut().for_each(|v| *v /= norm);
    Ok(WeightFunction::from_values(grid, values, m.fraction()))
}

/// Residuals of the three constraints on a weight function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstraintReport {
    /// `1 - ‖w‖₂`; negative means the norm bound is violated.
    pub norm_slack: f64,
    pub min_value: f64,
    pub zero_measure: f64,
    /// `m μ(D)`.
    pub required_zero_measure: f64,
    pub step: f64,
}

impl ConstraintReport {
    pub fn norm_ok(&self) -> bool {
        self.norm_slack >= -1e-9
    }

    pub fn nonnegative_ok(&self) -> bool {
        self.min_value >= 0.0
    }

    pub fn sparsity_ok(&self) -> bool {
        self.zero_measure >= self.required_zero_measure - self.step - 1e-12
    }

    pub fn satisfied(&self) -> bool {
        self.norm_ok() && self.nonnegative_ok() && self.sparsity_ok()
    }
}

pub fn verify_weight(w: &WeightFunction) -> ConstraintReport {
    ConstraintReport {
        norm_slack: 1.0 - w.norm(),
        min_value: w.values.iter().cloned().fold(f64::INFINITY, f64::min),
        zero_measure: w.zero_measure(),
        required_zero_measure: w.m_fraction * w.grid.measure(),
        step: w.grid.step(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Interval;
    use crate::metrics::MetricKind;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn profile(values: Vec<f64>) -> CriterionProfile {
        let grid = UniformGrid::spanning(Interval::new(0.0, 1.0).unwrap(), values.len()).unwrap();
        CriterionProfile::new(grid, values, MetricKind::L2)
    }

    fn m(x: f64) -> SparsityParam {
        SparsityParam::new(x).unwrap()
    }

    #[test]
    fn sparsity_param_range() {
        assert!(SparsityParam::new(-0.1).is_err());
        assert!(SparsityParam::new(1.0).is_err());
        assert!(SparsityParam::new(0.0).is_ok());
    }

    #[test]
    fn constant_profile_zeroes_lowest_indices() {
        let g = profile(vec![2.0; 10]);
        let w = solve_weight(&g, m(0.5)).unwrap();
        let dx = g.grid().step();
        for j in 0..5 {
            assert_eq!(w.values()[j], 0.0);
        }
        for j in 5..10 {
            assert_abs_diff_eq!(w.values()[j], 1.0 / (5.0 * dx).sqrt(), epsilon = 1e-12);
        }
        assert!(verify_weight(&w).satisfied());
    }

    #[test]
    fn inactive_sparsity_is_normalized_clipped_profile() {
        let raw = vec![0.5, -1.0, 2.0, 0.0, 1.5, 3.0];
        let g = profile(raw.clone());
        let w = solve_weight(&g, m(0.0)).unwrap();
        let dx = g.grid().step();
        let norm = (raw.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>() * dx).sqrt();
        for (wj, gj) in w.values().iter().zip(&raw) {
            assert_abs_diff_eq!(*wj, gj.max(0.0) / norm, epsilon = 1e-12);
        }
    }

    #[test]
    fn step_profile_keeps_high_half() {
        let raw: Vec<f64> = (0..20).map(|j| if j < 10 { 1.0 } else { 4.0 }).collect();
        let w = solve_weight(&profile(raw), m(0.5)).unwrap();
        assert!(w.values()[..10].iter().all(|v| *v == 0.0));
        let first = w.values()[10];
        assert!(first > 0.0);
        assert!(w.values()[10..].iter().all(|v| *v == first));
    }

    #[test]
    fn degenerate_profiles_are_errors() {
        assert!(matches!(
            solve_weight(&profile(vec![-1.0, 0.0, -3.0, 0.0]), m(0.0)),
            Err(Error::DegenerateCriterion)
        ));
        assert!(matches!(
            solve_weight(&profile(vec![1.0; 10]), m(0.95)),
            Err(Error::EmptySupport { .. })
        ));
    }

    #[test]
    fn verify_flags_hand_built_violations() {
        let grid = UniformGrid::spanning(Interval::new(0.0, 1.0).unwrap(), 4).unwrap();
        let neg = WeightFunction::from_values(grid, vec![0.1, -0.1, 0.2, 0.3], 0.0);
        assert!(!verify_weight(&neg).nonnegative_ok());
        let c = 1.5 / grid.measure().sqrt();
        let big = WeightFunction::from_values(grid, vec![c; 4], 0.0);
        assert_abs_diff_eq!(big.norm(), 1.5, epsilon = 1e-12);
        assert!(!verify_weight(&big).norm_ok());
        let dense = WeightFunction::from_values(grid, vec![0.1; 4], 0.75);
        assert!(!verify_weight(&dense).sparsity_ok());
    }

    proptest! {
        #[test]
        fn solution_satisfies_constraints_and_support_order(
            raw in prop::collection::vec(-1.0f64..5.0, 4..60),
            frac in 0.0f64..0.9,
        ) {
            let g = profile(raw.clone());
            if let Ok(w) = solve_weight(&g, m(frac)) {
                let rep = verify_weight(&w);
                prop_assert!(rep.satisfied(), "{rep:?}");
                prop_assert!((w.norm() - 1.0).abs() <= 1e-9);
                let kept_min = raw.iter().zip(w.values()).filter(|(_, w)| **w > 0.0)
                    .map(|(g, _)| g.max(0.0)).fold(f64::INFINITY, f64::min);
                let zero_max = raw.iter().zip(w.values()).filter(|(_, w)| **w == 0.0)
                    .map(|(g, _)| g.max(0.0)).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(kept_min >= zero_max);
            }
        }

        #[test]
        fn larger_sparsity_never_helps(
            raw in prop::collection::vec(0.01f64..5.0, 4..40),
            m1 in 0.0f64..0.7,
            dm in 0.0f64..0.2,
        ) {
            let g = profile(raw.clone());
            let lo = solve_weight(&g, m(m1)).unwrap();
            if let Ok(hi) = solve_weight(&g, m(m1 + dm)) {
                prop_assert!(hi.objective(&raw) <= lo.objective(&raw) + 1e-12);
            }
        }

        #[test]
        fn scale_equivariant(
            raw in prop::collection::vec(-1.0f64..5.0, 4..40),
            c in 0.001f64..1000.0,
            frac in 0.0f64..0.8,
        ) {
            let a = solve_weight(&profile(raw.clone()), m(frac));
            let b = solve_weight(&profile(raw.iter().map(|v| c * v).collect()), m(frac));
            if let (Ok(a), Ok(b)) = (a, b) {
                for (x, y) in a.values().iter().zip(b.values()) {
                    prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
                }
            }
        }
    }
}
