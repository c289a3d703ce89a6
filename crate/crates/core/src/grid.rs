//! Compact intervals, uniform grids and rectangle-rule quadrature.
//!
//! Every curve in this crate is stored as samples on a [`UniformGrid`];
//! missing samples are encoded as NaN (see [`MISSING`]). The measure of a
//! set of grid points is `count * step`, so integrals and measures reduce to
//! point counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Marker for an unobserved sample.
pub const MISSING: f64 = f64::NAN;

#[inline]
pub fn is_missing(v: f64) -> bool {
    v.is_nan()
}

/// Relative slack used when deciding whether an abscissa sits on a grid
/// point or inside a domain.
pub(crate) const SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Membership with a slack proportional to `scale`.
    pub(crate) fn contains_approx(&self, x: f64, scale: f64) -> bool {
        let tol = SNAP * scale;
        x >= self.lo - tol && x <= self.hi + tol
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        Interval::new(lo, hi).ok()
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    start: f64,
    step: f64,
    count: usize,
}

impl UniformGrid {
    pub fn new(start: f64, step: f64, count: usize) -> Result<Self> {
        if !start.is_finite() || !step.is_finite() || step <= 0.0 {
            return Err(Error::InvalidGrid(format!(
                "start {start} and step {step} must be finite with step > 0"
            )));
        }
        if count < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {count}")));
        }
        Ok(Self { start, step, count })
    }

    /// `count` equispaced points from `interval.lo()` to `interval.hi()`.
    pub fn spanning(interval: Interval, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {count}")));
        }
        Self::new(interval.lo(), interval.length() / (count - 1) as f64, count)
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn end(&self) -> f64 {
        self.point(self.count - 1)
    }

    #[inline]
    pub fn point(&self, j: usize) -> f64 {
        self.start + j as f64 * self.step
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(move |j| self.point(j))
    }

    pub fn interval(&self) -> Interval {
        Interval {
            lo: self.start,
            hi: self.end(),
        }
    }

    /// Total measure `count * step` of the grid under rectangle quadrature.
    pub fn measure(&self) -> f64 {
        self.count as f64 * self.step
    }

    /// Same grid up to floating-point noise.
    pub fn matches(&self, other: &UniformGrid) -> bool {
        self.count == other.count
            && (self.start - other.start).abs() <= SNAP * self.step.max(1.0)
            && (self.step - other.step).abs() <= SNAP * self.step
    }

    /// Fractional index of `x`, snapped to an integer when within rounding
    /// noise of a grid point.
    #[inline]
    pub(crate) fn position(&self, x: f64) -> f64 {
        let t = (x - self.start) / self.step;
        let r = t.round();
        if (t - r).abs() <= SNAP * t.abs().max(1.0) {
            r
        } else {
            t
        }
    }

    /// Smallest and largest grid indices inside `interval`, if any.
    pub fn index_range(&self, interval: &Interval) -> Option<(usize, usize)> {
        let lo = self.position(interval.lo()).ceil().max(0.0);
        let hi = self.position(interval.hi()).floor().min((self.count - 1) as f64);
        if lo > hi {
            None
        } else {
            Some((lo as usize, hi as usize))
        }
    }
}

/// Rectangle-rule integral `sum v(x_j) * step` over non-missing samples.
pub fn integrate(values: &[f64], grid: &UniformGrid) -> f64 {
    values.iter().filter(|v| !is_missing(**v)).sum::<f64>() * grid.step()
}

/// Measure of the non-missing points.
pub fn measure(values: &[f64], grid: &UniformGrid) -> f64 {
    values.iter().filter(|v| !is_missing(**v)).count() as f64 * grid.step()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn interval_rejects_bad_endpoints() {
        assert!(Interval::new(1.0, 1.0).is_err());
        assert!(Interval::new(2.0, 1.0).is_err());
        assert!(Interval::new(f64::NEG_INFINITY, 1.0).is_err());
        assert!(Interval::new(0.0, 1.0).is_ok());
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(UniformGrid::new(0.0, 0.0, 10).is_err());
        assert!(UniformGrid::new(0.0, -0.1, 10).is_err());
        assert!(UniformGrid::new(0.0, 0.1, 1).is_err());
    }

    #[test]
    fn spanning_grid_covers_interval() {
        let g = UniformGrid::spanning(Interval::new(0.0, 1.0).unwrap(), 11).unwrap();
        assert_eq!(g.count(), 11);
        assert_abs_diff_eq!(g.step(), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(g.end(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn constant_integrates_to_count_times_step() {
        let g = UniformGrid::spanning(Interval::new(0.0, 1.0).unwrap(), 11).unwrap();
        let v = vec![1.0; 11];
        assert_abs_diff_eq!(integrate(&v, &g), 1.1, epsilon = 1e-12);
    }

    #[test]
    fn all_missing_integrates_to_zero() {
        let g = UniformGrid::spanning(Interval::new(0.0, 1.0).unwrap(), 11).unwrap();
        assert_eq!(integrate(&[MISSING; 11], &g), 0.0);
    }

    #[test]
    fn identity_integral_has_rectangle_bias() {
        let g = UniformGrid::spanning(Interval::new(0.0, 1.0).unwrap(), 1001).unwrap();
        let v: Vec<f64> = g.points().collect();
        let got = integrate(&v, &g);
        // sum_{j=0}^{1000} j/1000 * 1/1000 = 0.5005
        assert_abs_diff_eq!(got, 0.5005, epsilon = 1e-12);
        assert!((got - 0.5).abs() <= g.step());
    }

    #[test]
    fn indicator_measure_is_point_count() {
        let g = UniformGrid::spanning(Interval::new(-1.0, 1.0).unwrap(), 37).unwrap();
        let v: Vec<f64> = g
            .points()
            .map(|x| if x > 0.3 { 1.0 } else { MISSING })
            .collect();
        let n = v.iter().filter(|x| !is_missing(**x)).count();
        assert_eq!(integrate(&v, &g), n as f64 * g.step());
        assert_eq!(measure(&v, &g), n as f64 * g.step());
    }

    #[test]
    fn index_range_respects_snapping() {
        let g = UniformGrid::spanning(Interval::new(0.0, 1.0).unwrap(), 11).unwrap();
        let r = g.index_range(&Interval::new(0.3, 0.7).unwrap()).unwrap();
        assert_eq!(r, (3, 7));
        let r = g.index_range(&Interval::new(0.31, 0.69).unwrap()).unwrap();
        assert_eq!(r, (4, 6));
        assert!(g.index_range(&Interval::new(2.0, 3.0).unwrap()).is_none());
    }
}
