//! Sampled functional data and their affine warping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{is_missing, Interval, UniformGrid, MISSING};
use crate::warp::AffineWarp;

/// One functional datum: samples of `f_i : D_i -> R^p` on a uniform grid.
///
/// Samples outside `domain` are [`MISSING`]. All dimensions share the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledCurve {
    id: String,
    domain: Interval,
    grid: UniformGrid,
    values: Vec<Vec<f64>>,
}

impl SampledCurve {
    pub fn new(
        id: impl Into<String>,
        domain: Interval,
        grid: UniformGrid,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let id = id.into();
        let invalid = |reason: String| Error::InvalidCurve {
            id: id.clone(),
            reason,
        };
        if values.is_empty() {
            return Err(invalid("no codomain dimension".into()));
        }
        for (d, dim) in values.iter().enumerate() {
            if dim.len() != grid.count() {
                return Err(invalid(format!(
                    "dimension {d} has {} samples for a {}-point grid",
                    dim.len(),
                    grid.count()
                )));
            }
            let mut valid = 0;
            for (j, v) in dim.iter().enumerate() {
                if is_missing(*v) {
                    continue;
                }
                if !v.is_finite() {
                    return Err(invalid(format!("non-finite sample at index {j}")));
                }
                if !domain.contains_approx(grid.point(j), grid.step()) {
                    return Err(invalid(format!(
                        "sample at x = {} lies outside the domain [{}, {}]",
                        grid.point(j),
                        domain.lo(),
                        domain.hi()
                    )));
                }
                valid += 1;
            }
            if valid < 2 {
                return Err(Error::TooFewPoints {
                    id: id.clone(),
                    dim: d,
                    found: valid,
                    needed: 2,
                });
            }
        }
        Ok(Self {
            id,
            domain,
            grid,
            values,
        })
    }

    /// Samples `f(dim, x)` at the points of `grid` lying in `domain`.
    pub fn from_fn(
        id: impl Into<String>,
        domain: Interval,
        grid: UniformGrid,
        dims: usize,
        f: impl Fn(usize, f64) -> f64,
    ) -> Result<Self> {
        let values = (0..dims)
            .map(|d| {
                grid.points()
                    .map(|x| {
                        if domain.contains_approx(x, grid.step()) {
                            f(d, x)
                        } else {
                            MISSING
                        }
                    })
                    .collect()
            })
            .collect();
        Self::new(id, domain, grid, values)
    }

    /// Scalar curve on its own `count`-point grid spanning `domain`.
    pub fn from_scalar_fn(
        id: impl Into<String>,
        domain: Interval,
        count: usize,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let grid = UniformGrid::spanning(domain, count)?;
        Self::from_fn(id, domain, grid, 1, |_, x| f(x))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self, dim: usize) -> &[f64] {
        &self.values[dim]
    }

    pub fn all_values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Grid point is observed in every dimension.
    pub fn observed(&self, j: usize) -> bool {
        self.values.iter().all(|d| !is_missing(d[j]))
    }

    pub fn valid_count(&self) -> usize {
        (0..self.grid.count()).filter(|&j| self.observed(j)).count()
    }

    /// Linear interpolation of dimension `dim` at `x`; `None` outside the
    /// observed part of the domain.
    #[inline]
    pub fn eval(&self, dim: usize, x: f64) -> Option<f64> {
        if !self.domain.contains_approx(x, self.grid.step()) {
            return None;
        }
        interpolate(&self.values[dim], &self.grid, x)
    }

    /// `x ↦ f(h(x))` sampled on `target`; see [`curve_warp`].
    pub fn warp(&self, h: &AffineWarp, target: &UniformGrid) -> Result<SampledCurve> {
        curve_warp(self, h, target)
    }

    /// Fills `out[d][j]` with `f_d(h(x_j))` (or [`MISSING`]) and returns the
    /// number of grid points observed in every dimension.
    pub(crate) fn warp_into(
        &self,
        h: &AffineWarp,
        target: &UniformGrid,
        out: &mut [Vec<f64>],
    ) -> usize {
        let mut valid = 0;
        for j in 0..target.count() {
            let y = h.apply(target.point(j));
            let inside = self.domain.contains_approx(y, self.grid.step());
            let mut all = inside;
            for (d, row) in out.iter_mut().enumerate() {
                let v = if inside {
                    interpolate(&self.values[d], &self.grid, y).unwrap_or(MISSING)
                } else {
                    MISSING
                };
                all &= !is_missing(v);
                row[j] = v;
            }
            if all {
                valid += 1;
            } else {
                for row in out.iter_mut() {
                    row[j] = MISSING;
                }
            }
        }
        valid
    }
}

#[inline]
pub(crate) fn interpolate(values: &[f64], grid: &UniformGrid, x: f64) -> Option<f64> {
    let t = grid.position(x);
    let last = (grid.count() - 1) as f64;
    if t < 0.0 || t > last {
        return None;
    }
    let i = t.floor() as usize;
    let frac = t - i as f64;
    let v0 = values[i];
    if frac == 0.0 {
        return (!is_missing(v0)).then_some(v0);
    }
    let v1 = values[i + 1];
    if is_missing(v0) || is_missing(v1) {
        return None;
    }
    Some(v0 + frac * (v1 - v0))
}

/// The curve `x ↦ f(h(x))` on `target`, with domain `h⁻¹(D) ∩ target`.
///
/// Values are linear interpolations of `f`'s samples; abscissae mapped
/// outside `f`'s domain are missing. A result with fewer than two valid
/// points is a [`Error::DegenerateWarp`].
pub fn curve_warp(f: &SampledCurve, h: &AffineWarp, target: &UniformGrid) -> Result<SampledCurve> {
    let degenerate = || Error::DegenerateWarp { id: f.id.clone() };
    let domain = h
        .preimage(&f.domain)
        .intersect(&target.interval())
        .ok_or_else(degenerate)?;
    let mut out = vec![vec![MISSING; target.count()]; f.dims()];
    let valid = f.warp_into(h, target, &mut out);
    if valid < 2 {
        return Err(degenerate());
    }
    SampledCurve::new(f.id.clone(), domain, *target, out).map_err(|_| degenerate())
}

/// Uniform grid with `resolution` points spanning the union of the domains.
pub fn common_grid(curves: &[SampledCurve], resolution: usize) -> Result<UniformGrid> {
    let first = curves.first().ok_or(Error::EmptyInput("no curves"))?;
    let hull = curves
        .iter()
        .skip(1)
        .fold(first.domain(), |acc, c| acc.hull(&c.domain()));
    UniformGrid::spanning(hull, resolution)
}
