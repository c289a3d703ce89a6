//! Normalized L² distances, their weighted variant and the H¹ similarity
//! index between sampled curves.
//!
//! All functions take curves already sampled on one common grid. The
//! integration domain of a pair is the point-wise overlap of their observed
//! samples; the distances are normalized by the (unweighted) measure of that
//! overlap. Multidimensional curves sum squared differences over dimensions
//! under one square root, while the similarity index is averaged over
//! dimensions.

use serde::{Deserialize, Serialize};

use crate::curve::SampledCurve;
use crate::error::{Error, Result};
use crate::grid::{is_missing, MISSING};
use crate::weight::WeightFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    /// Normalized L² distance; clustering maximizes between-cluster sum of squares.
    #[default]
    L2,
    /// H¹ semi-norm similarity; clustering maximizes within-cluster similarity.
    H1,
}

impl MetricKind {
    /// Whether larger template scores are better.
    pub fn maximizes(&self) -> bool {
        matches!(self, MetricKind::H1)
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MetricKind::L2 => "l2",
            MetricKind::H1 => "h1",
        })
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(MetricKind::L2),
            "h1" => Ok(MetricKind::H1),
            other => Err(Error::InvalidConfig(format!("unknown metric `{other}`"))),
        }
    }
}

/// Finite-difference estimate of `f′`, missing wherever `f` is.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeCurve(SampledCurve);

impl DerivativeCurve {
    pub fn curve(&self) -> &SampledCurve {
        &self.0
    }

    pub fn values(&self, dim: usize) -> &[f64] {
        self.0.values(dim)
    }

    pub fn into_curve(self) -> SampledCurve {
        self.0
    }
}

fn check_pair(f1: &SampledCurve, f2: &SampledCurve) -> Result<()> {
    if !f1.grid().matches(f2.grid()) {
        return Err(Error::GridMismatch);
    }
    if f1.dims() != f2.dims() {
        return Err(Error::DimensionMismatch {
            left: f1.dims(),
            right: f2.dims(),
        });
    }
    Ok(())
}

/// `(sum over overlap of w * Σ_d (a_d - b_d)², overlap point count)`.
#[inline]
pub(crate) fn masked_sq_diff(a: &[Vec<f64>], b: &[Vec<f64>], w: Option<&[f64]>) -> (f64, usize) {
    let n = a[0].len();
    let mut sum = 0.0;
    let mut count = 0;
    'points: for j in 0..n {
        let mut sq = 0.0;
        for (ad, bd) in a.iter().zip(b) {
            let (x, y) = (ad[j], bd[j]);
            if is_missing(x) || is_missing(y) {
                continue 'points;
            }
            sq += (x - y) * (x - y);
        }
        count += 1;
        sum += match w {
            Some(w) => w[j] * sq,
            None => sq,
        };
    }
    (sum, count)
}

/// Normalized (optionally weighted) distance from raw sample rows; `None`
/// on an overlap of fewer than two points. The grid step cancels between
/// the integral and the normalizing measure.
#[inline]
pub(crate) fn distance_rows(a: &[Vec<f64>], b: &[Vec<f64>], w: Option<&[f64]>) -> Option<f64> {
    let (sum, count) = masked_sq_diff(a, b, w);
    (count >= 2).then(|| (sum / count as f64).sqrt())
}

/// Average over dimensions of `∫ w a′ b′ / (|a′| |b′|)` over the overlap,
/// from derivative rows. `None` on a short overlap or zero semi-norm.
pub(crate) fn similarity_rows(a: &[Vec<f64>], b: &[Vec<f64>], w: Option<&[f64]>) -> Option<f64> {
    let n = a[0].len();
    let dims = a.len();
    let mut inner = vec![0.0; dims];
    let mut na = vec![0.0; dims];
    let mut nb = vec![0.0; dims];
    let mut count = 0;
    for j in 0..n {
        if a.iter().chain(b).any(|r| is_missing(r[j])) {
            continue;
        }
        count += 1;
        let wj = w.map_or(1.0, |w| w[j]);
        for d in 0..dims {
            let (x, y) = (a[d][j], b[d][j]);
            inner[d] += wj * x * y;
            na[d] += x * x;
            nb[d] += y * y;
        }
    }
    if count < 2 {
        return None;
    }
    let mut total = 0.0;
    for d in 0..dims {
        if na[d] <= 0.0 || nb[d] <= 0.0 {
            return None;
        }
        total += inner[d] / (na[d].sqrt() * nb[d].sqrt());
    }
    Some(total / dims as f64)
}

/// Normalized L² distance over the overlap of the two domains.
pub fn dist_l2(f1: &SampledCurve, f2: &SampledCurve) -> Result<f64> {
    check_pair(f1, f2)?;
    distance_rows(f1.all_values(), f2.all_values(), None).ok_or_else(|| Error::EmptyIntersection {
        left: f1.id().to_string(),
        right: f2.id().to_string(),
    })
}

/// Weighted normalized L² distance. The normalizing measure is unweighted.
pub fn dist_l2_weighted(f1: &SampledCurve, f2: &SampledCurve, w: &WeightFunction) -> Result<f64> {
    check_pair(f1, f2)?;
    if !w.grid().matches(f1.grid()) {
        return Err(Error::GridMismatch);
    }
    distance_rows(f1.all_values(), f2.all_values(), Some(w.values())).ok_or_else(|| {
        Error::EmptyIntersection {
            left: f1.id().to_string(),
            right: f2.id().to_string(),
        }
    })
}

/// Central differences at interior points, one-sided at the ends of each
/// observed run.
pub(crate) fn derivative_row(values: &[f64], step: f64) -> Vec<f64> {
    let n = values.len();
    let ok = |j: usize| !is_missing(values[j]);
    (0..n)
        .map(|j| {
            if !ok(j) {
                return MISSING;
            }
            let prev = j > 0 && ok(j - 1);
            let next = j + 1 < n && ok(j + 1);
            match (prev, next) {
                (true, true) => (values[j + 1] - values[j - 1]) / (2.0 * step),
                (false, true) => (values[j + 1] - values[j]) / step,
                (true, false) => (values[j] - values[j - 1]) / step,
                (false, false) => MISSING,
            }
        })
        .collect()
}

pub fn estimate_derivative(f: &SampledCurve) -> Result<DerivativeCurve> {
    let mut rows = Vec::with_capacity(f.dims());
    for d in 0..f.dims() {
        let found = f.values(d).iter().filter(|v| !is_missing(**v)).count();
        if found < 3 {
            return Err(Error::TooFewPoints {
                id: f.id().to_string(),
                dim: d,
                found,
                needed: 3,
            });
        }
        rows.push(derivative_row(f.values(d), f.grid().step()));
    }
    SampledCurve::new(f.id(), f.domain(), *f.grid(), rows).map(DerivativeCurve)
}

/// H¹ similarity index `⟨f1′, f2′⟩ / (|f1|_{H¹} |f2|_{H¹})` over the overlap,
/// averaged over dimensions.
pub fn similarity_h1(f1: &SampledCurve, f2: &SampledCurve) -> Result<f64> {
    check_pair(f1, f2)?;
    let d1 = estimate_derivative(f1)?;
    let d2 = estimate_derivative(f2)?;
    similarity_from_derivatives(&d1, &d2)
}

/// [`similarity_h1`] from precomputed derivatives.
pub fn similarity_from_derivatives(d1: &DerivativeCurve, d2: &DerivativeCurve) -> Result<f64> {
    let (a, b) = (d1.curve(), d2.curve());
    check_pair(a, b)?;
    let overlap = (0..a.grid().count())
        .filter(|&j| a.observed(j) && b.observed(j))
        .count();
    if overlap < 2 {
        return Err(Error::EmptyIntersection {
            left: a.id().to_string(),
            right: b.id().to_string(),
        });
    }
    // Identify which side is degenerate for the error message.
    for (curve, other) in [(a, b), (b, a)] {
        for d in 0..curve.dims() {
            let norm: f64 = (0..curve.grid().count())
                .filter(|&j| curve.observed(j) && other.observed(j))
                .map(|j| curve.values(d)[j].powi(2))
                .sum();
            if norm <= 0.0 {
                return Err(Error::DegenerateSimilarity {
                    id: curve.id().to_string(),
                });
            }
        }
    }
    Ok(similarity_rows(a.all_values(), b.all_values(), None).expect("overlap and norms checked"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Interval, UniformGrid};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn on_grid(id: &str, grid: UniformGrid, f: impl Fn(f64) -> f64) -> SampledCurve {
        SampledCurve::from_fn(id, grid.interval(), grid, 1, |_, x| f(x)).unwrap()
    }

    fn unit(n: usize) -> UniformGrid {
        UniformGrid::spanning(Interval::new(0.0, 1.0).unwrap(), n).unwrap()
    }

    #[test]
    fn distance_to_self_is_zero() {
        let f = on_grid("f", unit(50), |x| x.sin());
        assert_eq!(dist_l2(&f, &f).unwrap(), 0.0);
    }

    #[test]
    fn unit_gap_has_unit_distance() {
        for n in [5, 17, 200] {
            let zero = on_grid("0", unit(n), |_| 0.0);
            let one = on_grid("1", unit(n), |_| 1.0);
            assert_abs_diff_eq!(dist_l2(&zero, &one).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn identity_vs_zero_distance() {
        let g = unit(1001);
        let f = on_grid("x", g, |x| x);
        let z = on_grid("0", g, |_| 0.0);
        let d = dist_l2(&f, &z).unwrap();
        assert!((d - (1.0f64 / 3.0).sqrt()).abs() <= 2.0 * g.step(), "d = {d}");
    }

    #[test]
    fn empty_overlap_is_an_error() {
        let g = unit(11);
        let left = SampledCurve::from_fn("l", Interval::new(0.0, 0.3).unwrap(), g, 1, |_, x| x).unwrap();
        let right = SampledCurve::from_fn("r", Interval::new(0.6, 1.0).unwrap(), g, 1, |_, x| x).unwrap();
        assert!(matches!(dist_l2(&left, &right), Err(Error::EmptyIntersection { .. })));
    }

    #[test]
    fn distance_uses_only_the_overlap() {
        let g = unit(11);
        let left = SampledCurve::from_fn("l", Interval::new(0.0, 0.6).unwrap(), g, 1, |_, _| 1.0).unwrap();
        let right = SampledCurve::from_fn("r", Interval::new(0.3, 1.0).unwrap(), g, 1, |_, _| 3.0).unwrap();
        assert_abs_diff_eq!(dist_l2(&left, &right).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn weighted_reductions() {
        let g = unit(101);
        let f1 = on_grid("a", g, |x| x * x);
        let f2 = on_grid("b", g, |x| 1.0 - x);
        let ones = WeightFunction::from_values(g, vec![1.0; 101], 0.0);
        assert_abs_diff_eq!(
            dist_l2_weighted(&f1, &f2, &ones).unwrap(),
            dist_l2(&f1, &f2).unwrap(),
            epsilon = 1e-15
        );
        let zeros = WeightFunction::from_values(g, vec![0.0; 101], 0.0);
        assert_eq!(dist_l2_weighted(&f1, &f2, &zeros).unwrap(), 0.0);
    }

    #[test]
    fn multidimensional_distance_is_euclidean() {
        let g = unit(21);
        let f = SampledCurve::from_fn("f", g.interval(), g, 2, |_, _| 0.0).unwrap();
        let h = SampledCurve::from_fn("h", g.interval(), g, 2, |d, _| if d == 0 { 3.0 } else { 4.0 }).unwrap();
        assert_abs_diff_eq!(dist_l2(&f, &h).unwrap(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn derivative_of_affine_is_exact() {
        let f = on_grid("x", unit(37), |x| 3.0 * x - 1.0);
        let d = estimate_derivative(&f).unwrap();
        for v in d.values(0) {
            assert_abs_diff_eq!(*v, 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_of_square_is_exact_inside() {
        let g = unit(41);
        let f = on_grid("x2", g, |x| x * x);
        let d = estimate_derivative(&f).unwrap();
        for j in 1..40 {
            assert_abs_diff_eq!(d.values(0)[j], 2.0 * g.point(j), epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_of_sine_is_second_order() {
        let g = UniformGrid::spanning(Interval::new(0.0, 2.0 * PI).unwrap(), 1001).unwrap();
        let f = on_grid("sin", g, f64::sin);
        let d = estimate_derivative(&f).unwrap();
        let worst = (1..1000)
            .map(|j| (d.values(0)[j] - g.point(j).cos()).abs())
            .fold(0.0, f64::max);
        assert!(worst <= g.step() * g.step(), "worst {worst}");
    }

    #[test]
    fn derivative_propagates_missing_and_needs_three_points() {
        let g = unit(11);
        let f = SampledCurve::from_fn("f", Interval::new(0.0, 0.5).unwrap(), g, 1, |_, x| x).unwrap();
        let d = estimate_derivative(&f).unwrap();
        assert!(is_missing(d.values(0)[8]));
        assert_abs_diff_eq!(d.values(0)[5], 1.0, epsilon = 1e-12);

        let short = SampledCurve::from_fn("s", Interval::new(0.0, 0.1).unwrap(), g, 1, |_, x| x).unwrap();
        assert!(matches!(estimate_derivative(&short), Err(Error::TooFewPoints { needed: 3, .. })));
    }

    #[test]
    fn similarity_examples() {
        let g = UniformGrid::spanning(Interval::new(0.0, 2.0 * PI).unwrap(), 1001).unwrap();
        let s = on_grid("sin", g, f64::sin);
        let c = on_grid("cos", g, f64::cos);
        assert_abs_diff_eq!(similarity_h1(&s, &s).unwrap(), 1.0, epsilon = 1e-12);
        let scaled = on_grid("2sin+5", g, |x| 2.0 * x.sin() + 5.0);
        assert_abs_diff_eq!(similarity_h1(&s, &scaled).unwrap(), 1.0, epsilon = 1e-12);
        assert!(similarity_h1(&s, &c).unwrap().abs() <= 2.0 * g.step());
    }

    #[test]
    fn constant_curve_has_degenerate_similarity() {
        let g = unit(21);
        let f = on_grid("f", g, |x| x);
        let k = on_grid("k", g, |_| 2.0);
        match similarity_h1(&f, &k) {
            Err(Error::DegenerateSimilarity { id }) => assert_eq!(id, "k"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn identical_dimensions_match_scalar_index() {
        let g = unit(101);
        let f1 = on_grid("a", g, |x| (4.0 * x).sin());
        let f2 = on_grid("b", g, |x| x * x - x);
        let scalar = similarity_h1(&f1, &f2).unwrap();
        let m1 = SampledCurve::from_fn("a", g.interval(), g, 3, |_, x| (4.0 * x).sin()).unwrap();
        let m2 = SampledCurve::from_fn("b", g.interval(), g, 3, |_, x| x * x - x).unwrap();
        assert_abs_diff_eq!(similarity_h1(&m1, &m2).unwrap(), scalar, epsilon = 1e-12);
    }

    #[test]
    fn similarity_averages_dimensions() {
        let g = unit(101);
        let m1 = SampledCurve::from_fn("a", g.interval(), g, 2, |d, x| if d == 0 { x } else { x * x }).unwrap();
        let m2 = SampledCurve::from_fn("b", g.interval(), g, 2, |d, x| if d == 0 { 2.0 * x } else { -x * x }).unwrap();
        assert_abs_diff_eq!(similarity_h1(&m1, &m2).unwrap(), 0.0, epsilon = 1e-12);
    }

    fn poly(coef: [f64; 4]) -> impl Fn(f64) -> f64 {
        move |x| coef[0] + coef[1] * x + coef[2] * x * x + coef[3] * x * x * x
    }

    proptest! {
        #[test]
        fn distance_is_a_symmetric_nonnegative_form(
            c1 in prop::array::uniform4(-2.0f64..2.0),
            c2 in prop::array::uniform4(-2.0f64..2.0),
        ) {
            let g = unit(64);
            let f1 = on_grid("a", g, poly(c1));
            let f2 = on_grid("b", g, poly(c2));
            let d12 = dist_l2(&f1, &f2).unwrap();
            let d21 = dist_l2(&f2, &f1).unwrap();
            prop_assert!(d12 >= 0.0);
            prop_assert!((d12 - d21).abs() <= 1e-12);
        }

        #[test]
        fn weighted_distance_bounded_by_max_weight(
            c1 in prop::array::uniform4(-2.0f64..2.0),
            c2 in prop::array::uniform4(-2.0f64..2.0),
            ws in prop::collection::vec(0.0f64..3.0, 40),
        ) {
            let g = unit(40);
            let f1 = on_grid("a", g, poly(c1));
            let f2 = on_grid("b", g, poly(c2));
            let wmax = ws.iter().cloned().fold(0.0, f64::max);
            let w = WeightFunction::from_values(g, ws, 0.0);
            let dw = dist_l2_weighted(&f1, &f2, &w).unwrap();
            prop_assert!(dw <= dist_l2(&f1, &f2).unwrap() * wmax.sqrt() + 1e-12);
        }

        #[test]
        fn similarity_is_bounded_and_ordinate_invariant(
            c1 in prop::array::uniform4(-2.0f64..2.0),
            c2 in prop::array::uniform4(-2.0f64..2.0),
            alpha in 0.1f64..10.0,
            beta in -5.0f64..5.0,
        ) {
            let g = unit(80);
            let f1 = on_grid("a", g, poly(c1));
            let f2 = on_grid("b", g, poly(c2));
            if let Ok(s) = similarity_h1(&f1, &f2) {
                prop_assert!(s.abs() <= 1.0 + 1e-9);
                let p = poly(c1);
                let f1t = on_grid("a'", g, move |x| alpha * p(x) + beta);
                let st = similarity_h1(&f1t, &f2).unwrap();
                prop_assert!((s - st).abs() <= 1e-9);
            }
        }
    }
}
