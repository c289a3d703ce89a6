//! Strictly increasing affine warps `h(x) = a x + b`, `a > 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Interval;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineWarp {
    a: f64,
    b: f64,
}

impl Default for AffineWarp {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl AffineWarp {
    pub const IDENTITY: AffineWarp = AffineWarp { a: 1.0, b: 0.0 };

    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a > 0.0) {
            return Err(Error::InvalidWarp { a, b });
        }
        Ok(Self { a, b })
    }

    /// Dilation.
    pub fn a(&self) -> f64 {
        self.a
    }

    /// Shift.
    pub fn b(&self) -> f64 {
        self.b
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        self.a * x + self.b
    }

    /// `self ∘ inner`, i.e. `x ↦ self(inner(x))`.
    pub fn compose(&self, inner: &AffineWarp) -> AffineWarp {
        AffineWarp {
            a: self.a * inner.a,
            b: self.a * inner.b + self.b,
        }
    }

    pub fn invert(&self) -> AffineWarp {
        AffineWarp {
            a: 1.0 / self.a,
            b: -self.b / self.a,
        }
    }

    /// `h⁻¹(interval)`: the set of abscissae mapped into `interval`.
    pub fn preimage(&self, interval: &Interval) -> Interval {
        let inv = self.invert();
        Interval::new(inv.apply(interval.lo()), inv.apply(interval.hi()))
            .expect("increasing map preserves a non-degenerate interval")
    }

    pub fn is_identity(&self) -> bool {
        self.a == 1.0 && self.b == 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn w(a: f64, b: f64) -> AffineWarp {
        AffineWarp::new(a, b).unwrap()
    }

    #[test]
    fn apply_examples() {
        assert_eq!(AffineWarp::IDENTITY.apply(0.3), 0.3);
        assert_eq!(w(2.0, 1.0).apply(0.5), 2.0);
        assert_abs_diff_eq!(w(0.9, -0.1).apply(1.0), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn compose_examples() {
        let h = w(1.3, -0.2);
        assert_eq!(AffineWarp::IDENTITY.compose(&h), h);
        let id = h.compose(&h.invert());
        assert_abs_diff_eq!(id.a(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(id.b(), 0.0, epsilon = 1e-12);
        assert_eq!(w(2.0, 1.0).compose(&w(3.0, 0.0)), w(6.0, 1.0));
    }

    #[test]
    fn invert_examples() {
        assert_eq!(AffineWarp::IDENTITY.invert(), AffineWarp::IDENTITY);
        assert_eq!(w(2.0, 4.0).invert(), w(0.5, -2.0));
        let h = w(0.7, 0.25);
        let back = h.invert().invert();
        assert_abs_diff_eq!(back.a(), h.a(), epsilon = 1e-15);
        assert_abs_diff_eq!(back.b(), h.b(), epsilon = 1e-15);
    }

    #[test]
    fn rejects_non_increasing() {
        assert!(AffineWarp::new(0.0, 1.0).is_err());
        assert!(AffineWarp::new(-1.0, 1.0).is_err());
        assert!(AffineWarp::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn preimage_maps_back_onto_interval() {
        let h = w(2.0, 1.0);
        let pre = h.preimage(&Interval::new(1.0, 3.0).unwrap());
        assert_abs_diff_eq!(pre.lo(), 0.0);
        assert_abs_diff_eq!(pre.hi(), 1.0);
    }

    fn arb_warp() -> impl Strategy<Value = AffineWarp> {
        (0.1f64..10.0, -5.0f64..5.0).prop_map(|(a, b)| w(a, b))
    }

    proptest! {
        #[test]
        fn composition_is_associative(f in arb_warp(), g in arb_warp(), h in arb_warp()) {
            let l = f.compose(&g).compose(&h);
            let r = f.compose(&g.compose(&h));
            prop_assert!((l.a() - r.a()).abs() <= 1e-12 * l.a().abs().max(1.0));
            prop_assert!((l.b() - r.b()).abs() <= 1e-12 * l.b().abs().max(1.0) * 10.0);
        }

        #[test]
        fn inverse_cancels(h in arb_warp(), x in -10.0f64..10.0) {
            let id = h.invert().compose(&h);
            prop_assert!((id.a() - 1.0).abs() <= 1e-12);
            prop_assert!(id.b().abs() <= 1e-12);
            let y = h.invert().apply(h.apply(x));
            prop_assert!((y - x).abs() <= 1e-12 * x.abs().max(1.0) * 10.0);
        }
    }
}
