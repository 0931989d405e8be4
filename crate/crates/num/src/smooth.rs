//! Smooth surrogates for the non-smooth primitives (positive part, min/max,
//! switching) that appear in the predictive model. All are C^1-or-better so
//! dual-number derivatives stay exact.

use crate::Scalar;

/// Smooth positive part: `0.5 (x + sqrt(x^2 + w^2))`.
///
/// Approaches `max(0, x)` as `w -> 0`; value at `x = 0` is `w/2`.
#[inline]
pub fn smooth_positive<S: Scalar>(x: S, width: f64) -> S {
    (x + (x * x + width * width).sqrt()) * 0.5
}

/// Smooth minimum of two quantities with blend width `w`.
#[inline]
pub fn smooth_min<S: Scalar>(a: S, b: S, width: f64) -> S {
    let d = a - b;
    (a + b - (d * d + width * width).sqrt()) * 0.5
}

/// Smooth maximum of two quantities with blend width `w`.
#[inline]
pub fn smooth_max<S: Scalar>(a: S, b: S, width: f64) -> S {
    let d = a - b;
    (a + b + (d * d + width * width).sqrt()) * 0.5
}

/// Logistic switch `1 / (1 + exp(-(x - center)/scale))`, evaluated on the
/// overflow-safe branch so derivatives stay finite at extreme arguments.
#[inline]
pub fn logistic<S: Scalar>(x: S, center: f64, scale: f64) -> S {
    let z = (x - center) / scale;
    if z.value() >= 0.0 {
        let e = (-z).exp();
        S::from_f64(1.0) / (e + 1.0)
    } else {
        let e = z.exp();
        e / (e + 1.0)
    }
}
