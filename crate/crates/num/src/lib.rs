//! Scalar abstraction shared by the vehicle model and the NLP machinery.
//!
//! Model code is written once against [`Scalar`] and evaluated either with
//! plain `f64` (simulation) or with [`Dual`] numbers (exact first derivatives
//! by forward-mode automatic differentiation).

mod dual;
mod smooth;

pub use dual::Dual;
pub use smooth::{logistic, smooth_max, smooth_min, smooth_positive};

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar type the model equations are generic over.
///
/// Only the operations the powertrain equations actually use are required;
/// transcendental coverage is deliberately minimal.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn from_f64(v: f64) -> Self;
    /// Primal (value) part.
    fn value(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// Select by primal value; ties keep `self`.
    fn max_s(self, other: Self) -> Self;
    fn min_s(self, other: Self) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    #[inline]
    fn max_s(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
    #[inline]
    fn min_s(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}
