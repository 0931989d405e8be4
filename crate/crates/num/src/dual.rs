use crate::Scalar;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Forward-mode dual number carrying one directional derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub val: f64,
    pub der: f64,
}

impl Dual {
    #[inline]
    pub fn new(val: f64, der: f64) -> Self {
        Dual { val, der }
    }

    /// Constant with zero derivative.
    #[inline]
    pub fn constant(val: f64) -> Self {
        Dual { val, der: 0.0 }
    }

    /// Independent variable seeded with unit derivative.
    #[inline]
    pub fn variable(val: f64) -> Self {
        Dual { val, der: 1.0 }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, rhs: Dual) -> Dual {
        Dual::new(self.val + rhs.val, self.der + rhs.der)
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, rhs: Dual) -> Dual {
        Dual::new(self.val - rhs.val, self.der - rhs.der)
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, rhs: Dual) -> Dual {
        Dual::new(self.val * rhs.val, self.der * rhs.val + self.val * rhs.der)
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, rhs: Dual) -> Dual {
        Dual::new(
            self.val / rhs.val,
            (self.der * rhs.val - self.val * rhs.der) / (rhs.val * rhs.val),
        )
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        Dual::new(-self.val, -self.der)
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, rhs: f64) -> Dual {
        Dual::new(self.val + rhs, self.der)
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, rhs: f64) -> Dual {
        Dual::new(self.val - rhs, self.der)
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, rhs: f64) -> Dual {
        Dual::new(self.val * rhs, self.der * rhs)
    }
}

impl Div<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, rhs: f64) -> Dual {
        Dual::new(self.val / rhs, self.der / rhs)
    }
}

impl Scalar for Dual {
    #[inline]
    fn from_f64(v: f64) -> Self {
        Dual::constant(v)
    }

    #[inline]
    fn value(self) -> f64 {
        self.val
    }

    #[inline]
    fn exp(self) -> Self {
        let e = self.val.exp();
        Dual::new(e, self.der * e)
    }

    #[inline]
    fn ln(self) -> Self {
        Dual::new(self.val.ln(), self.der / self.val)
    }

    #[inline]
    fn sqrt(self) -> Self {
        let r = self.val.sqrt();
        Dual::new(r, self.der / (2.0 * r))
    }

    #[inline]
    fn tanh(self) -> Self {
        let t = self.val.tanh();
        Dual::new(t, self.der * (1.0 - t * t))
    }

    #[inline]
    fn powi(self, n: i32) -> Self {
        Dual::new(
            self.val.powi(n),
            self.der * f64::from(n) * self.val.powi(n - 1),
        )
    }

    #[inline]
    fn max_s(self, other: Self) -> Self {
        if other.val > self.val {
            other
        } else {
            self
        }
    }

    #[inline]
    fn min_s(self, other: Self) -> Self {
        if other.val < self.val {
            other
        } else {
            self
        }
    }
}
