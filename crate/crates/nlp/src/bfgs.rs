//! Damped BFGS curvature elements, one per evaluator block of the Lagrangian.
//! Keeping the elements block-local preserves the KKT envelope structure that
//! the factorization relies on; a problem with a single all-variable block
//! degenerates to classic full-matrix damped BFGS.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct BfgsElement {
    pub b: DMatrix<f64>,
}

impl BfgsElement {
    pub fn new(dim: usize, init_scale: f64) -> Self {
        BfgsElement {
            b: DMatrix::identity(dim, dim) * init_scale,
        }
    }

    pub fn from_matrix(b: DMatrix<f64>) -> Self {
        BfgsElement { b }
    }

    /// Powell-damped BFGS update keeping `b` positive definite.
    pub fn update(&mut self, s: &[f64], y: &[f64]) {
        let n = s.len();
        let s = DVector::from_row_slice(s);
        let y = DVector::from_row_slice(y);
        let s_norm = s.norm();
        if s_norm < 1e-12 || !s_norm.is_finite() {
            return;
        }
        let bs = &self.b * &s;
        let s_b_s = s.dot(&bs);
        if !(s_b_s > 0.0) || !s_b_s.is_finite() {
            // Approximation lost positive definiteness, reset.
            self.b = DMatrix::identity(n, n) * 1e-2;
            return;
        }
        let s_y = s.dot(&y);
        let theta = if s_y >= 0.2 * s_b_s {
            1.0
        } else {
            0.8 * s_b_s / (s_b_s - s_y)
        };
        let r = &y * theta + &bs * (1.0 - theta);
        let s_r = s.dot(&r);
        if s_r <= 1e-16 || !s_r.is_finite() {
            return;
        }
        self.b -= (&bs * bs.transpose()) / s_b_s;
        self.b += (&r * r.transpose()) / s_r;
        if self.b.iter().any(|v| !v.is_finite()) {
            self.b = DMatrix::identity(n, n) * 1e-2;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learns_quadratic_curvature() {
        // f(x) = ½ xᵀ diag(2, 8) x → gradient difference y = H s.
        let h = [2.0, 8.0];
        let mut el = BfgsElement::new(2, 1.0);
        let pts = [
            [1.0, 0.0],
            [0.3, 1.0],
            [-0.5, 0.4],
            [0.2, -0.9],
            [1.0, 1.0],
            [-1.0, 0.5],
        ];
        for w in pts.windows(2) {
            let s = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
            let y = [h[0] * s[0], h[1] * s[1]];
            el.update(&s, &y);
        }
        assert!((el.b[(0, 0)] - 2.0).abs() < 0.3, "b00 {}", el.b[(0, 0)]);
        assert!((el.b[(1, 1)] - 8.0).abs() < 0.5, "b11 {}", el.b[(1, 1)]);
    }

    #[test]
    fn damping_preserves_positive_definiteness() {
        let mut el = BfgsElement::new(2, 1.0);
        // Negative-curvature pairs would break plain BFGS.
        el.update(&[1.0, 0.0], &[-3.0, 0.0]);
        el.update(&[0.0, 1.0], &[0.0, -1.0]);
        let chol = nalgebra::Cholesky::new(el.b.clone());
        assert!(chol.is_some(), "B lost positive definiteness");
    }
}
