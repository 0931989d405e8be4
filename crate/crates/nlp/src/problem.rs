//! Block-structured NLP description.
//!
//! A problem is a sum of small evaluator blocks, each touching a handful of
//! variables. The solver gets exact first derivatives from dual-number
//! evaluation block by block, and the block layout doubles as the sparsity
//! structure of the KKT system.

use emslab_num::Dual;
use nalgebra::DMatrix;

use crate::error::{NlpError, Result};

/// Vector-valued function of a local variable slice. Implementors write one
/// generic body and forward both entry points to it.
pub trait VecBlockFn: Send + Sync {
    fn dim(&self) -> usize;
    fn eval_f64(&self, x: &[f64], out: &mut [f64]);
    fn eval_dual(&self, x: &[Dual], out: &mut [Dual]);
}

/// How a block contributes second-order information to the Lagrangian
/// Hessian approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Curvature {
    /// Constant Hessian, captured once at preparation by differencing the AD
    /// gradient. Exact for linear and quadratic blocks.
    Quadratic,
    /// Damped BFGS element maintained across iterations.
    Bfgs,
    /// No second-order contribution.
    None,
}

pub struct Block {
    /// Global indices of the variables this block reads, in local order.
    pub vars: Vec<usize>,
    pub f: Box<dyn VecBlockFn>,
    pub curvature: Curvature,
}

impl Block {
    pub fn new(vars: Vec<usize>, f: Box<dyn VecBlockFn>, curvature: Curvature) -> Self {
        Block { vars, f, curvature }
    }
}

/// Simple affine row(s): `out = A x_loc + b`.
pub struct LinearBlock {
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
}

impl LinearBlock {
    pub fn single(coeffs: Vec<f64>, offset: f64) -> Self {
        LinearBlock {
            a: DMatrix::from_row_slice(1, coeffs.len(), &coeffs),
            b: vec![offset],
        }
    }
}

impl VecBlockFn for LinearBlock {
    fn dim(&self) -> usize {
        self.a.nrows()
    }
    fn eval_f64(&self, x: &[f64], out: &mut [f64]) {
        for r in 0..self.a.nrows() {
            let mut acc = self.b[r];
            for c in 0..self.a.ncols() {
                acc += self.a[(r, c)] * x[c];
            }
            out[r] = acc;
        }
    }
    fn eval_dual(&self, x: &[Dual], out: &mut [Dual]) {
        for r in 0..self.a.nrows() {
            let mut acc = Dual::constant(self.b[r]);
            for c in 0..self.a.ncols() {
                acc = acc + x[c] * self.a[(r, c)];
            }
            out[r] = acc;
        }
    }
}

/// Scalar quadratic `½ xᵀ Q x + cᵀ x + b` over the local variables.
pub struct QuadraticBlock {
    pub q: DMatrix<f64>,
    pub c: Vec<f64>,
    pub b: f64,
}

impl VecBlockFn for QuadraticBlock {
    fn dim(&self) -> usize {
        1
    }
    fn eval_f64(&self, x: &[f64], out: &mut [f64]) {
        let n = self.c.len();
        let mut acc = self.b;
        for i in 0..n {
            acc += self.c[i] * x[i];
            for j in 0..n {
                acc += 0.5 * x[i] * self.q[(i, j)] * x[j];
            }
        }
        out[0] = acc;
    }
    fn eval_dual(&self, x: &[Dual], out: &mut [Dual]) {
        let n = self.c.len();
        let mut acc = Dual::constant(self.b);
        for i in 0..n {
            acc = acc + x[i] * self.c[i];
            for j in 0..n {
                acc = acc + x[i] * x[j] * (0.5 * self.q[(i, j)]);
            }
        }
        out[0] = acc;
    }
}

/// Duals and curvature state carried from a previous solve of a problem with
/// the same shape.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub y_eq: Vec<f64>,
    /// Lower/upper multipliers per inequality row (including bound rows).
    pub z_lo: Vec<f64>,
    pub z_hi: Vec<f64>,
    /// Barrier slacks per side; empty when not carried.
    pub s_lo: Vec<f64>,
    pub s_hi: Vec<f64>,
    /// Per-block BFGS matrices in problem block order (objective, then
    /// equality, then inequality blocks); `None` for non-BFGS blocks.
    pub bfgs: Vec<Option<DMatrix<f64>>>,
    pub mu: f64,
}

pub struct NlpProblem {
    pub n: usize,
    /// Objective terms, each of output dimension 1; the objective is their sum.
    pub objective: Vec<Block>,
    /// Equality blocks, every output row pinned to zero.
    pub eq: Vec<Block>,
    /// Inequality blocks with per-row two-sided bounds (±inf allowed).
    pub ineq: Vec<Block>,
    pub ineq_lower: Vec<f64>,
    pub ineq_upper: Vec<f64>,
    /// Simple variable bounds, (−inf, +inf) when free.
    pub x_bounds: Vec<(f64, f64)>,
    pub x0: Vec<f64>,
    /// Characteristic magnitude of each variable; the solver iterates on
    /// `x / scaling`.
    pub scaling: Vec<f64>,
    /// Multiplier applied to the objective internally.
    pub obj_scale: f64,
    pub warm: Option<WarmStart>,
}

impl NlpProblem {
    pub fn new(n: usize) -> Self {
        NlpProblem {
            n,
            objective: Vec::new(),
            eq: Vec::new(),
            ineq: Vec::new(),
            ineq_lower: Vec::new(),
            ineq_upper: Vec::new(),
            x_bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n],
            x0: vec![0.0; n],
            scaling: vec![1.0; n],
            obj_scale: 1.0,
            warm: None,
        }
    }

    pub fn num_eq_rows(&self) -> usize {
        self.eq.iter().map(|b| b.f.dim()).sum()
    }

    pub fn num_ineq_rows(&self) -> usize {
        self.ineq.iter().map(|b| b.f.dim()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.x0.len() != self.n || self.scaling.len() != self.n || self.x_bounds.len() != self.n
        {
            return Err(NlpError::BadProblem(
                "x0, scaling and x_bounds must have length n".into(),
            ));
        }
        if self.scaling.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(NlpError::BadProblem("scaling must be positive".into()));
        }
        if !(self.obj_scale > 0.0) {
            return Err(NlpError::BadProblem("obj_scale must be positive".into()));
        }
        let m_i = self.num_ineq_rows();
        if self.ineq_lower.len() != m_i || self.ineq_upper.len() != m_i {
            return Err(NlpError::BadProblem(format!(
                "inequality bounds must match the {m_i} rows"
            )));
        }
        for (lo, hi) in self.ineq_lower.iter().zip(&self.ineq_upper) {
            if lo > hi {
                return Err(NlpError::BadProblem("inequality lower > upper".into()));
            }
            if !lo.is_finite() && !hi.is_finite() {
                return Err(NlpError::BadProblem(
                    "inequality row with both bounds infinite".into(),
                ));
            }
        }
        for (kind, blocks) in [
            ("objective", &self.objective),
            ("eq", &self.eq),
            ("ineq", &self.ineq),
        ] {
            for (i, b) in blocks.iter().enumerate() {
                if b.vars.iter().any(|&v| v >= self.n) {
                    return Err(NlpError::BadProblem(format!(
                        "{kind} block {i} references variable out of range"
                    )));
                }
                if kind == "objective" && b.f.dim() != 1 {
                    return Err(NlpError::BadProblem(format!(
                        "objective block {i} must have dim 1"
                    )));
                }
            }
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(NlpError::BadProblem("x0 must be finite".into()));
        }
        Ok(())
    }
}
