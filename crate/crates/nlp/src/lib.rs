//! Smooth NLP solver for multiple-shooting optimal control problems at desk
//! scale: block-structured problem description, exact first derivatives via
//! forward-mode dual numbers, damped BFGS curvature elements, and a
//! primal-dual interior-point iteration on an envelope-factorized KKT system.

pub mod band;
pub mod bfgs;
pub mod deriv;
pub mod error;
pub mod problem;
pub mod solver;

pub use deriv::{block_jacobian, validate_derivatives};
pub use error::{NlpError, Result};
pub use problem::{Block, Curvature, LinearBlock, NlpProblem, QuadraticBlock, VecBlockFn, WarmStart};
pub use solver::{solve, KktResiduals, NlpSolution, SolveOptions, SolveStatus, Tolerances};
