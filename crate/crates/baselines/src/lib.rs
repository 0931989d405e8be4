//! Reference strategies the MPC is measured against: the traditional
//! engine-only vehicle and the cycle-aware global optimum computed with a
//! per-step Hamiltonian minimization and a costate bisection that enforces
//! charge neutrality.

pub mod ice_only;
pub mod pmp;

pub use ice_only::simulate_ice_only;
pub use pmp::{evaluate_costate, pmp_optimize, PmpConfig, PmpError, PmpResult};
