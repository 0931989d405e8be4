//! Add-on MPC energy management for a speed-governed parallel hybrid tractor:
//! the electric-motor torque is the only control, the built-in engine PI lives
//! inside the predictive model, and one interior-point solve runs per 50 ms
//! tick with a time-shifted warm start.

pub mod assemble;
pub mod config;
pub mod model;
pub mod penalty;
pub mod policy;

pub use assemble::{assemble_nlp, Layout, Measurement, STATE_SCALE, TORQUE_SCALE};
pub use config::{MpcConfig, MpcError, PenaltyConfig, Result};
pub use model::{predict_model_rhs, predict_model_step, NodeInputs};
pub use penalty::{penalty_lookup, penalty_mean_from_maps};
pub use policy::{EmsDecision, MpcPolicy};
