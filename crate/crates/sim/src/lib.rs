//! High-fidelity closed-loop simulation of the hybrid tractor: the plant runs
//! under fixed-step RK4 with the built-in PI speed controller at 100 Hz and a
//! pluggable energy-management policy at 20 Hz.

pub mod clutch;
pub mod cycle;
pub mod error;
pub mod filter;
pub mod log;
pub mod policy;
pub mod runner;

pub use clutch::clutch_logic;
pub use cycle::{CyclePoint, DriveCycleInput};
pub use error::{Result, SimError};
pub use filter::prefilter_step;
pub use log::{EnergyLedger, SimLog};
pub use policy::{EmsObservation, EmsPolicy, PolicyDecision, SolveDiag, TrajectoryPolicy, ZeroTorquePolicy};
pub use runner::{simulate, PlantOptions};
