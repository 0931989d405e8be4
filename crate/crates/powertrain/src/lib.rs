//! Component models of a parallel hybrid tractor powertrain and their merged
//! vehicle dynamics: engine and motor efficiency maps, equivalent-circuit
//! battery, parasitic losses, longitudinal dynamics and the built-in engine
//! speed controller.
//!
//! Every evaluation is a pure function of value inputs, and the paths a
//! predictive controller differentiates are generic over
//! [`emslab_num::Scalar`].

pub mod battery;
pub mod controller;
pub mod error;
pub mod losses;
pub mod maps;
pub mod ops;
pub mod params;
pub mod state;

pub use battery::{battery_current_from_power, battery_step, Battery};
pub use controller::{pi_step, SpeedController};
pub use error::{PowertrainError, Result};
pub use losses::{coastdown_force, fan_torque, gearbox_loss_torque, LossModels, GRAVITY};
pub use maps::{EmMap, IceMap, PolySurface, QuadCurve};
pub use ops::{
    em_battery_current, em_electrical_power, em_electrical_power_smooth, ice_fuel_rate,
    ice_fuel_rate_smooth, vehicle_derivatives, Derivatives, DriveInputs,
};
pub use params::{VehicleParams, VehicleParamsDoc, RPM};
pub use state::PlantState;
