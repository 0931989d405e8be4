//! Continuous plant state of the merged vehicle model.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PlantState {
    /// Main-shaft speed, rad/s. Vehicle speed follows from the engaged gear.
    pub omega: f64,
    /// Cumulative fuel mass, kg.
    pub m_f: f64,
    /// State of charge, percent.
    pub soc: f64,
    /// PI integrator state, N·m.
    pub x_ice: f64,
    /// Clutch closed flag.
    pub xi: bool,
    /// Prefilter state, rad/s.
    pub omega_ref_filtered: f64,
}

impl PlantState {
    pub fn at_speed(omega: f64, soc: f64) -> Self {
        PlantState {
            omega,
            m_f: 0.0,
            soc,
            x_ice: 0.0,
            xi: true,
            omega_ref_filtered: omega,
        }
    }
}
