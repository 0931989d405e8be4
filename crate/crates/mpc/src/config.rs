//! Controller configuration.

use emslab_powertrain::VehicleParams;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("invalid MPC config: {0}")]
    BadConfig(String),

    #[error("nlp: {0}")]
    Nlp(#[from] emslab_nlp::NlpError),
}

pub type Result<T> = std::result::Result<T, MpcError>;

/// Battery-consumption penalty shape: a smooth, strictly decreasing multiplier
/// around the SoC midpoint whose band average equals `mean`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PenaltyConfig {
    /// Band-average multiplier; `None` derives it from the efficiency maps.
    pub mean: Option<f64>,
    /// Relative swing of the multiplier (0.5 → ±50 % across the band).
    pub amplitude: f64,
    /// Transition width in SoC points.
    pub width: f64,
    /// Center of the active band, %.
    pub center: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            mean: None,
            amplitude: 0.5,
            width: 12.0,
            center: 50.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MpcConfig {
    /// Prediction horizon length in steps.
    pub horizon: usize,
    /// Discretization step, s (also the controller period).
    pub dt: f64,
    /// Derive c_fuel and c_soc from fuel heating value and battery size.
    pub physical_weights: bool,
    /// Tracking weight, J·s²/rad².
    pub c_track: f64,
    /// Control smoothness weight, J/(N·m)².
    pub c_control: f64,
    /// Clutch-opening engine-torque threshold, N·m.
    pub t_th: f64,
    /// Logistic scale of the clutch indicator, N·m.
    pub clutch_sigmoid_width: f64,
    /// Width of the smooth positive-part blend of the fuel rate, N·m.
    pub fuel_blend_width: f64,
    /// tanh scale replacing sign(T_em) in the EM power, N·m.
    pub em_sign_width: f64,
    pub penalty: PenaltyConfig,
    /// Fraction of the physical battery-current limits used inside the
    /// predictive model, compensating the constant-voltage simplification.
    pub current_margin: f64,
    /// SoC-bound slack penalty as a multiple of c_soc.
    pub soc_slack_penalty_factor: f64,
    /// Solver stationarity/feasibility/complementarity tolerance.
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    /// Multiplier on the model's PI gains only (robustness studies).
    pub alpha_omega: f64,
    /// Multiplier on the tracking weight (sensitivity studies).
    pub alpha_track: f64,
    /// When false the model runs the full-electric branch (engine off).
    pub engine_available: bool,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            horizon: 30,
            dt: 0.05,
            physical_weights: true,
            c_track: 60.0,
            c_control: 0.15,
            t_th: 5.0,
            clutch_sigmoid_width: 2.0,
            fuel_blend_width: 2.0,
            em_sign_width: 2.0,
            penalty: PenaltyConfig::default(),
            current_margin: 0.85,
            soc_slack_penalty_factor: 1e6,
            solver_tol: 1e-6,
            solver_max_iter: 100,
            alpha_omega: 1.0,
            alpha_track: 1.0,
            engine_available: true,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(MpcError::BadConfig("horizon must be >= 2".into()));
        }
        if self.dt <= 0.0 {
            return Err(MpcError::BadConfig("dt must be positive".into()));
        }
        for (name, v) in [
            ("c_track", self.c_track),
            ("c_control", self.c_control),
            ("alpha_track", self.alpha_track),
        ] {
            if v < 0.0 {
                return Err(MpcError::BadConfig(format!("{name} must be >= 0")));
            }
        }
        if !(self.current_margin > 0.0 && self.current_margin <= 1.0) {
            return Err(MpcError::BadConfig("current_margin must be in (0, 1]".into()));
        }
        if self.alpha_omega <= 0.0 {
            return Err(MpcError::BadConfig("alpha_omega must be positive".into()));
        }
        Ok(())
    }

    /// Fuel weight, J/kg.
    pub fn c_fuel(&self, params: &VehicleParams) -> f64 {
        debug_assert!(self.physical_weights);
        params.ice.lambda_f
    }

    /// SoC weight, J per percent point: `V_n Q_b / 100`.
    pub fn c_soc(&self, params: &VehicleParams) -> f64 {
        debug_assert!(self.physical_weights);
        params.battery.v_nominal * params.battery.q_ah() / 100.0
    }
}
