//! Built-in engine speed controller, modeled as a saturated PI.

use serde::{Deserialize, Serialize};

use crate::error::{PowertrainError, Result};
use crate::maps::IceMap;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeedController {
    /// Proportional gain, N·m·s/rad.
    pub kp: f64,
    /// Integral gain, N·m/rad.
    pub ki: f64,
    /// Reference prefilter cutoff, Hz.
    pub prefilter_cutoff_hz: f64,
    /// Droop is disabled on this vehicle; kept as an explicit flag so the
    /// config documents the fact.
    pub droop_enabled: bool,
}

impl SpeedController {
    pub fn validate(&self) -> Result<()> {
        if self.kp <= 0.0 || self.ki <= 0.0 {
            return Err(PowertrainError::InvalidParams(
                "PI gains must be positive".into(),
            ));
        }
        if self.prefilter_cutoff_hz <= 0.0 {
            return Err(PowertrainError::InvalidParams(
                "prefilter cutoff must be positive".into(),
            ));
        }
        if self.droop_enabled {
            return Err(PowertrainError::InvalidParams(
                "droop is not modeled; droop_enabled must be false".into(),
            ));
        }
        Ok(())
    }

    pub fn default_gains() -> Self {
        SpeedController {
            kp: 12.0,
            ki: 3.33,
            prefilter_cutoff_hz: 1.5,
            droop_enabled: false,
        }
    }
}

/// One PI evaluation: torque command and integrator rate.
///
/// The output is clamped to `[-t_friction, T_max(Ω)]`; while clamped and the
/// error keeps pushing outward the integrator freezes (anti-windup).
pub fn pi_step(
    omega_ref_filtered: f64,
    omega: f64,
    x_ice: f64,
    ctrl: &SpeedController,
    ice: &IceMap,
) -> (f64, f64) {
    let err = omega_ref_filtered - omega;
    let raw = ctrl.kp * err + x_ice;
    let t_max = ice.torque_max(omega);
    let t_min = -ice.t_friction;
    let t_ice = raw.clamp(t_min, t_max);
    let windup = (raw > t_max && err > 0.0) || (raw < t_min && err < 0.0);
    let x_rate = if windup { 0.0 } else { ctrl.ki * err };
    (t_ice, x_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_error_passes_integrator_state() {
        let ctrl = SpeedController::default_gains();
        let ice = IceMap::synthetic_default();
        let (t, rate) = pi_step(150.0, 150.0, 42.0, &ctrl, &ice);
        assert_eq!(t, 42.0);
        assert_eq!(rate, 0.0);
    }

    #[test]
    fn reference_gain_values() {
        let ctrl = SpeedController::default_gains();
        let ice = IceMap::synthetic_default();
        let (t, rate) = pi_step(160.0, 150.0, 0.0, &ctrl, &ice);
        assert!((t - 120.0).abs() < 1e-12);
        assert!((rate - 33.3).abs() < 1e-9);
    }

    #[test]
    fn saturation_freezes_integrator() {
        let ctrl = SpeedController::default_gains();
        let ice = IceMap::synthetic_default();
        let omega = 160.0;
        let t_max = ice.torque_max(omega);
        let (t, rate) = pi_step(omega + 100.0, omega, t_max, &ctrl, &ice);
        assert_eq!(t, t_max);
        assert_eq!(rate, 0.0);
        // Error pulling back inside keeps the integrator alive.
        let (t2, rate2) = pi_step(omega - 10.0, omega, t_max + 200.0, &ctrl, &ice);
        assert_eq!(t2, t_max);
        assert!(rate2 < 0.0);
    }

    #[test]
    fn negative_floor_is_friction_torque() {
        let ctrl = SpeedController::default_gains();
        let ice = IceMap::synthetic_default();
        let (t, _) = pi_step(100.0, 200.0, 0.0, &ctrl, &ice);
        assert_eq!(t, -ice.t_friction);
    }
}
