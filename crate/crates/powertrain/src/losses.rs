//! Parasitic loads and driveline geometry: fan, idling transmission,
//! coasting-down force, gear ratios.

use emslab_num::Scalar;
use serde::{Deserialize, Serialize};

use crate::error::{PowertrainError, Result};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossModels {
    /// Fan torque polynomial (a Ω² + b Ω + c), N·m vs rad/s.
    pub fan_a: f64,
    pub fan_b: f64,
    pub fan_c: f64,
    /// Gearbox loss torque at the gearbox shaft (a Ω_gb² + b Ω_gb), at the
    /// nominal oil temperature.
    pub gearbox_a: f64,
    pub gearbox_b: f64,
    pub oil_temp_nominal_c: f64,
    /// Lumped coasting-down coefficients: F = c v² + b v + a cosθ + M g sinθ.
    pub coastdown_a: f64,
    pub coastdown_b: f64,
    pub coastdown_c: f64,
    /// Vehicle mass, kg.
    pub mass: f64,
    /// Wheel radius, m.
    pub wheel_radius: f64,
    /// Final-drive ratio between gearbox output and wheel.
    pub final_ratio: f64,
    /// Gearbox ratios, gear 1 (slowest) first.
    pub gear_ratios: Vec<f64>,
    /// PTO shaft speed over main shaft speed.
    pub pto_ratio: f64,
}

impl LossModels {
    pub fn validate(&self) -> Result<()> {
        if self.mass <= 0.0 || self.wheel_radius <= 0.0 || self.final_ratio <= 0.0 {
            return Err(PowertrainError::InvalidParams(
                "mass, wheel radius and final ratio must be positive".into(),
            ));
        }
        if self.gear_ratios.is_empty() || self.gear_ratios.iter().any(|&g| g <= 0.0) {
            return Err(PowertrainError::InvalidParams(
                "gear ratios must be positive and non-empty".into(),
            ));
        }
        if self.fan_a < 0.0 || self.fan_b < 0.0 || self.fan_c < 0.0 {
            return Err(PowertrainError::InvalidParams(
                "fan coefficients must be non-negative".into(),
            ));
        }
        if self.gearbox_a < 0.0 || self.gearbox_b < 0.0 {
            return Err(PowertrainError::InvalidParams(
                "gearbox loss coefficients must be non-negative".into(),
            ));
        }
        if self.coastdown_a < 0.0 || self.coastdown_b < 0.0 || self.coastdown_c < 0.0 {
            return Err(PowertrainError::InvalidParams(
                "coastdown coefficients must be non-negative".into(),
            ));
        }
        if self.pto_ratio <= 0.0 {
            return Err(PowertrainError::InvalidParams(
                "pto_ratio must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn gear_ratio(&self, gear: usize) -> Result<f64> {
        if gear == 0 || gear > self.gear_ratios.len() {
            return Err(PowertrainError::InvalidGear {
                gear,
                count: self.gear_ratios.len(),
            });
        }
        Ok(self.gear_ratios[gear - 1])
    }

    /// Main-shaft speed to vehicle speed (Ω → v) for a gear.
    pub fn speed_from_omega(&self, omega: f64, gear: usize) -> Result<f64> {
        Ok(omega * self.wheel_radius / (self.gear_ratio(gear)? * self.final_ratio))
    }

    /// Vehicle speed to main-shaft speed (v → Ω) for a gear.
    pub fn omega_from_speed(&self, v: f64, gear: usize) -> Result<f64> {
        Ok(v * self.gear_ratio(gear)? * self.final_ratio / self.wheel_radius)
    }

    pub fn synthetic_default() -> Self {
        // Geometric ladder, three ranges of four gears each.
        let gear_ratios: Vec<f64> = (0..12).map(|g| 16.0 * 0.76f64.powi(g)).collect();
        LossModels {
            fan_a: 5.5e-4,
            fan_b: 0.01,
            fan_c: 0.0,
            gearbox_a: 2.0e-5,
            gearbox_b: 0.03,
            oil_temp_nominal_c: 44.0,
            coastdown_a: 751.4,
            coastdown_b: 15.0,
            coastdown_c: 2.1,
            mass: 3830.0,
            wheel_radius: 0.65,
            final_ratio: 22.8,
            gear_ratios,
            pto_ratio: 0.5,
        }
    }
}

/// Fan load torque at the engine shaft, clamped non-negative.
pub fn fan_torque<S: Scalar>(omega: S, loss: &LossModels) -> S {
    let raw = (omega * loss.fan_a + loss.fan_b) * omega + loss.fan_c;
    raw.max_s(S::from_f64(0.0))
}

/// Idling-loss torque referred to the gearbox shaft (`Ω_gb = Ω / τ_gb`).
pub fn gearbox_loss_torque<S: Scalar>(omega: S, gear: usize, loss: &LossModels) -> Result<S> {
    let tau = loss.gear_ratio(gear)?;
    let omega_gb = omega / tau;
    Ok((omega_gb * loss.gearbox_a + loss.gearbox_b) * omega_gb)
}

/// Same loss referred through a known ratio (differentiable path where the
/// gear is a fixed measured input).
pub fn gearbox_loss_torque_ratio<S: Scalar>(omega: S, tau_gb: f64, loss: &LossModels) -> S {
    let omega_gb = omega / tau_gb;
    (omega_gb * loss.gearbox_a + loss.gearbox_b) * omega_gb
}

/// Coasting-down force for speed `v` on a road of slope `theta` (rad).
pub fn coastdown_force<S: Scalar>(v: S, slope: f64, loss: &LossModels) -> S {
    let constant =
        loss.coastdown_a * slope.cos() + loss.mass * GRAVITY * slope.sin();
    (v * loss.coastdown_c + loss.coastdown_b) * v + constant
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loss() -> LossModels {
        LossModels::synthetic_default()
    }

    #[test]
    fn fan_zero_at_rest_without_offset() {
        let l = loss();
        assert_eq!(fan_torque(0.0, &l), 0.0);
    }

    #[test]
    fn fan_monotone_in_speed() {
        let l = loss();
        let mut prev = -1.0;
        for k in 0..=50 {
            let t = fan_torque(k as f64 * 5.0, &l);
            assert!(t >= prev);
            prev = t;
        }
    }

    #[test]
    fn gearbox_slower_gear_set_less_loss() {
        let l = loss();
        let omega = 180.0;
        // Larger ratio → slower gearbox shaft → smaller loss torque.
        let t_slow: f64 = gearbox_loss_torque(omega, 1, &l).unwrap();
        let t_fast: f64 = gearbox_loss_torque(omega, 12, &l).unwrap();
        assert!(t_slow < t_fast);
        assert_eq!(gearbox_loss_torque(0.0, 5, &l).unwrap(), 0.0);
    }

    #[test]
    fn invalid_gear_rejected() {
        let l = loss();
        assert!(gearbox_loss_torque(100.0, 0, &l).is_err());
        assert!(gearbox_loss_torque(100.0, 13, &l).is_err());
    }

    #[test]
    fn coastdown_at_rest_flat_is_a() {
        let l = loss();
        assert!((coastdown_force(0.0, 0.0, &l) - l.coastdown_a).abs() < 1e-12);
    }

    #[test]
    fn grade_term_from_reference_mass() {
        let l = loss();
        let theta = 0.05f64.asin();
        let f = coastdown_force(0.0, theta, &l);
        let grade = l.mass * GRAVITY * 0.05;
        assert!((grade - 1878.6).abs() < 0.1);
        assert!((f - (l.coastdown_a * theta.cos() + grade)).abs() < 1e-9);
        assert!(f > l.coastdown_a);
    }

    #[test]
    fn speed_omega_round_trip_every_gear() {
        let l = loss();
        for gear in 1..=12 {
            let omega = 2200.0 * std::f64::consts::PI / 30.0;
            let v = l.speed_from_omega(omega, gear).unwrap();
            let back = l.omega_from_speed(v, gear).unwrap();
            assert!((back - omega).abs() <= 1e-9 * omega);
        }
    }

    #[test]
    fn reference_speed_conversion() {
        let l = loss();
        // 2200 rpm in a 1:1 gear through the final drive.
        let mut l1 = l.clone();
        l1.gear_ratios[0] = 1.0;
        let v = l1.speed_from_omega(2200.0 * std::f64::consts::PI / 30.0, 1).unwrap();
        assert!((v - 6.57).abs() < 0.005);
    }
}
