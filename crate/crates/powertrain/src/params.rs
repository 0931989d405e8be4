//! Validated parameter bundle and its JSON document form.
//!
//! The JSON schema is SI throughout except SoC (percent) and engine speed
//! limits, which are accepted in rpm via explicit `*_rpm` keys.

use serde::{Deserialize, Serialize};

use crate::battery::Battery;
use crate::controller::SpeedController;
use crate::error::Result;
use crate::losses::LossModels;
use crate::maps::{EmMap, IceMap, PolySurface, QuadCurve};

/// rad/s per rpm.
pub const RPM: f64 = std::f64::consts::PI / 30.0;

#[derive(Debug, Clone)]
pub struct VehicleParams {
    pub ice: IceMap,
    pub em: EmMap,
    pub battery: Battery,
    pub loss: LossModels,
    pub controller: SpeedController,
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        self.ice.validate()?;
        self.em.validate()?;
        self.battery.validate()?;
        self.loss.validate()?;
        self.controller.validate()?;
        Ok(())
    }

    /// Complete synthetic default vehicle.
    pub fn synthetic_default() -> Self {
        let p = VehicleParams {
            ice: IceMap::synthetic_default(),
            em: EmMap::synthetic_default(),
            battery: Battery::synthetic_default(350.0, 14.0 * 3.6e6),
            loss: LossModels::synthetic_default(),
            controller: SpeedController::default_gains(),
        };
        p.validate().expect("default parameters must validate");
        p
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: VehicleParamsDoc = serde_json::from_str(s)?;
        let p = doc.into_params();
        p.validate()?;
        Ok(p)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&VehicleParamsDoc::from_params(self))
            .expect("vehicle params serialize")
    }
}

/// ICE section of the JSON document; speed limits in rpm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IceDoc {
    pub efficiency_poly: PolySurface,
    pub eta_floor: f64,
    pub eta_ceil: f64,
    pub omega_min_rpm: f64,
    pub omega_max_rpm: f64,
    pub torque_max_curve: QuadCurve,
    pub lambda_f: f64,
    pub t_friction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VehicleParamsDoc {
    pub ice: IceDoc,
    pub em: EmMap,
    pub battery: Battery,
    pub loss: LossModels,
    pub controller: SpeedController,
}

impl VehicleParamsDoc {
    pub fn into_params(self) -> VehicleParams {
        VehicleParams {
            ice: IceMap {
                efficiency_poly: self.ice.efficiency_poly,
                eta_floor: self.ice.eta_floor,
                eta_ceil: self.ice.eta_ceil,
                omega_min: self.ice.omega_min_rpm * RPM,
                omega_max: self.ice.omega_max_rpm * RPM,
                torque_max_curve: self.ice.torque_max_curve,
                lambda_f: self.ice.lambda_f,
                t_friction: self.ice.t_friction,
            },
            em: self.em,
            battery: self.battery,
            loss: self.loss,
            controller: self.controller,
        }
    }

    pub fn from_params(p: &VehicleParams) -> Self {
        VehicleParamsDoc {
            ice: IceDoc {
                efficiency_poly: p.ice.efficiency_poly.clone(),
                eta_floor: p.ice.eta_floor,
                eta_ceil: p.ice.eta_ceil,
                omega_min_rpm: p.ice.omega_min / RPM,
                omega_max_rpm: p.ice.omega_max / RPM,
                torque_max_curve: p.ice.torque_max_curve,
                lambda_f: p.ice.lambda_f,
                t_friction: p.ice.t_friction,
            },
            em: p.em.clone(),
            battery: p.battery.clone(),
            loss: p.loss.clone(),
            controller: p.controller.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_validates() {
        VehicleParams::synthetic_default().validate().unwrap();
    }

    #[test]
    fn json_round_trip_preserves_speeds_in_rpm() {
        let p = VehicleParams::synthetic_default();
        let json = p.to_json_string();
        assert!(json.contains("omega_min_rpm"));
        let back = VehicleParams::from_json_str(&json).unwrap();
        assert!((back.ice.omega_min - p.ice.omega_min).abs() < 1e-12);
        assert!((back.ice.omega_max - p.ice.omega_max).abs() < 1e-12);
        assert_eq!(back.loss.gear_ratios, p.loss.gear_ratios);
        assert_eq!(back.battery.voc_volts, p.battery.voc_volts);
    }

    #[test]
    fn bad_config_rejected() {
        let p = VehicleParams::synthetic_default();
        let mut doc = VehicleParamsDoc::from_params(&p);
        doc.controller.kp = -1.0;
        let json = serde_json::to_string(&doc).unwrap();
        assert!(VehicleParams::from_json_str(&json).is_err());
    }
}
