//! Equivalent-circuit battery: open-circuit voltage source in series with an
//! internal resistance, SoC tracked in percent.

use serde::{Deserialize, Serialize};

use crate::error::{PowertrainError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Battery {
    /// Nominal voltage, V.
    pub v_nominal: f64,
    /// Nominal energy content, J.
    pub q_nominal_energy: f64,
    /// Internal resistance, Ω.
    pub r_internal: f64,
    /// Strictly increasing SoC (%) → V_oc (V) table.
    pub voc_soc: Vec<f64>,
    pub voc_volts: Vec<f64>,
    /// Operational SoC window, %.
    pub soc_min: f64,
    pub soc_max: f64,
    /// Battery current limits, A (positive = discharge).
    pub i_min: f64,
    pub i_max: f64,
}

impl Battery {
    /// Charge capacity in A·s, derived from the energy content.
    pub fn q_ah(&self) -> f64 {
        self.q_nominal_energy / self.v_nominal
    }

    pub fn validate(&self) -> Result<()> {
        if self.v_nominal <= 0.0 || self.q_nominal_energy <= 0.0 || self.r_internal < 0.0 {
            return Err(PowertrainError::InvalidParams(
                "battery v_nominal, q_nominal_energy must be positive, r_internal >= 0".into(),
            ));
        }
        if self.voc_soc.len() != self.voc_volts.len() || self.voc_soc.len() < 2 {
            return Err(PowertrainError::InvalidParams(
                "voc table needs >= 2 matching knots".into(),
            ));
        }
        for w in self.voc_soc.windows(2) {
            if w[1] <= w[0] {
                return Err(PowertrainError::InvalidParams(
                    "voc table SoC knots must be strictly increasing".into(),
                ));
            }
        }
        for w in self.voc_volts.windows(2) {
            if w[1] <= w[0] {
                return Err(PowertrainError::InvalidParams(
                    "voc table voltage must be strictly increasing in SoC".into(),
                ));
            }
        }
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 100.0) {
            return Err(PowertrainError::InvalidParams(
                "SoC window must satisfy 0 <= soc_min < soc_max <= 100".into(),
            ));
        }
        if !(self.i_min < 0.0 && self.i_max > 0.0) {
            return Err(PowertrainError::InvalidParams(
                "current limits need i_min < 0 < i_max".into(),
            ));
        }
        Ok(())
    }

    /// Open-circuit voltage, linear interpolation with endpoint-slope
    /// extrapolation so the curve stays strictly increasing on [0, 100].
    pub fn v_oc(&self, soc: f64) -> f64 {
        let s = &self.voc_soc;
        let v = &self.voc_volts;
        let n = s.len();
        let seg = if soc <= s[0] {
            0
        } else if soc >= s[n - 1] {
            n - 2
        } else {
            s.partition_point(|&knot| knot <= soc).saturating_sub(1)
        };
        let frac = (soc - s[seg]) / (s[seg + 1] - s[seg]);
        v[seg] + frac * (v[seg + 1] - v[seg])
    }

    pub fn synthetic_default(v_nominal: f64, q_nominal_energy: f64) -> Self {
        let rel = [
            (0.0, 0.90),
            (10.0, 0.92),
            (30.0, 0.96),
            (50.0, 1.00),
            (70.0, 1.04),
            (90.0, 1.08),
            (100.0, 1.10),
        ];
        Battery {
            v_nominal,
            q_nominal_energy,
            r_internal: 0.08,
            voc_soc: rel.iter().map(|&(s, _)| s).collect(),
            voc_volts: rel.iter().map(|&(_, f)| f * v_nominal).collect(),
            soc_min: 20.0,
            soc_max: 80.0,
            i_min: -160.0,
            i_max: 250.0,
        }
    }
}

/// Terminal voltage and SoC rate for a given battery current.
///
/// Positive current discharges; the SoC rate is in percent points per second.
pub fn battery_step(i_b: f64, batt: &Battery, soc: f64) -> (f64, f64) {
    let v_b = batt.v_oc(soc) - batt.r_internal * i_b;
    let soc_rate = -100.0 * i_b / batt.q_ah();
    (v_b, soc_rate)
}

/// Solve the battery algebraic loop of the merged model: given the electrical
/// power drawn by the EM at the battery terminals plus the auxiliary current,
/// find the battery current such that `V_b = V_oc - R I_b` and
/// `I_b = P_em/V_b + I_aux` hold simultaneously.
pub fn battery_current_from_power(p_em: f64, i_aux: f64, batt: &Battery, soc: f64) -> Result<f64> {
    let voc = batt.v_oc(soc);
    let r = batt.r_internal;
    if r < 1e-12 {
        return Ok(p_em / voc + i_aux);
    }
    // R I^2 - (V_oc + I_aux R) I + (P_em + I_aux V_oc) = 0, physical root.
    let b = voc + i_aux * r;
    let disc = b * b - 4.0 * r * (p_em + i_aux * voc);
    if disc < 0.0 {
        return Err(PowertrainError::BatteryPowerInfeasible {
            power: p_em,
            voc,
        });
    }
    Ok((b - disc.sqrt()) / (2.0 * r))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batt() -> Battery {
        Battery::synthetic_default(350.0, 14.0 * 3.6e6)
    }

    #[test]
    fn open_circuit_at_rest() {
        let b = batt();
        let (v, rate) = battery_step(0.0, &b, 50.0);
        assert_eq!(v, b.v_oc(50.0));
        assert_eq!(rate, 0.0);
    }

    #[test]
    fn one_c_discharge_rate() {
        let b = batt();
        let (_, rate) = battery_step(b.q_ah() / 3600.0, &b, 50.0);
        assert!((rate - (-100.0 / 3600.0)).abs() < 1e-15);
    }

    #[test]
    fn ohmic_drop_sign() {
        let b = batt();
        for &i in &[1.0, 10.0, 120.0] {
            let (v, _) = battery_step(i, &b, 40.0);
            assert!(v < b.v_oc(40.0));
        }
    }

    #[test]
    fn voc_strictly_increasing() {
        let b = batt();
        let mut prev = b.v_oc(0.0);
        for k in 1..=100 {
            let v = b.v_oc(k as f64);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn implicit_current_consistent() {
        let b = batt();
        for &(p, aux) in &[(12.0e3, 4.0), (-20.0e3, 10.0), (0.0, 0.0), (44.0e3, 15.0)] {
            let i_b = battery_current_from_power(p, aux, &b, 55.0).unwrap();
            let (v_b, _) = battery_step(i_b, &b, 55.0);
            // The loop closes: EM current + aux equals total.
            assert!((i_b - (p / v_b + aux)).abs() < 1e-9, "p={p} aux={aux}");
        }
    }

    #[test]
    fn q_ah_is_energy_over_voltage() {
        let b = batt();
        assert!((b.q_ah() - 14.0 * 3.6e6 / 350.0).abs() < 1e-9);
    }
}
