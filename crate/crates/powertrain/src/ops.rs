//! Component operations and the merged vehicle model evaluation.

use emslab_num::{smooth_positive, Scalar};

use crate::battery::{battery_current_from_power, battery_step};
use crate::controller::pi_step;
use crate::error::Result;
use crate::maps::{EmMap, IceMap};
use crate::losses::{coastdown_force, fan_torque, gearbox_loss_torque};
use crate::params::VehicleParams;
use crate::state::PlantState;

/// Fuel mass flow of the engine, kg/s. Exact plant form: zero at or below
/// zero torque, `T Ω / (λ_f η)` above.
pub fn ice_fuel_rate(t_ice: f64, omega: f64, map: &IceMap) -> Result<f64> {
    map.check_speed(omega)?;
    if t_ice <= 0.0 {
        return Ok(0.0);
    }
    let eta: f64 = map.efficiency(t_ice, omega);
    Ok(t_ice * omega / (map.lambda_f * eta))
}

/// Differentiable fuel rate used by predictive models: the positive part of
/// the torque is blended over `blend_width` N·m so the rate is C¹ at zero.
pub fn ice_fuel_rate_smooth<S: Scalar>(t_ice: S, omega: S, map: &IceMap, blend_width: f64) -> S {
    let t_pos = smooth_positive(t_ice, blend_width);
    let eta = map.efficiency(t_ice, omega);
    t_pos * omega / (eta * map.lambda_f)
}

/// Electrical power seen at the battery terminals for a given EM torque,
/// signed (positive draws from the battery). Exact sign-switching form.
pub fn em_electrical_power(t_em: f64, omega: f64, map: &EmMap) -> f64 {
    if t_em == 0.0 {
        return 0.0;
    }
    let eta: f64 = map.efficiency(t_em, omega);
    let p_mech = t_em * omega;
    if t_em > 0.0 {
        p_mech / eta
    } else {
        p_mech * eta
    }
}

/// EM branch current at the battery side for a given terminal voltage.
pub fn em_battery_current(t_em: f64, omega: f64, map: &EmMap, v_b: f64) -> Result<f64> {
    map.check_torque(t_em, omega)?;
    Ok(em_electrical_power(t_em, omega, map) / v_b)
}

/// Differentiable EM battery-side power: the `sign(T)` exponent of the
/// efficiency is replaced by a tanh of width `sign_width`, continuous at zero
/// and exact away from it.
pub fn em_electrical_power_smooth<S: Scalar>(
    t_em: S,
    omega: S,
    map: &EmMap,
    sign_width: f64,
) -> S {
    let eta = map.efficiency(t_em, omega);
    let s = (t_em / sign_width).tanh();
    // eta^(-s) = exp(-s ln eta)
    let factor = (-(s * eta.ln())).exp();
    t_em * omega * factor
}

/// Exogenous inputs of the merged model at one instant.
#[derive(Debug, Clone, Copy)]
pub struct DriveInputs {
    pub t_em: f64,
    pub gear: usize,
    /// Filtered speed reference seen by the PI, rad/s.
    pub omega_ref: f64,
    pub t_pto: f64,
    pub i_b_aux: f64,
    pub brake_force: f64,
    pub slope: f64,
}

/// State derivatives plus the algebraic quantities of one evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Derivatives {
    pub dv: f64,
    pub domega: f64,
    pub dm_f: f64,
    pub dsoc: f64,
    pub dx_ice: f64,
    pub v: f64,
    pub t_ice: f64,
    pub t_fan: f64,
    pub t_gb: f64,
    pub i_b: f64,
    pub v_b: f64,
    pub fuel_rate: f64,
}

/// Evaluate the merged vehicle model.
///
/// The clutch flag gates engine and fan torque, the fuel rate and the PI
/// integrator. Longitudinal dynamics are in force-balance form so standstill
/// needs no division by speed.
pub fn vehicle_derivatives(
    state: &PlantState,
    inputs: &DriveInputs,
    params: &VehicleParams,
) -> Result<Derivatives> {
    let loss = &params.loss;
    let tau_gb = loss.gear_ratio(inputs.gear)?;
    let tau_total = tau_gb * loss.final_ratio;
    let v = state.omega * loss.wheel_radius / tau_total;

    let (t_ice, dx_ice) = if state.xi {
        params.ice.check_speed(state.omega)?;
        pi_step(
            inputs.omega_ref,
            state.omega,
            state.x_ice,
            &params.controller,
            &params.ice,
        )
    } else {
        (0.0, 0.0)
    };
    let xi = if state.xi { 1.0 } else { 0.0 };

    let fuel_rate = if state.xi {
        ice_fuel_rate(t_ice, state.omega, &params.ice)?
    } else {
        0.0
    };

    let t_fan: f64 = fan_torque(state.omega, loss);
    let t_gb: f64 = gearbox_loss_torque(state.omega, inputs.gear, loss)?;
    let f_cd: f64 = coastdown_force(v, inputs.slope, loss);

    let t_net = (t_ice - t_fan) * xi + inputs.t_em - inputs.t_pto * loss.pto_ratio;
    let force_traction = (t_net * tau_total - t_gb * loss.final_ratio) / loss.wheel_radius;
    let dv = (force_traction - f_cd - inputs.brake_force) / loss.mass;
    let domega = dv * tau_total / loss.wheel_radius;

    let p_em = em_electrical_power(inputs.t_em, state.omega, &params.em);
    let i_b = battery_current_from_power(p_em, inputs.i_b_aux, &params.battery, state.soc)?;
    let (v_b, dsoc) = battery_step(i_b, &params.battery, state.soc);

    Ok(Derivatives {
        dv,
        domega,
        dm_f: fuel_rate,
        dsoc,
        dx_ice,
        v,
        t_ice,
        t_fan,
        t_gb,
        i_b,
        v_b,
        fuel_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::VehicleParams;
    use emslab_num::Dual;

    const RPM: f64 = std::f64::consts::PI / 30.0;

    fn params() -> VehicleParams {
        VehicleParams::synthetic_default()
    }

    #[test]
    fn zero_torque_zero_fuel() {
        let p = params();
        for omega in [1000.0 * RPM, 1600.0 * RPM, 2200.0 * RPM] {
            assert_eq!(ice_fuel_rate(0.0, omega, &p.ice).unwrap(), 0.0);
            assert_eq!(ice_fuel_rate(-20.0, omega, &p.ice).unwrap(), 0.0);
        }
    }

    #[test]
    fn fuel_rate_golden_default_map() {
        let p = params();
        let omega = 2200.0 * RPM;
        let rate = ice_fuel_rate(120.0, omega, &p.ice).unwrap();
        // Independent route: P_f = T Ω / (λ_f η) with η evaluated from the
        // raw polynomial; the smooth floor/ceiling blends only shift η by a
        // few 1e-5 at this interior point.
        let eta = p.ice.efficiency_poly.eval(120.0, omega);
        let by_hand = 120.0 * omega / (42.68e6 * eta);
        assert!((rate - by_hand).abs() <= 2e-4 * by_hand);
        // Frozen golden value for the shipped default map.
        assert!(
            (rate - 2.9472e-3).abs() < 2.0e-6,
            "golden fuel rate drifted: {rate:.6e}"
        );
    }

    #[test]
    fn fuel_linear_in_speed_with_constant_eta_map() {
        let mut p = params();
        // Constant-η test map.
        p.ice.efficiency_poly.coeffs = vec![0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let r1 = ice_fuel_rate(100.0, 110.0, &p.ice).unwrap();
        let r2 = ice_fuel_rate(100.0, 220.0, &p.ice).unwrap();
        assert!((r2 - 2.0 * r1).abs() < 1e-15);
    }

    #[test]
    fn fuel_rate_speed_domain_error() {
        let p = params();
        let err = ice_fuel_rate(100.0, 80.0, &p.ice).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("outside"), "unexpected error {msg}");
    }

    #[test]
    fn em_current_zero_at_zero_torque() {
        let p = params();
        let i = em_battery_current(0.0, 1500.0 * RPM, &p.em, p.battery.v_nominal).unwrap();
        assert_eq!(i, 0.0);
    }

    #[test]
    fn em_efficiency_penalizes_both_directions() {
        let p = params();
        let omega = 1500.0 * RPM;
        let v = p.battery.v_nominal;
        for t in [40.0, 90.0, 150.0] {
            let i_pos = em_battery_current(t, omega, &p.em, v).unwrap();
            let i_neg = em_battery_current(-t, omega, &p.em, v).unwrap();
            assert!(i_pos > -i_neg, "t={t}: {i_pos} vs {i_neg}");
        }
    }

    #[test]
    fn em_current_golden_recharge() {
        let p = params();
        let omega = 1800.0 * RPM;
        let i = em_battery_current(-50.0, omega, &p.em, p.battery.v_nominal).unwrap();
        let eta = p.em.efficiency_poly.eval(-50.0, omega);
        let by_hand = -50.0 * omega * eta / p.battery.v_nominal;
        assert!((i - by_hand).abs() < 1e-3 * by_hand.abs());
        assert!(i < 0.0);
        // Frozen golden value for the shipped default map.
        assert!((i - (-23.4446)).abs() < 5e-3, "golden em current drifted: {i:.4}");
    }

    #[test]
    fn em_current_limit_error() {
        let p = params();
        assert!(em_battery_current(400.0, 1500.0 * RPM, &p.em, 350.0).is_err());
    }

    #[test]
    fn smooth_variants_match_exact_away_from_zero() {
        let p = params();
        let omega = 1600.0 * RPM;
        for t in [25.0f64, 120.0, 300.0] {
            let exact = ice_fuel_rate(t, omega, &p.ice).unwrap();
            let smooth: f64 = ice_fuel_rate_smooth(t, omega, &p.ice, 2.0);
            assert!((exact - smooth).abs() <= 2e-3 * exact.max(1e-9), "t={t}");
        }
        for t in [-120.0f64, -30.0, 30.0, 120.0] {
            let exact = em_electrical_power(t, omega, &p.em);
            let smooth: f64 = em_electrical_power_smooth(t, omega, &p.em, 2.0);
            assert!(
                (exact - smooth).abs() <= 2e-3 * exact.abs().max(1.0),
                "t={t}: exact {exact} smooth {smooth}"
            );
        }
    }

    #[test]
    fn clutch_open_removes_engine_terms() {
        let p = params();
        let mut state = PlantState::at_speed(1500.0 * RPM, 50.0);
        state.xi = false;
        state.x_ice = 75.0;
        let inputs = DriveInputs {
            t_em: 40.0,
            gear: 10,
            omega_ref: 1600.0 * RPM,
            t_pto: 0.0,
            i_b_aux: 5.0,
            brake_force: 0.0,
            slope: 0.0,
        };
        let d = vehicle_derivatives(&state, &inputs, &p).unwrap();
        assert_eq!(d.dm_f, 0.0);
        assert_eq!(d.t_ice, 0.0);
        assert_eq!(d.dx_ice, 0.0);

        // Full-electric trajectory is invariant to the ICE map contents.
        let mut p2 = p.clone();
        p2.ice.efficiency_poly.coeffs.iter_mut().for_each(|c| *c *= 0.5);
        p2.ice.t_friction = 99.0;
        let d2 = vehicle_derivatives(&state, &inputs, &p2).unwrap();
        assert_eq!(d.dv, d2.dv);
        assert_eq!(d.dsoc, d2.dsoc);
    }

    #[test]
    fn steady_cruise_balance() {
        let p = params();
        let omega = 1800.0 * RPM;
        let gear = 11;
        let state = PlantState::at_speed(omega, 50.0);
        // Pick the EM torque that exactly balances the load with the PI output
        // at zero error (x_ice = 0 → t_ice = 0).
        let loss = &p.loss;
        let tau_total = loss.gear_ratio(gear).unwrap() * loss.final_ratio;
        let v = omega * loss.wheel_radius / tau_total;
        let f_cd: f64 = coastdown_force(v, 0.0, loss);
        let t_gb: f64 = gearbox_loss_torque(omega, gear, loss).unwrap();
        let t_fan: f64 = fan_torque(omega, loss);
        let t_em = t_fan + (f_cd * loss.wheel_radius + t_gb * loss.final_ratio) / tau_total;
        let inputs = DriveInputs {
            t_em,
            gear,
            omega_ref: omega,
            t_pto: 0.0,
            i_b_aux: 0.0,
            brake_force: 0.0,
            slope: 0.0,
        };
        let d = vehicle_derivatives(&state, &inputs, &p).unwrap();
        assert!(d.dv.abs() < 1e-12, "dv = {}", d.dv);
    }

    #[test]
    fn brake_force_decelerates() {
        let p = params();
        let state = PlantState::at_speed(1500.0 * RPM, 50.0);
        let mk = |brake| DriveInputs {
            t_em: 0.0,
            gear: 11,
            omega_ref: 1500.0 * RPM,
            t_pto: 0.0,
            i_b_aux: 0.0,
            brake_force: brake,
            slope: 0.0,
        };
        let d0 = vehicle_derivatives(&state, &mk(0.0), &p).unwrap();
        let d1 = vehicle_derivatives(&state, &mk(2000.0), &p).unwrap();
        assert!(d1.dv < d0.dv);
    }

    #[test]
    fn reference_speed_ratio() {
        let p = params();
        // Ω = 2200 rpm, τ_gb = 1, τ_0 = 22.8, R_w = 0.65 → v ≈ 6.57 m/s.
        let mut loss = p.loss.clone();
        loss.gear_ratios[0] = 1.0;
        let v = loss.speed_from_omega(2200.0 * RPM, 1).unwrap();
        assert!((v - 6.5676).abs() < 1e-3);
    }

    #[test]
    fn smooth_fuel_rate_is_differentiable_through_zero() {
        let p = params();
        let omega = 1400.0 * RPM;
        for t0 in [-3.0, -1.0, 0.0, 1.0, 3.0] {
            let d = ice_fuel_rate_smooth(Dual::variable(t0), Dual::constant(omega), &p.ice, 2.0);
            assert!(d.der.is_finite());
            let h = 1e-5;
            let f = |t: f64| -> f64 { ice_fuel_rate_smooth(t, omega, &p.ice, 2.0) };
            let fd = (f(t0 + h) - f(t0 - h)) / (2.0 * h);
            assert!((d.der - fd).abs() < 1e-6 * fd.abs().max(1e-6), "t0={t0}");
        }
    }
}
