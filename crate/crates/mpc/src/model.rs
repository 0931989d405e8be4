//! Simplified predictive model: the merged vehicle dynamics with the battery
//! at its nominal voltage, the clutch replaced by a smooth indicator tied to
//! the predicted engine torque, and the PI controller embedded so the engine
//! torque is an internal expression rather than a decision variable.
//!
//! State per node: `[Ω (rad/s), m_f (g, relative to horizon start), SoC (%),
//! x_ice (N·m)]`.

use emslab_num::{logistic, smooth_max, smooth_min, Scalar};
use emslab_powertrain::losses::gearbox_loss_torque_ratio;
use emslab_powertrain::{
    coastdown_force, em_electrical_power_smooth, fan_torque, ice_fuel_rate_smooth, VehicleParams,
};

use crate::config::MpcConfig;

/// Exogenous inputs held over the horizon (zero-order hold of the last
/// measurement), except the speed reference which is extrapolated per node.
#[derive(Debug, Clone, Copy)]
pub struct NodeInputs {
    pub tau_gb: f64,
    /// Predicted reference at this node, rad/s.
    pub omega_ref: f64,
    pub t_pto: f64,
    pub i_aux: f64,
}

/// Continuous-time right-hand side of the predictive model.
pub fn predict_model_rhs<S: Scalar>(
    x: &[S; 4],
    t_em: S,
    inp: &NodeInputs,
    params: &VehicleParams,
    cfg: &MpcConfig,
) -> [S; 4] {
    let omega = x[0];
    let soc_unused = x[2]; // battery voltage fixed at nominal: SoC decoupled
    let _ = soc_unused;
    let x_ice = x[3];
    let loss = &params.loss;
    let tau_total = inp.tau_gb * loss.final_ratio;

    let kp = params.controller.kp * cfg.alpha_omega;
    let ki = params.controller.ki * cfg.alpha_omega;
    let err = -(omega - inp.omega_ref);
    let t_pi_raw = err * kp + x_ice;
    let t_max = params.ice.torque_max(omega);
    let w = cfg.fuel_blend_width;
    let t_ice = smooth_min(
        smooth_max(t_pi_raw, S::from_f64(-params.ice.t_friction), w),
        t_max,
        w,
    );
    let xi = if cfg.engine_available {
        logistic(t_ice, cfg.t_th, cfg.clutch_sigmoid_width)
    } else {
        S::from_f64(0.0)
    };
    // Integrator evolves with the clutch indicator and freezes against the
    // torque limits, mirroring the plant's anti-windup.
    let windup = logistic(t_max - t_pi_raw, 0.0, w)
        * logistic(t_pi_raw + params.ice.t_friction, 0.0, w);
    let dx_ice = err * ki * xi * windup;

    let fuel_g = ice_fuel_rate_smooth(t_ice, omega, &params.ice, cfg.fuel_blend_width)
        * xi
        * 1000.0;

    let t_fan = fan_torque(omega, loss);
    let t_gb = gearbox_loss_torque_ratio(omega, inp.tau_gb, loss);
    let v = omega * (loss.wheel_radius / tau_total);
    let f_cd = coastdown_force(v, 0.0, loss);
    let t_net = (t_ice - t_fan) * xi + t_em - inp.t_pto * loss.pto_ratio;
    let dv = stage_force(t_net, t_gb, f_cd, tau_total, loss.final_ratio, loss) / loss.mass;
    let domega = dv * (tau_total / loss.wheel_radius);

    let p_em = em_electrical_power_smooth(t_em, omega, &params.em, cfg.em_sign_width);
    let i_b = p_em / params.battery.v_nominal + inp.i_aux;
    let dsoc = i_b * (-100.0 / params.battery.q_ah());

    [domega, fuel_g, dsoc, dx_ice]
}

fn stage_force<S: Scalar>(
    t_net: S,
    t_gb: S,
    f_cd: S,
    tau_total: f64,
    final_ratio: f64,
    loss: &emslab_powertrain::LossModels,
) -> S {
    (t_net * tau_total - t_gb * final_ratio) / loss.wheel_radius - f_cd
}

/// One forward-Euler step of the predictive model.
pub fn predict_model_step<S: Scalar>(
    x: &[S; 4],
    t_em: S,
    inp: &NodeInputs,
    params: &VehicleParams,
    cfg: &MpcConfig,
) -> [S; 4] {
    let d = predict_model_rhs(x, t_em, inp, params, cfg);
    [
        x[0] + d[0] * cfg.dt,
        x[1] + d[1] * cfg.dt,
        x[2] + d[2] * cfg.dt,
        x[3] + d[3] * cfg.dt,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use emslab_powertrain::RPM;

    fn setup() -> (VehicleParams, MpcConfig) {
        (VehicleParams::synthetic_default(), MpcConfig::default())
    }

    fn rk4(x: &[f64; 4], t_em: f64, inp: &NodeInputs, p: &VehicleParams, c: &MpcConfig, dt: f64) -> [f64; 4] {
        let add = |a: &[f64; 4], b: &[f64; 4], h: f64| {
            [a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2], a[3] + h * b[3]]
        };
        let k1 = predict_model_rhs(x, t_em, inp, p, c);
        let k2 = predict_model_rhs(&add(x, &k1, dt / 2.0), t_em, inp, p, c);
        let k3 = predict_model_rhs(&add(x, &k2, dt / 2.0), t_em, inp, p, c);
        let k4 = predict_model_rhs(&add(x, &k3, dt), t_em, inp, p, c);
        let mut out = *x;
        for i in 0..4 {
            out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    #[test]
    fn equilibrium_is_near_fixed_point() {
        let (p, c) = setup();
        let omega = 1600.0 * RPM;
        let inp = NodeInputs {
            tau_gb: p.loss.gear_ratios[10],
            omega_ref: omega,
            t_pto: 0.0,
            i_aux: 0.0,
        };
        // Load torque the PI must hold at equilibrium (zero error).
        let tau_total = inp.tau_gb * p.loss.final_ratio;
        let v = omega * p.loss.wheel_radius / tau_total;
        let f_cd: f64 = coastdown_force(v, 0.0, &p.loss);
        let t_gb: f64 = gearbox_loss_torque_ratio(omega, inp.tau_gb, &p.loss);
        let t_fan: f64 = fan_torque(omega, &p.loss);
        let x_ice = t_fan + (f_cd * p.loss.wheel_radius + t_gb * p.loss.final_ratio) / tau_total;
        let x = [omega, 0.0, 50.0, x_ice];
        let next = predict_model_step(&x, 0.0, &inp, &p, &c);
        // Speed and integrator barely move; fuel accumulates.
        assert!((next[0] - omega).abs() < 5e-3, "domega {}", next[0] - omega);
        assert!((next[3] - x_ice).abs() < 5e-3);
        assert!(next[1] > 0.0, "fuel must accumulate at equilibrium");
        assert!((next[2] - 50.0).abs() < 1e-9, "SoC moves only with EM/aux");
    }

    #[test]
    fn full_electric_branch_freezes_engine_states() {
        let (p, mut c) = setup();
        c.engine_available = false;
        let inp = NodeInputs {
            tau_gb: p.loss.gear_ratios[9],
            omega_ref: 1500.0 * RPM,
            t_pto: 0.0,
            i_aux: 4.0,
        };
        let x = [1300.0 * RPM, 0.4, 60.0, 80.0];
        let d = predict_model_rhs(&x, 30.0, &inp, &p, &c);
        assert_eq!(d[1], 0.0, "no fuel in full-electric");
        assert_eq!(d[3], 0.0, "integrator frozen");
        assert!(d[2] < 0.0, "discharging while assisting");
        // Invariant to the ICE map.
        let mut p2 = p.clone();
        p2.ice.efficiency_poly.coeffs[0] *= 0.7;
        let d2 = predict_model_rhs(&x, 30.0, &inp, &p2, &c);
        assert_eq!(d[0], d2[0]);
        assert_eq!(d[2], d2[2]);
    }

    #[test]
    fn euler_local_error_scales_second_order() {
        let (p, c) = setup();
        let mut cfg_half = c.clone();
        cfg_half.dt = c.dt / 2.0;
        let inp = NodeInputs {
            tau_gb: p.loss.gear_ratios[10],
            omega_ref: 1650.0 * RPM,
            t_pto: 20.0,
            i_aux: 5.0,
        };
        let mut worst_ratio: f64 = 0.0;
        let mut best_ratio: f64 = f64::INFINITY;
        let states = [
            [1500.0 * RPM, 0.0, 50.0, 60.0],
            [1700.0 * RPM, 0.2, 35.0, 120.0],
            [1350.0 * RPM, 0.1, 70.0, 20.0],
        ];
        for x in &states {
            let t_em = -40.0;
            let e1 = {
                let euler = predict_model_step(x, t_em, &inp, &p, &c);
                let exact = rk4(x, t_em, &inp, &p, &c, c.dt);
                err_norm(&euler, &exact)
            };
            let e2 = {
                let euler = predict_model_step(x, t_em, &inp, &p, &cfg_half);
                let exact = rk4(x, t_em, &inp, &p, &c, c.dt / 2.0);
                err_norm(&euler, &exact)
            };
            let ratio = e1 / e2;
            worst_ratio = worst_ratio.max(ratio);
            best_ratio = best_ratio.min(ratio);
        }
        assert!(
            best_ratio > 3.0 && worst_ratio < 5.0,
            "local error ratios [{best_ratio:.2}, {worst_ratio:.2}] not ~4"
        );
    }

    fn err_norm(a: &[f64; 4], b: &[f64; 4]) -> f64 {
        let scales = [200.0, 1.0, 100.0, 200.0];
        a.iter()
            .zip(b)
            .zip(&scales)
            .map(|((x, y), s)| ((x - y) / s).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn derivatives_differentiable_through_switching_points() {
        use emslab_num::Dual;
        let (p, c) = setup();
        let inp = NodeInputs {
            tau_gb: p.loss.gear_ratios[10],
            omega_ref: 1500.0 * RPM,
            t_pto: 10.0,
            i_aux: 3.0,
        };
        // Sweep T_em through zero (EM sign switch) and PI torque through the
        // clutch threshold.
        for t_em0 in [-20.0, -2.0, 0.0, 2.0, 20.0] {
            let x = [1500.0 * RPM, 0.0, 50.0, 5.0];
            let xd = [
                Dual::constant(x[0]),
                Dual::constant(x[1]),
                Dual::constant(x[2]),
                Dual::constant(x[3]),
            ];
            let d = predict_model_rhs(&xd, Dual::variable(t_em0), &inp, &p, &c);
            let h = 1e-5;
            let f = |t: f64| predict_model_rhs(&x, t, &inp, &p, &c);
            let lo = f(t_em0 - h);
            let hi = f(t_em0 + h);
            for i in 0..4 {
                let fd = (hi[i] - lo[i]) / (2.0 * h);
                assert!(
                    (d[i].der - fd).abs() <= 1e-5 * fd.abs().max(1e-3),
                    "t_em={t_em0} comp {i}: ad {} fd {fd}",
                    d[i].der
                );
            }
        }
    }
}
