//! Global optimum of the torque split for a fully known cycle.
//!
//! Backward quasi-static model (the speed profile is tracked perfectly), a
//! per-step Hamiltonian `H = λ_f ṁ_f − λ ṠoC` minimized exhaustively over an
//! EM torque grid plus the explicit engine-off candidate, and an outer
//! bisection on the costate λ until the terminal SoC returns to its initial
//! value.

use emslab_powertrain::{
    battery_step, coastdown_force, em_electrical_power, fan_torque, gearbox_loss_torque,
    ice_fuel_rate, PowertrainError, VehicleParams,
};
use emslab_sim::DriveCycleInput;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PmpError {
    #[error("powertrain: {0}")]
    Powertrain(#[from] PowertrainError),

    #[error("sim: {0}")]
    Sim(#[from] emslab_sim::SimError),

    #[error("no feasible torque split at step {step} (t = {t:.2} s, required {t_net:.1} N·m)")]
    Infeasible { step: usize, t: f64, t_net: f64 },

    #[error(
        "costate bracket not found: ΔSoC stayed in [{dsoc_lo:.2}, {dsoc_hi:.2}] points"
    )]
    NoBracket { dsoc_lo: f64, dsoc_hi: f64 },
}

pub type Result<T> = std::result::Result<T, PmpError>;

#[derive(Debug, Clone)]
pub struct PmpConfig {
    /// Number of grid points across the admissible EM torque interval.
    pub grid_points: usize,
    /// Fixed candidate list instead of the speed-dependent grid.
    pub grid_override: Option<Vec<f64>>,
    /// Evaluate the engine-off branch alongside the grid.
    pub allow_engine_off: bool,
    /// Battery voltage held at nominal during the search.
    pub constant_voltage: bool,
    /// |terminal − initial| SoC tolerance, percent points.
    pub soc_tolerance: f64,
    pub max_bisections: usize,
}

impl Default for PmpConfig {
    fn default() -> Self {
        PmpConfig {
            grid_points: 201,
            grid_override: None,
            allow_engine_off: true,
            constant_voltage: true,
            soc_tolerance: 0.1,
            max_bisections: 40,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PmpResult {
    pub t_em: Vec<f64>,
    pub engine_on: Vec<bool>,
    pub soc: Vec<f64>,
    pub fuel_kg: f64,
    pub delta_soc: f64,
    pub lambda: f64,
    pub bisections: usize,
    pub converged: bool,
}

/// Precomputed per-interval backward quantities.
struct BackwardCycle {
    dt: f64,
    omega: Vec<f64>,
    t_net_req: Vec<f64>,
    t_fan: Vec<f64>,
    t_pto_shaft: Vec<f64>,
    i_aux: Vec<f64>,
}

fn precompute(cycle: &DriveCycleInput, params: &VehicleParams) -> Result<BackwardCycle> {
    cycle.validate(params)?;
    let n = cycle.len();
    let loss = &params.loss;
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        v.push(loss.speed_from_omega(cycle.omega_ref[i], cycle.gear[i])?);
    }
    let steps = n - 1;
    let mut out = BackwardCycle {
        dt: cycle.dt,
        omega: Vec::with_capacity(steps),
        t_net_req: Vec::with_capacity(steps),
        t_fan: Vec::with_capacity(steps),
        t_pto_shaft: Vec::with_capacity(steps),
        i_aux: Vec::with_capacity(steps),
    };
    for i in 0..steps {
        let omega = cycle.omega_ref[i];
        let tau_total = loss.gear_ratio(cycle.gear[i])? * loss.final_ratio;
        let dv = (v[i + 1] - v[i]) / cycle.dt;
        let f_cd: f64 = coastdown_force(v[i], cycle.slope[i], loss);
        let f_req = loss.mass * dv + f_cd + cycle.brake_force[i];
        let t_gb: f64 = gearbox_loss_torque(omega, cycle.gear[i], loss)?;
        let t_net = (f_req * loss.wheel_radius + t_gb * loss.final_ratio) / tau_total;
        out.omega.push(omega);
        out.t_net_req.push(t_net);
        out.t_fan.push(fan_torque(omega, loss));
        out.t_pto_shaft.push(cycle.t_pto[i] * loss.pto_ratio);
        out.i_aux.push(cycle.i_b_aux[i]);
    }
    Ok(out)
}

struct StepChoice {
    t_em: f64,
    engine_on: bool,
    fuel_rate: f64,
    soc_rate: f64,
}

#[allow(clippy::too_many_arguments)]
fn battery_rates(
    t_em: f64,
    omega: f64,
    i_aux: f64,
    soc: f64,
    params: &VehicleParams,
    constant_voltage: bool,
) -> Option<(f64, f64)> {
    let p_em = em_electrical_power(t_em, omega, &params.em);
    let i_b = if constant_voltage {
        p_em / params.battery.v_nominal + i_aux
    } else {
        emslab_powertrain::battery_current_from_power(p_em, i_aux, &params.battery, soc).ok()?
    };
    if i_b < params.battery.i_min || i_b > params.battery.i_max {
        return None;
    }
    let (_, soc_rate) = battery_step(i_b, &params.battery, soc);
    Some((i_b, soc_rate))
}

/// Evaluate the whole cycle at a fixed costate; returns the trajectory.
pub fn evaluate_costate(
    cycle: &DriveCycleInput,
    params: &VehicleParams,
    soc0: f64,
    lambda: f64,
    cfg: &PmpConfig,
) -> Result<PmpResult> {
    let bw = precompute(cycle, params)?;
    let lambda_f = params.ice.lambda_f;
    let batt = &params.battery;
    let mut soc = soc0;
    let mut fuel = 0.0;
    let steps = bw.omega.len();
    let mut t_em_traj = Vec::with_capacity(steps);
    let mut on_traj = Vec::with_capacity(steps);
    let mut soc_traj = Vec::with_capacity(steps + 1);
    soc_traj.push(soc);

    for i in 0..steps {
        let omega = bw.omega[i];
        let t_load = bw.t_net_req[i] + bw.t_pto_shaft[i];
        let t_min: f64 = params.em.t_min_curve(omega);
        let t_max: f64 = params.em.t_max_curve(omega);
        let mut best: Option<(f64, StepChoice)> = None;
        let mut consider = |choice: StepChoice| {
            let soc_next = soc + choice.soc_rate * bw.dt;
            if soc_next < batt.soc_min - 1e-9 || soc_next > batt.soc_max + 1e-9 {
                return;
            }
            let h = lambda_f * choice.fuel_rate - lambda * choice.soc_rate;
            if best.as_ref().map(|(hb, _)| h < *hb).unwrap_or(true) {
                best = Some((h, choice));
            }
        };

        // Hybrid branch over the torque grid.
        let grid: Vec<f64> = match &cfg.grid_override {
            Some(g) => g.clone(),
            None => (0..cfg.grid_points)
                .map(|k| t_min + (t_max - t_min) * k as f64 / (cfg.grid_points - 1) as f64)
                .collect(),
        };
        for &t_em in &grid {
            if t_em < t_min - 1e-9 || t_em > t_max + 1e-9 {
                continue;
            }
            // Anything below the friction floor is absorbed by the service
            // brakes; above the engine's curve is infeasible.
            let t_ice_raw = t_load + bw.t_fan[i] - t_em;
            if t_ice_raw > params.ice.torque_max(omega) {
                continue;
            }
            let t_ice = t_ice_raw.max(-params.ice.t_friction);
            let fuel_rate = ice_fuel_rate(t_ice, omega, &params.ice)?;
            let Some((_, soc_rate)) =
                battery_rates(t_em, omega, bw.i_aux[i], soc, params, cfg.constant_voltage)
            else {
                continue;
            };
            consider(StepChoice {
                t_em,
                engine_on: true,
                fuel_rate,
                soc_rate,
            });
        }
        // Engine-off branch: the motor must carry the exact load (no fan).
        if cfg.allow_engine_off {
            let t_em = t_load.max(0.0).min(t_max).max(t_min);
            // Surplus braking handled mechanically; the motor cannot push
            // backwards through the load, so only exact coverage counts.
            let covered = t_load <= t_max + 1e-9;
            if covered {
                let t_em = t_em.max(t_load.min(0.0).max(t_min));
                if let Some((_, soc_rate)) =
                    battery_rates(t_em, omega, bw.i_aux[i], soc, params, cfg.constant_voltage)
                {
                    consider(StepChoice {
                        t_em,
                        engine_on: false,
                        fuel_rate: 0.0,
                        soc_rate,
                    });
                }
            }
        }

        let Some((_, choice)) = best else {
            return Err(PmpError::Infeasible {
                step: i,
                t: i as f64 * bw.dt,
                t_net: bw.t_net_req[i],
            });
        };
        fuel += choice.fuel_rate * bw.dt;
        soc += choice.soc_rate * bw.dt;
        t_em_traj.push(choice.t_em);
        on_traj.push(choice.engine_on);
        soc_traj.push(soc);
    }
    Ok(PmpResult {
        t_em: t_em_traj,
        engine_on: on_traj,
        soc: soc_traj,
        fuel_kg: fuel,
        delta_soc: soc - soc0,
        lambda,
        bisections: 0,
        converged: true,
    })
}

/// Bisect the costate until the cycle is charge-neutral.
pub fn pmp_optimize(
    cycle: &DriveCycleInput,
    params: &VehicleParams,
    soc0: f64,
    cfg: &PmpConfig,
) -> Result<PmpResult> {
    let c_soc = params.battery.v_nominal * params.battery.q_ah() / 100.0;
    let mut lo = 0.0;
    let mut r_lo = evaluate_costate(cycle, params, soc0, lo, cfg)?;
    if r_lo.delta_soc.abs() <= cfg.soc_tolerance {
        return Ok(r_lo);
    }
    if r_lo.delta_soc > 0.0 {
        // Even a free battery charges: the load profile admits no discharge.
        return Err(PmpError::NoBracket {
            dsoc_lo: r_lo.delta_soc,
            dsoc_hi: r_lo.delta_soc,
        });
    }
    let mut hi = 2.0 * c_soc;
    let mut r_hi = evaluate_costate(cycle, params, soc0, hi, cfg)?;
    let mut grow = 0;
    while r_hi.delta_soc < 0.0 {
        hi *= 2.0;
        r_hi = evaluate_costate(cycle, params, soc0, hi, cfg)?;
        grow += 1;
        if grow > 60 {
            return Err(PmpError::NoBracket {
                dsoc_lo: r_lo.delta_soc,
                dsoc_hi: r_hi.delta_soc,
            });
        }
    }
    let mut best = if r_lo.delta_soc.abs() < r_hi.delta_soc.abs() {
        r_lo.clone()
    } else {
        r_hi.clone()
    };
    let mut iterations = 0;
    for _ in 0..cfg.max_bisections {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let r_mid = evaluate_costate(cycle, params, soc0, mid, cfg)?;
        if r_mid.delta_soc.abs() < best.delta_soc.abs() {
            best = r_mid.clone();
        }
        if r_mid.delta_soc.abs() <= cfg.soc_tolerance {
            best = r_mid;
            break;
        }
        if r_mid.delta_soc < 0.0 {
            lo = mid;
            r_lo = r_mid;
        } else {
            hi = mid;
            r_hi = r_mid;
        }
    }
    let _ = (r_lo, r_hi);
    best.bisections = iterations;
    best.converged = best.delta_soc.abs() <= cfg.soc_tolerance;
    Ok(best)
}
