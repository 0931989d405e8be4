//! Closed-loop simulation: RK4 plant integration at `dt_plant`, the built-in
//! PI speed controller at 100 Hz, the energy-management policy at 20 Hz.

use emslab_powertrain::{
    battery_current_from_power, em_electrical_power, fan_torque, pi_step, PlantState,
    VehicleParams,
};

use crate::clutch::clutch_logic;
use crate::cycle::{CyclePoint, DriveCycleInput};
use crate::error::{Result, SimError};
use crate::filter::prefilter_step;
use crate::log::{EnergyLedger, SimLog};
use crate::policy::EmsPolicy;

#[derive(Debug, Clone)]
pub struct PlantOptions {
    /// Plant integration step, s. Must divide the PI period.
    pub dt_plant: f64,
    /// Built-in controller period, s.
    pub pi_period: f64,
    /// Policy period, s. Must be a multiple of the PI period.
    pub ems_period: f64,
    /// Open/close the clutch automatically from the commanded engine torque.
    pub auto_clutch: bool,
    /// When false the engine stays decoupled and off (full-electric).
    pub engine_enabled: bool,
    pub clutch_threshold: f64,
    pub clutch_hysteresis: f64,
}

impl Default for PlantOptions {
    fn default() -> Self {
        PlantOptions {
            dt_plant: 0.005,
            pi_period: 0.01,
            ems_period: 0.05,
            auto_clutch: true,
            engine_enabled: true,
            clutch_threshold: 5.0,
            clutch_hysteresis: 4.0,
        }
    }
}

impl PlantOptions {
    fn validate(&self) -> Result<()> {
        if self.dt_plant <= 0.0 || self.dt_plant > 0.01 {
            return Err(SimError::InvalidOptions(
                "dt_plant must be in (0, 0.01] s".into(),
            ));
        }
        let ratio_pi = self.pi_period / self.dt_plant;
        let ratio_ems = self.ems_period / self.pi_period;
        if (ratio_pi - ratio_pi.round()).abs() > 1e-9 || ratio_pi < 1.0 - 1e-9 {
            return Err(SimError::InvalidOptions(
                "pi_period must be an integer multiple of dt_plant".into(),
            ));
        }
        if (ratio_ems - ratio_ems.round()).abs() > 1e-9 || ratio_ems < 1.0 - 1e-9 {
            return Err(SimError::InvalidOptions(
                "ems_period must be an integer multiple of pi_period".into(),
            ));
        }
        if self.clutch_hysteresis < 0.0 {
            return Err(SimError::InvalidOptions("hysteresis must be >= 0".into()));
        }
        Ok(())
    }
}

/// Continuous sub-state advanced by RK4 (fuel is accumulated separately by
/// trapezoid of the logged rate, it feeds nothing back).
#[derive(Debug, Clone, Copy)]
struct ContState {
    v: f64,
    soc: f64,
    x_ice: f64,
    ledger: [f64; 10],
}

impl ContState {
    fn axpy(&self, h: f64, d: &Deriv) -> ContState {
        let mut ledger = self.ledger;
        for (l, dl) in ledger.iter_mut().zip(&d.ledger) {
            *l += h * dl;
        }
        ContState {
            v: self.v + h * d.dv,
            soc: self.soc + h * d.dsoc,
            x_ice: self.x_ice + h * d.dx_ice,
            ledger,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Deriv {
    dv: f64,
    dsoc: f64,
    dx_ice: f64,
    ledger: [f64; 10],
    fuel_rate: f64,
    i_b: f64,
    v_b: f64,
    t_fan: f64,
    t_gb: f64,
}

/// Inputs held constant over the current plant step.
#[derive(Debug, Clone, Copy)]
struct Holds {
    t_ice: f64,
    x_ice_rate: f64,
    t_em: f64,
    xi: bool,
    cp: CyclePoint,
    tau_gb: f64,
}

fn fuel_rate_raw(t_ice: f64, omega: f64, params: &VehicleParams) -> f64 {
    if t_ice <= 0.0 {
        0.0
    } else {
        let eta: f64 = params.ice.efficiency(t_ice, omega);
        t_ice * omega / (params.ice.lambda_f * eta)
    }
}

fn eval_deriv(y: &ContState, holds: &Holds, params: &VehicleParams) -> Result<Deriv> {
    let loss = &params.loss;
    let tau_total = holds.tau_gb * loss.final_ratio;
    let omega = y.v * tau_total / loss.wheel_radius;
    let xi = if holds.xi { 1.0 } else { 0.0 };

    let t_fan: f64 = fan_torque(omega, loss);
    let omega_gb = omega / holds.tau_gb;
    let t_gb: f64 = (omega_gb * loss.gearbox_a + loss.gearbox_b) * omega_gb;
    let f_cd: f64 = emslab_powertrain::coastdown_force(y.v, holds.cp.slope, loss);

    let t_net = (holds.t_ice - t_fan) * xi + holds.t_em - holds.cp.t_pto * loss.pto_ratio;
    let force = (t_net * tau_total - t_gb * loss.final_ratio) / loss.wheel_radius;
    let dv = (force - f_cd - holds.cp.brake_force) / loss.mass;

    let fuel_rate = xi * fuel_rate_raw(holds.t_ice, omega, params);

    let p_em = em_electrical_power(holds.t_em, omega, &params.em);
    let i_b = battery_current_from_power(p_em, holds.cp.i_b_aux, &params.battery, y.soc)?;
    let (v_b, dsoc) = emslab_powertrain::battery_step(i_b, &params.battery, y.soc);

    let p_fuel = params.ice.lambda_f * fuel_rate;
    let ledger = [
        p_fuel,                            // fuel
        loss.mass * dv * y.v,              // kinetic
        f_cd * y.v,                        // coastdown
        holds.cp.brake_force * y.v,        // brake
        holds.cp.t_pto * omega * loss.pto_ratio, // pto
        xi * t_fan * omega,                // fan
        t_gb * omega_gb,                   // gearbox
        p_fuel - xi * holds.t_ice * omega, // ice loss
        p_em - holds.t_em * omega,         // em loss
        p_em,                              // em electrical
    ];

    Ok(Deriv {
        dv,
        dsoc,
        dx_ice: if holds.xi { holds.x_ice_rate } else { 0.0 },
        ledger,
        fuel_rate,
        i_b,
        v_b,
        t_fan,
        t_gb,
    })
}

fn rk4_step(y: &ContState, holds: &Holds, params: &VehicleParams, dt: f64) -> Result<ContState> {
    let k1 = eval_deriv(y, holds, params)?;
    let k2 = eval_deriv(&y.axpy(0.5 * dt, &k1), holds, params)?;
    let k3 = eval_deriv(&y.axpy(0.5 * dt, &k2), holds, params)?;
    let k4 = eval_deriv(&y.axpy(dt, &k3), holds, params)?;
    let mut out = *y;
    out.v += dt / 6.0 * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv);
    out.soc += dt / 6.0 * (k1.dsoc + 2.0 * k2.dsoc + 2.0 * k3.dsoc + k4.dsoc);
    out.x_ice += dt / 6.0 * (k1.dx_ice + 2.0 * k2.dx_ice + 2.0 * k3.dx_ice + k4.dx_ice);
    for i in 0..out.ledger.len() {
        out.ledger[i] += dt / 6.0
            * (k1.ledger[i] + 2.0 * k2.ledger[i] + 2.0 * k3.ledger[i] + k4.ledger[i]);
    }
    // Standstill projection.
    if out.v < 0.0 {
        out.v = 0.0;
    }
    Ok(out)
}

/// Estimated shaft torque needed to hold the current speed, used to
/// initialize the PI integrator when the clutch re-closes.
fn load_torque_estimate(
    omega: f64,
    v: f64,
    holds: &Holds,
    params: &VehicleParams,
) -> f64 {
    let loss = &params.loss;
    let tau_total = holds.tau_gb * loss.final_ratio;
    let t_fan: f64 = fan_torque(omega, loss);
    let t_gb: f64 =
        emslab_powertrain::losses::gearbox_loss_torque_ratio(omega, holds.tau_gb, loss);
    let f_cd: f64 = emslab_powertrain::coastdown_force(v, holds.cp.slope, loss);
    t_fan + holds.cp.t_pto * loss.pto_ratio - holds.t_em
        + (f_cd * loss.wheel_radius + t_gb * loss.final_ratio) / tau_total
}

/// Run the closed loop over the whole cycle.
pub fn simulate(
    cycle: &DriveCycleInput,
    policy: &mut dyn EmsPolicy,
    params: &VehicleParams,
    init: &PlantState,
    opts: &PlantOptions,
) -> Result<SimLog> {
    opts.validate()?;
    cycle.validate(params)?;
    params.validate()?;

    let dt = opts.dt_plant;
    let pi_every = (opts.pi_period / dt).round() as usize;
    let ems_every = (opts.ems_period / dt).round() as usize;
    let n_steps = (cycle.duration() / dt).round() as usize + 1;

    let mut log = SimLog {
        dt,
        ..Default::default()
    };

    let cp0 = cycle.sample(0.0);
    let mut gear = cp0.gear;
    let mut tau_gb = params.loss.gear_ratio(gear)?;
    let mut y = ContState {
        v: init.omega * params.loss.wheel_radius / (tau_gb * params.loss.final_ratio),
        soc: init.soc,
        x_ice: init.x_ice,
        ledger: [0.0; 10],
    };
    let mut m_f = init.m_f;
    let mut xi = init.xi && opts.engine_enabled;
    let mut filt = init.omega_ref_filtered;
    let mut holds = Holds {
        t_ice: 0.0,
        x_ice_rate: 0.0,
        t_em: 0.0,
        xi,
        cp: cp0,
        tau_gb,
    };
    let mut rate_prev = 0.0;
    let mut prev_ems_ref: Option<f64> = None;

    for k in 0..n_steps {
        let t = k as f64 * dt;
        let cp = cycle.sample(t);
        holds.cp = cp;
        if cp.gear != gear {
            gear = cp.gear;
            tau_gb = params.loss.gear_ratio(gear)?;
            holds.tau_gb = tau_gb;
        }
        let tau_total = tau_gb * params.loss.final_ratio;
        let omega = y.v * tau_total / params.loss.wheel_radius;

        // Policy tick.
        if k % ems_every == 0 {
            let omega_ref_rate = match prev_ems_ref {
                Some(prev) => (cp.omega_ref - prev) / opts.ems_period,
                None => 0.0,
            };
            prev_ems_ref = Some(cp.omega_ref);
            let obs = crate::policy::EmsObservation {
                t,
                state: PlantState {
                    omega,
                    m_f,
                    soc: y.soc,
                    x_ice: y.x_ice,
                    xi,
                    omega_ref_filtered: filt,
                },
                v: y.v,
                gear,
                tau_gb,
                omega_ref: cp.omega_ref,
                omega_ref_rate,
                t_pto: cp.t_pto,
                i_b_aux: cp.i_b_aux,
            };
            let decision = policy.decide(&obs);
            let lo: f64 = params.em.t_min_curve(omega);
            let hi: f64 = params.em.t_max_curve(omega);
            let clamped = decision.t_em.clamp(lo, hi);
            if (clamped - decision.t_em).abs() > 1e-9 {
                log.t_em_clamped_steps += 1;
            }
            holds.t_em = clamped;
            if let Some(diag) = decision.diag {
                log.solves.push((k, diag));
            }
        }

        // Built-in controller tick.
        if k % pi_every == 0 {
            filt = prefilter_step(cp.omega_ref, filt, opts.pi_period,
                params.controller.prefilter_cutoff_hz);
            if opts.engine_enabled {
                let err = filt - omega;
                let raw_cmd = params.controller.kp * err + y.x_ice;
                if opts.auto_clutch {
                    let want = clutch_logic(
                        raw_cmd,
                        xi,
                        opts.clutch_threshold,
                        opts.clutch_hysteresis,
                    );
                    if want && !xi {
                        // Engine may only couple above its idle speed.
                        if omega >= params.ice.omega_min {
                            xi = true;
                            let t_load = load_torque_estimate(omega, y.v, &holds, params);
                            y.x_ice = (t_load - params.controller.kp * err).clamp(
                                -params.ice.t_friction,
                                params.ice.torque_max(omega),
                            );
                        }
                    } else if !want && xi {
                        xi = false; // integrator freezes at its current value
                    }
                }
                if xi {
                    let (t_ice, x_rate) =
                        pi_step(filt, omega, y.x_ice, &params.controller, &params.ice);
                    holds.t_ice = t_ice;
                    holds.x_ice_rate = x_rate;
                } else {
                    holds.t_ice = 0.0;
                    holds.x_ice_rate = 0.0;
                }
            } else {
                xi = false;
                holds.t_ice = 0.0;
                holds.x_ice_rate = 0.0;
            }
            holds.xi = xi;
        }

        // Hard physical bounds.
        if xi && (omega < params.ice.omega_min - 1e-6 || omega > params.ice.omega_max + 1e-6) {
            return Err(SimError::Aborted {
                t,
                reason: format!(
                    "engine speed {:.1} rad/s outside [{:.1}, {:.1}] with clutch closed",
                    omega, params.ice.omega_min, params.ice.omega_max
                ),
            });
        }
        if y.soc < -1e-9 || y.soc > 100.0 + 1e-9 {
            return Err(SimError::Aborted {
                t,
                reason: format!("SoC {:.2} % left [0, 100]", y.soc),
            });
        }

        let d = eval_deriv(&y, &holds, params).map_err(|e| SimError::Aborted {
            t,
            reason: e.to_string(),
        })?;

        // Cumulative fuel: trapezoid of the logged rate.
        if k > 0 {
            m_f += dt * 0.5 * (rate_prev + d.fuel_rate);
        }
        rate_prev = d.fuel_rate;

        log.t.push(t);
        log.omega.push(omega);
        log.omega_ref.push(cp.omega_ref);
        log.omega_ref_filtered.push(filt);
        log.v.push(y.v);
        log.gear.push(gear);
        log.xi.push(xi);
        log.t_ice.push(if xi { holds.t_ice } else { 0.0 });
        log.t_em.push(holds.t_em);
        log.t_fan.push(d.t_fan);
        log.t_gb.push(d.t_gb);
        log.i_b.push(d.i_b);
        log.v_b.push(d.v_b);
        log.fuel_rate.push(d.fuel_rate);
        log.m_f.push(m_f);
        log.soc.push(y.soc);
        log.x_ice.push(y.x_ice);
        log.brake_force.push(cp.brake_force);
        log.t_pto.push(cp.t_pto);
        log.i_b_aux.push(cp.i_b_aux);
        log.slope.push(cp.slope);

        if k + 1 < n_steps {
            y = rk4_step(&y, &holds, params, dt).map_err(|e| SimError::Aborted {
                t,
                reason: e.to_string(),
            })?;
        }
    }

    log.energy = EnergyLedger {
        fuel: y.ledger[0],
        kinetic: y.ledger[1],
        coastdown: y.ledger[2],
        brake: y.ledger[3],
        pto: y.ledger[4],
        fan: y.ledger[5],
        gearbox: y.ledger[6],
        ice_loss: y.ledger[7],
        em_loss: y.ledger[8],
        em_electrical: y.ledger[9],
    };
    Ok(log)
}
