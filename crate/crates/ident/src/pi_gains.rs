//! Recovery of the engine speed controller gains by simulating the complete
//! model against measured speed-step responses.

use emslab_powertrain::{PlantState, VehicleParams, RPM};
use emslab_sim::{simulate, DriveCycleInput, PlantOptions, ZeroTorquePolicy};
use serde::{Deserialize, Serialize};

use crate::nelder_mead::nelder_mead;
use crate::{IdentError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PiFitConfig {
    /// Initial guess for (K_p, K_i).
    pub kp0: f64,
    pub ki0: f64,
    /// Total simulation budget across restarts.
    pub budget: usize,
    pub restarts: usize,
}

impl Default for PiFitConfig {
    fn default() -> Self {
        PiFitConfig {
            kp0: 5.0,
            ki0: 1.0,
            budget: 200,
            restarts: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PiFit {
    pub kp: f64,
    pub ki: f64,
    pub cost: f64,
    pub simulations: usize,
    pub converged: bool,
    pub non_identifiable: bool,
}

/// The documented identification maneuver: a three-step speed staircase.
pub fn staircase_cycle(gear: usize, dt: f64) -> DriveCycleInput {
    let rpm_plateaus = [1200.0, 1600.0, 2000.0, 1400.0];
    let hold = 10.0; // s per plateau
    let n = (rpm_plateaus.len() as f64 * hold / dt).round() as usize + 1;
    let mut omega_ref = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * dt;
        let k = ((t / hold).floor() as usize).min(rpm_plateaus.len() - 1);
        omega_ref.push(rpm_plateaus[k] * RPM);
    }
    DriveCycleInput {
        dt,
        omega_ref,
        gear: vec![gear; n],
        brake_force: vec![0.0; n],
        t_pto: vec![0.0; n],
        i_b_aux: vec![0.0; n],
        slope: vec![0.0; n],
    }
}

fn simulate_speed(
    cycle: &DriveCycleInput,
    params: &VehicleParams,
    kp: f64,
    ki: f64,
) -> Result<Vec<f64>> {
    let mut p = params.clone();
    p.controller.kp = kp;
    p.controller.ki = ki;
    let init = PlantState::at_speed(cycle.omega_ref[0], 50.0);
    let opts = PlantOptions {
        auto_clutch: false,
        ..Default::default()
    };
    let log = simulate(cycle, &mut ZeroTorquePolicy, &p, &init, &opts)?;
    Ok(log.omega)
}

/// Fit (K_p, K_i) by minimizing the squared speed mismatch between the
/// measured response and the simulated model, derivative-free in log-gain
/// space so positivity is structural.
pub fn fit_pi_gains(
    cycle: &DriveCycleInput,
    omega_meas: &[f64],
    params: &VehicleParams,
    cfg: &PiFitConfig,
) -> Result<PiFit> {
    // The measurement grid is the plant grid of a simulation with dt 0.005.
    let expected = ((cycle.duration() / 0.005).round() as usize) + 1;
    if omega_meas.len() != expected {
        return Err(IdentError::InsufficientData(format!(
            "expected {expected} speed samples on the plant grid, got {}",
            omega_meas.len()
        )));
    }
    let spread = cycle
        .omega_ref
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if spread.1 - spread.0 < 1.0 * RPM {
        return Ok(PiFit {
            kp: cfg.kp0,
            ki: cfg.ki0,
            cost: 0.0,
            simulations: 0,
            converged: false,
            non_identifiable: true,
        });
    }

    let mut simulations = 0usize;
    let mut cost_of = |log_gains: &[f64]| -> f64 {
        let (kp, ki) = (log_gains[0].exp(), log_gains[1].exp());
        simulations += 1;
        match simulate_speed(cycle, params, kp, ki) {
            Ok(omega) => omega
                .iter()
                .zip(omega_meas)
                .map(|(a, b)| (a - b) * (a - b))
                .sum(),
            Err(_) => 1e30,
        }
    };

    let per_restart = cfg.budget / cfg.restarts.max(1);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let starts = [
        (cfg.kp0, cfg.ki0),
        (cfg.kp0 * 4.0, cfg.ki0 * 0.5),
        (cfg.kp0 * 0.5, cfg.ki0 * 4.0),
    ];
    for (kp0, ki0) in starts.iter().take(cfg.restarts.max(1)) {
        let x0 = match &best {
            // Later restarts refine around the incumbent.
            Some((x, _)) => x.clone(),
            None => vec![kp0.ln(), ki0.ln()],
        };
        let (x, v, _) = nelder_mead(&mut cost_of, &x0, 0.4, per_restart);
        if best.as_ref().map(|(_, bv)| v < *bv).unwrap_or(true) {
            best = Some((x, v));
        }
    }
    let (x, cost) = best.unwrap();
    let converged = simulations <= cfg.budget + 3;
    Ok(PiFit {
        kp: x[0].exp(),
        ki: x[1].exp(),
        cost,
        simulations,
        converged,
        non_identifiable: false,
    })
}
