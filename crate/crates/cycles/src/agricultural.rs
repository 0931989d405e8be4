//! Constant-operating-point agricultural cycle: fixed engine speed reference
//! and a fluctuating PTO load around its mean.

use emslab_powertrain::{VehicleParams, RPM};
use emslab_sim::DriveCycleInput;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CycleError, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AgriculturalSpec {
    pub minutes: f64,
    pub omega_ref_rpm: f64,
    /// Mean PTO torque, N·m.
    pub pto_mean: f64,
    /// Standard deviation of the band-limited PTO fluctuation, N·m.
    pub pto_sigma: f64,
    /// Fluctuation bandwidth, Hz.
    pub pto_cutoff_hz: f64,
    pub gear: usize,
    pub seed: u64,
    pub dt: f64,
    pub i_aux: f64,
}

impl Default for AgriculturalSpec {
    fn default() -> Self {
        AgriculturalSpec {
            minutes: 5.0,
            omega_ref_rpm: 1200.0,
            pto_mean: 100.0,
            pto_sigma: 10.0,
            pto_cutoff_hz: 0.5,
            gear: 2,
            seed: 11,
            dt: 0.05,
            i_aux: 5.0,
        }
    }
}

pub fn build_agricultural_cycle(
    spec: &AgriculturalSpec,
    params: &VehicleParams,
) -> Result<DriveCycleInput> {
    if spec.minutes <= 0.0 || spec.dt <= 0.0 {
        return Err(CycleError::BadSpec("duration and dt must be positive".into()));
    }
    let n = (spec.minutes * 60.0 / spec.dt).round() as usize + 1;
    let omega_ref = spec.omega_ref_rpm * RPM;

    let mut t_pto = vec![spec.pto_mean; n];
    if spec.pto_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        // One-pole low-pass driven by white noise, scaled so the filtered
        // series has the requested stationary deviation.
        let a = 1.0 - (-std::f64::consts::TAU * spec.pto_cutoff_hz * spec.dt).exp();
        let sigma_w = spec.pto_sigma / (a / (2.0 - a)).sqrt();
        let normal = rand_distr_standard(&mut rng, n, sigma_w);
        let mut y = 0.0;
        for (i, w) in normal.iter().enumerate() {
            y += a * (w - y);
            t_pto[i] = spec.pto_mean + y;
        }
        // Pin the sample mean exactly on the requested value.
        let mean = t_pto.iter().sum::<f64>() / n as f64;
        let shift = spec.pto_mean - mean;
        for v in t_pto.iter_mut() {
            *v = (*v + shift).max(0.0);
        }
    }

    let cycle = DriveCycleInput {
        dt: spec.dt,
        omega_ref: vec![omega_ref; n],
        gear: vec![spec.gear; n],
        brake_force: vec![0.0; n],
        t_pto,
        i_b_aux: vec![spec.i_aux; n],
        slope: vec![0.0; n],
    };
    cycle
        .validate(params)
        .map_err(|e| CycleError::Infeasible(e.to_string()))?;
    Ok(cycle)
}

/// Box-Muller standard normals scaled by sigma; avoids pulling a heavier
/// distribution dependency for one use.
fn rand_distr_standard(rng: &mut ChaCha8Rng, n: usize, sigma: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let u1: f64 = rng.random_range(1e-12..1.0);
        let u2: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let r = (-2.0 * u1.ln()).sqrt();
        out.push(sigma * r * u2.cos());
        if out.len() < n {
            out.push(sigma * r * u2.sin());
        }
    }
    out
}
