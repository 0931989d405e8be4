//! SoC-dependent battery-consumption penalty: discharging gets more expensive
//! as the battery empties, recharging more attractive, which is what makes the
//! strategy charge-sustaining without a terminal SoC constraint.

use emslab_powertrain::VehicleParams;

use crate::config::PenaltyConfig;

/// Band-average of the penalty: the mean ratio between motor and engine
/// efficiency over a paired load/speed grid of the shipped maps.
pub fn penalty_mean_from_maps(params: &VehicleParams) -> f64 {
    let n_omega = 24;
    let n_load = 12;
    let mut acc = 0.0;
    let mut count = 0usize;
    for i in 0..n_omega {
        let omega = params.ice.omega_min
            + (params.ice.omega_max - params.ice.omega_min) * i as f64 / (n_omega - 1) as f64;
        let t_ice_max: f64 = params.ice.torque_max(omega);
        let t_em_max: f64 = params.em.t_max_curve(omega);
        for j in 0..n_load {
            let f = 0.15 + 0.85 * j as f64 / (n_load - 1) as f64;
            let eta_ice: f64 = params.ice.efficiency(f * t_ice_max, omega);
            let eta_em: f64 = params.em.efficiency(f * t_em_max, omega);
            acc += eta_em / eta_ice;
            count += 1;
        }
    }
    acc / count as f64
}

/// Penalty multiplier at a given SoC.
pub fn penalty_lookup(soc: f64, cfg: &PenaltyConfig, mean: f64) -> f64 {
    mean * (1.0 + cfg.amplitude * ((cfg.center - soc) / cfg.width).tanh())
}
