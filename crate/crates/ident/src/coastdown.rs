//! Coasting-down coefficient recovery from a free-deceleration log.

use emslab_powertrain::VehicleParams;
use emslab_sim::SimLog;
use nalgebra::{DMatrix, DVector};

use crate::{IdentError, Result};

/// Least-squares (A, B, C) of the coasting-down force from a clutch-open
/// deceleration on flat road with the PTO disconnected. Mass and the gearbox
/// loss model are taken as known.
pub fn fit_coastdown(log: &SimLog, params: &VehicleParams) -> Result<(f64, f64, f64)> {
    if log.len() < 16 {
        return Err(IdentError::InsufficientData("log too short".into()));
    }
    let v_max = log.v.iter().cloned().fold(f64::MIN, f64::max);
    let v_min = log.v.iter().cloned().fold(f64::MAX, f64::min);
    if v_max - v_min < 3.0 {
        return Err(IdentError::InsufficientData(format!(
            "speed sweep spans only {:.2} m/s (need 3)",
            v_max - v_min
        )));
    }
    let loss = &params.loss;
    let dt = log.dt;
    let mut rows = Vec::new();
    let mut rhs_vals = Vec::new();
    for i in 1..log.len() - 1 {
        let v = log.v[i];
        if v < 0.3 {
            continue;
        }
        let dv = (log.v[i + 1] - log.v[i - 1]) / (2.0 * dt);
        // M v̇ v = −P_gb − P_cd  →  F_cd = −M v̇ − P_gb / v
        let tau = loss.gear_ratio(log.gear[i])?;
        let omega_gb = log.omega[i] / tau;
        let p_gb = (omega_gb * loss.gearbox_a + loss.gearbox_b) * omega_gb * omega_gb;
        let f_cd = -loss.mass * dv - p_gb / v;
        rows.push([v * v, v, 1.0]);
        rhs_vals.push(f_cd);
    }
    if rows.len() < 8 {
        return Err(IdentError::InsufficientData(
            "too few usable samples after filtering".into(),
        ));
    }
    let design = DMatrix::from_fn(rows.len(), 3, |r, c| rows[r][c]);
    let rhs = DVector::from_vec(rhs_vals);
    let sol = design
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| IdentError::Degenerate(e.to_string()))?;
    // Returned in (A, B, C) order of the force polynomial constant/linear/quad.
    Ok((sol[2], sol[1], sol[0]))
}
