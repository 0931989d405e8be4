//! Time-indexed simulation record and derived metrics.

use std::path::Path;

use crate::error::{Result, SimError};
use crate::policy::SolveDiag;

/// Energy bookkeeping integrated alongside the plant states with the same
/// integrator, so the balance identities hold to round-off.
#[derive(Debug, Clone, Copy, Default)]
pub struct EnergyLedger {
    /// ∫ λ_f ṁ_f — chemical energy of the injected fuel, J.
    pub fuel: f64,
    /// ∫ M v̇ v — kinetic energy change, J.
    pub kinetic: f64,
    /// ∫ F_cd v, J.
    pub coastdown: f64,
    /// ∫ F_br v, J.
    pub brake: f64,
    /// ∫ T_pto Ω τ_pto, J.
    pub pto: f64,
    /// ∫ ξ T_fan Ω, J.
    pub fan: f64,
    /// ∫ T_gb Ω_gb, J.
    pub gearbox: f64,
    /// ∫ (P_f − ξ T_ice Ω) — combustion and engine-friction losses, J.
    pub ice_loss: f64,
    /// ∫ (P_elec − T_em Ω) — machine and inverter losses, J.
    pub em_loss: f64,
    /// ∫ P_elec — battery-side electrical energy drawn by the EM, J.
    pub em_electrical: f64,
}

impl EnergyLedger {
    /// Residual of the power balance; zero up to integrator round-off.
    pub fn balance_residual(&self) -> f64 {
        self.fuel
            - (self.kinetic
                + self.coastdown
                + self.brake
                + self.pto
                + self.fan
                + self.gearbox
                + self.ice_loss
                + self.em_loss
                - self.em_electrical)
    }
}

/// One row per plant step.
#[derive(Debug, Clone, Default)]
pub struct SimLog {
    pub dt: f64,
    pub t: Vec<f64>,
    pub omega: Vec<f64>,
    pub omega_ref: Vec<f64>,
    pub omega_ref_filtered: Vec<f64>,
    pub v: Vec<f64>,
    pub gear: Vec<usize>,
    pub xi: Vec<bool>,
    pub t_ice: Vec<f64>,
    pub t_em: Vec<f64>,
    pub t_fan: Vec<f64>,
    pub t_gb: Vec<f64>,
    pub i_b: Vec<f64>,
    pub v_b: Vec<f64>,
    pub fuel_rate: Vec<f64>,
    pub m_f: Vec<f64>,
    pub soc: Vec<f64>,
    pub x_ice: Vec<f64>,
    pub brake_force: Vec<f64>,
    pub t_pto: Vec<f64>,
    pub i_b_aux: Vec<f64>,
    pub slope: Vec<f64>,
    /// Sparse solver diagnostics: (row index, diag).
    pub solves: Vec<(usize, SolveDiag)>,
    pub energy: EnergyLedger,
    /// Count of plant-side clamps applied to the commanded EM torque.
    pub t_em_clamped_steps: usize,
}

impl SimLog {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn total_fuel_kg(&self) -> f64 {
        self.m_f.last().copied().unwrap_or(0.0)
    }

    pub fn delta_soc(&self) -> f64 {
        match (self.soc.first(), self.soc.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Normalized speed-tracking RMSE in percent:
    /// `sqrt(mean((Ω − Ω_ref)²)) / mean(Ω_ref) × 100` over the whole run.
    pub fn tracking_rmse_percent(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(SimError::InvalidCycle("empty log".into()));
        }
        let n = self.len() as f64;
        let mean_ref: f64 = self.omega_ref.iter().sum::<f64>() / n;
        if mean_ref.abs() < 1e-12 {
            return Err(SimError::InvalidCycle(
                "zero-mean reference, RMSE undefined".into(),
            ));
        }
        let mse: f64 = self
            .omega
            .iter()
            .zip(&self.omega_ref)
            .map(|(w, r)| (w - r) * (w - r))
            .sum::<f64>()
            / n;
        Ok(mse.sqrt() / mean_ref * 100.0)
    }

    /// Share of EMS solves flagged converged.
    pub fn solve_convergence_ratio(&self) -> Option<f64> {
        if self.solves.is_empty() {
            return None;
        }
        let ok = self.solves.iter().filter(|(_, d)| d.converged).count();
        Some(ok as f64 / self.solves.len() as f64)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "t",
            "omega",
            "omega_ref",
            "omega_ref_filtered",
            "v",
            "gear",
            "xi",
            "t_ice",
            "t_em",
            "t_fan",
            "t_gb",
            "i_b",
            "v_b",
            "fuel_rate",
            "m_f",
            "soc",
            "x_ice",
            "brake_N",
            "t_pto_Nm",
            "i_aux_A",
            "slope_rad",
            "solve_status",
            "iters",
            "solve_ms",
            "cost",
            "cost_fuel",
            "cost_soc",
            "cost_track",
            "cost_du",
        ])?;
        let mut solve_iter = self.solves.iter().peekable();
        for i in 0..self.len() {
            let diag = match solve_iter.peek() {
                Some((row, d)) if *row == i => {
                    let d = d.clone();
                    solve_iter.next();
                    Some(d)
                }
                _ => None,
            };
            let (status, iters, ms, c, cf, cs, ct, cd) = match &diag {
                Some(d) => (
                    d.status.clone(),
                    d.iters.to_string(),
                    format!("{:.3}", d.solve_ms),
                    format!("{:.6e}", d.cost),
                    format!("{:.6e}", d.cost_fuel),
                    format!("{:.6e}", d.cost_soc),
                    format!("{:.6e}", d.cost_track),
                    format!("{:.6e}", d.cost_du),
                ),
                None => Default::default(),
            };
            w.write_record(&[
                format!("{:.6}", self.t[i]),
                format!("{:.9}", self.omega[i]),
                format!("{:.9}", self.omega_ref[i]),
                format!("{:.9}", self.omega_ref_filtered[i]),
                format!("{:.9}", self.v[i]),
                self.gear[i].to_string(),
                (self.xi[i] as u8).to_string(),
                format!("{:.6}", self.t_ice[i]),
                format!("{:.6}", self.t_em[i]),
                format!("{:.6}", self.t_fan[i]),
                format!("{:.6}", self.t_gb[i]),
                format!("{:.6}", self.i_b[i]),
                format!("{:.6}", self.v_b[i]),
                format!("{:.9e}", self.fuel_rate[i]),
                format!("{:.9e}", self.m_f[i]),
                format!("{:.9}", self.soc[i]),
                format!("{:.6}", self.x_ice[i]),
                format!("{:.3}", self.brake_force[i]),
                format!("{:.3}", self.t_pto[i]),
                format!("{:.3}", self.i_b_aux[i]),
                format!("{:.8}", self.slope[i]),
                status,
                iters,
                ms,
                c,
                cf,
                cs,
                ct,
                cd,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_perfect_tracking_is_zero() {
        let mut log = SimLog::default();
        log.t = vec![0.0, 1.0];
        log.omega = vec![100.0, 100.0];
        log.omega_ref = vec![100.0, 100.0];
        assert_eq!(log.tracking_rmse_percent().unwrap(), 0.0);
    }

    #[test]
    fn rmse_constant_offset_reference_case() {
        // 44 rpm constant error on a 2200 rpm constant reference → 2.0 %.
        let rpm = std::f64::consts::PI / 30.0;
        let mut log = SimLog::default();
        log.t = (0..100).map(|k| k as f64).collect();
        log.omega_ref = vec![2200.0 * rpm; 100];
        log.omega = vec![(2200.0 - 44.0) * rpm; 100];
        let rmse = log.tracking_rmse_percent().unwrap();
        assert!((rmse - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rmse_sinusoidal_error_analytic() {
        // Amplitude a on constant reference r → 100 a / (r √2).
        let (a, r) = (5.0, 200.0);
        let n = 40_000usize; // whole periods
        let mut log = SimLog::default();
        log.t = (0..n).map(|k| k as f64).collect();
        log.omega_ref = vec![r; n];
        log.omega = (0..n)
            .map(|k| r + a * (2.0 * std::f64::consts::PI * (k as f64) / 100.0).sin())
            .collect();
        let rmse = log.tracking_rmse_percent().unwrap();
        let expect = 100.0 * a / (r * 2.0f64.sqrt());
        assert!((rmse - expect).abs() < 1e-6 * expect, "{rmse} vs {expect}");
    }

    #[test]
    fn rmse_rejects_zero_reference() {
        let mut log = SimLog::default();
        log.t = vec![0.0];
        log.omega = vec![0.0];
        log.omega_ref = vec![0.0];
        assert!(log.tracking_rmse_percent().is_err());
    }
}
