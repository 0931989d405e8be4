//! Time-indexed exogenous inputs driving a simulation run.

use std::path::Path;

use emslab_powertrain::{VehicleParams, RPM};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Uniformly sampled drive cycle. All series share the grid; values are held
/// (zero-order) between samples and beyond the end.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DriveCycleInput {
    /// Grid spacing, s.
    pub dt: f64,
    /// Engine speed reference, rad/s.
    pub omega_ref: Vec<f64>,
    /// Engaged gear, 1-based.
    pub gear: Vec<usize>,
    /// Driver brake force, N.
    pub brake_force: Vec<f64>,
    /// PTO load torque at the PTO shaft, N·m.
    pub t_pto: Vec<f64>,
    /// Auxiliary battery current, A.
    pub i_b_aux: Vec<f64>,
    /// Road slope, rad.
    pub slope: Vec<f64>,
}

/// Inputs at one instant.
#[derive(Debug, Clone, Copy)]
pub struct CyclePoint {
    pub omega_ref: f64,
    pub gear: usize,
    pub brake_force: f64,
    pub t_pto: f64,
    pub i_b_aux: f64,
    pub slope: f64,
}

impl DriveCycleInput {
    pub fn len(&self) -> usize {
        self.omega_ref.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega_ref.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.len().saturating_sub(1) as f64
    }

    pub fn validate(&self, params: &VehicleParams) -> Result<()> {
        if self.dt <= 0.0 {
            return Err(SimError::InvalidCycle("dt must be positive".into()));
        }
        let n = self.len();
        if n < 2 {
            return Err(SimError::InvalidCycle("cycle needs >= 2 samples".into()));
        }
        for (name, len) in [
            ("gear", self.gear.len()),
            ("brake_force", self.brake_force.len()),
            ("t_pto", self.t_pto.len()),
            ("i_b_aux", self.i_b_aux.len()),
            ("slope", self.slope.len()),
        ] {
            if len != n {
                return Err(SimError::InvalidCycle(format!(
                    "series {name} has {len} samples, expected {n}"
                )));
            }
        }
        let n_gears = params.loss.gear_ratios.len();
        if let Some(&g) = self.gear.iter().find(|&&g| g == 0 || g > n_gears) {
            return Err(SimError::InvalidCycle(format!(
                "gear {g} outside 1..={n_gears}"
            )));
        }
        // References must sit inside the engine speed band; the clutch may
        // close at any time.
        for &w in &self.omega_ref {
            if w < params.ice.omega_min || w > params.ice.omega_max {
                return Err(SimError::InvalidCycle(format!(
                    "omega_ref {:.0} rpm outside engine limits",
                    w / RPM
                )));
            }
        }
        Ok(())
    }

    pub fn index_at(&self, t: f64) -> usize {
        let idx = (t / self.dt + 1e-9).floor() as usize;
        idx.min(self.len() - 1)
    }

    pub fn sample(&self, t: f64) -> CyclePoint {
        let i = self.index_at(t);
        CyclePoint {
            omega_ref: self.omega_ref[i],
            gear: self.gear[i],
            brake_force: self.brake_force[i],
            t_pto: self.t_pto[i],
            i_b_aux: self.i_b_aux[i],
            slope: self.slope[i],
        }
    }

    /// Constant-input cycle, useful for steps and steady scenarios.
    pub fn constant(omega_ref: f64, gear: usize, duration: f64, dt: f64) -> Self {
        let n = (duration / dt).ceil() as usize + 1;
        DriveCycleInput {
            dt,
            omega_ref: vec![omega_ref; n],
            gear: vec![gear; n],
            brake_force: vec![0.0; n],
            t_pto: vec![0.0; n],
            i_b_aux: vec![0.0; n],
            slope: vec![0.0; n],
        }
    }

    /// CSV with header `t,omega_ref_rpm,gear,brake_N,t_pto_Nm,i_aux_A,slope_rad`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "t",
            "omega_ref_rpm",
            "gear",
            "brake_N",
            "t_pto_Nm",
            "i_aux_A",
            "slope_rad",
        ])?;
        for i in 0..self.len() {
            w.write_record(&[
                format!("{:.6}", i as f64 * self.dt),
                format!("{:.9}", self.omega_ref[i] / RPM),
                format!("{}", self.gear[i]),
                format!("{:.6}", self.brake_force[i]),
                format!("{:.6}", self.t_pto[i]),
                format!("{:.6}", self.i_b_aux[i]),
                format!("{:.8}", self.slope[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut t = Vec::new();
        let mut cycle = DriveCycleInput {
            dt: 0.0,
            omega_ref: Vec::new(),
            gear: Vec::new(),
            brake_force: Vec::new(),
            t_pto: Vec::new(),
            i_b_aux: Vec::new(),
            slope: Vec::new(),
        };
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| SimError::InvalidCycle(format!("missing column {i}")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| SimError::InvalidCycle(format!("bad number: {e}")))
            };
            t.push(field(0)?);
            cycle.omega_ref.push(field(1)? * RPM);
            cycle.gear.push(field(2)? as usize);
            cycle.brake_force.push(field(3)?);
            cycle.t_pto.push(field(4)?);
            cycle.i_b_aux.push(field(5)?);
            cycle.slope.push(field(6)?);
        }
        if t.len() < 2 {
            return Err(SimError::InvalidCycle("cycle needs >= 2 samples".into()));
        }
        let dt = t[1] - t[0];
        for w in t.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-6 {
                return Err(SimError::InvalidCycle("non-uniform time grid".into()));
            }
        }
        cycle.dt = dt;
        Ok(cycle)
    }
}
