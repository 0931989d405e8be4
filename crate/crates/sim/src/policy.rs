//! Contract between the simulator and an energy-management policy.

use emslab_powertrain::PlantState;

/// Measurements handed to the policy at its own sampling rate. Brake force is
/// deliberately absent: it is an unmeasured disturbance from the policy's
/// point of view.
#[derive(Debug, Clone, Copy)]
pub struct EmsObservation {
    pub t: f64,
    pub state: PlantState,
    /// Vehicle speed, m/s.
    pub v: f64,
    pub gear: usize,
    pub tau_gb: f64,
    /// Raw driver reference, rad/s.
    pub omega_ref: f64,
    /// Causal estimate of the reference rate, rad/s².
    pub omega_ref_rate: f64,
    pub t_pto: f64,
    pub i_b_aux: f64,
}

/// Per-solve diagnostics appended to the log on EMS rows.
#[derive(Debug, Clone, Default)]
pub struct SolveDiag {
    pub status: String,
    pub converged: bool,
    pub iters: usize,
    pub solve_ms: f64,
    pub cost: f64,
    pub cost_fuel: f64,
    pub cost_soc: f64,
    pub cost_track: f64,
    pub cost_du: f64,
}

#[derive(Debug, Clone, Default)]
pub struct PolicyDecision {
    pub t_em: f64,
    pub diag: Option<SolveDiag>,
}

/// An energy-management policy decides the EM torque at 20 Hz.
pub trait EmsPolicy {
    fn decide(&mut self, obs: &EmsObservation) -> PolicyDecision;
}

/// Degenerate policy: never uses the electric motor.
#[derive(Debug, Default, Clone)]
pub struct ZeroTorquePolicy;

impl EmsPolicy for ZeroTorquePolicy {
    fn decide(&mut self, _obs: &EmsObservation) -> PolicyDecision {
        PolicyDecision::default()
    }
}

/// Replays a precomputed torque trajectory sampled on a uniform grid.
#[derive(Debug, Clone)]
pub struct TrajectoryPolicy {
    pub dt: f64,
    pub t_em: Vec<f64>,
}

impl EmsPolicy for TrajectoryPolicy {
    fn decide(&mut self, obs: &EmsObservation) -> PolicyDecision {
        let idx = ((obs.t / self.dt + 1e-9).floor() as usize).min(self.t_em.len() - 1);
        PolicyDecision {
            t_em: self.t_em[idx],
            diag: None,
        }
    }
}
