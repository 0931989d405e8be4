//! The 20 Hz controller: assemble, warm start, solve, apply the first move.

use std::sync::Arc;
use std::time::Instant;

use emslab_nlp::{solve, NlpSolution, SolveOptions, SolveStatus, Tolerances};
use emslab_powertrain::VehicleParams;
use emslab_sim::{EmsObservation, EmsPolicy, PolicyDecision, SolveDiag};

use crate::assemble::{assemble_nlp, Layout, Measurement};
use crate::config::MpcConfig;
use crate::penalty::{penalty_lookup, penalty_mean_from_maps};

/// Outcome of one controller tick.
#[derive(Debug, Clone)]
pub struct EmsDecision {
    pub t_em_applied: f64,
    /// Predicted state trajectory [Ω, m_f(g), SoC, x_ice] for nodes 1..=N.
    pub predicted: Vec<[f64; 4]>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub solve_time_s: f64,
    pub fallback: bool,
}

pub struct MpcPolicy {
    cfg: Arc<MpcConfig>,
    params: Arc<VehicleParams>,
    penalty_mean: f64,
    layout: Layout,
    prev: Option<NlpSolution>,
    pub last_decision: Option<EmsDecision>,
    derivatives_checked: bool,
}

impl MpcPolicy {
    pub fn new(cfg: MpcConfig, params: VehicleParams) -> crate::config::Result<Self> {
        cfg.validate()?;
        let penalty_mean = cfg
            .penalty
            .mean
            .unwrap_or_else(|| penalty_mean_from_maps(&params));
        let layout = Layout::new(cfg.horizon);
        Ok(MpcPolicy {
            cfg: Arc::new(cfg),
            params: Arc::new(params),
            penalty_mean,
            layout,
            prev: None,
            last_decision: None,
            derivatives_checked: false,
        })
    }

    pub fn penalty_mean(&self) -> f64 {
        self.penalty_mean
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn reset_warm_start(&mut self) {
        self.prev = None;
    }

    /// One controller tick against explicit measurements.
    pub fn step(&mut self, meas: &Measurement) -> (EmsDecision, SolveDiag) {
        let started = Instant::now();
        let (mut problem, layout) = assemble_nlp(meas, &self.cfg, &self.params, self.penalty_mean);
        if let Some(prev) = &self.prev {
            problem.x0 = layout.shifted_guess(prev);
            problem.warm = Some(layout.shifted_warm(prev));
        }
        if cfg!(debug_assertions) && !self.derivatives_checked {
            // One-time structural check of the AD path in debug builds.
            emslab_nlp::validate_derivatives(&problem, &problem.x0.clone(), 1e-4)
                .expect("model derivatives disagree with finite differences");
            self.derivatives_checked = true;
        }
        let opts = SolveOptions {
            tol: Tolerances {
                stat: self.cfg.solver_tol,
                feas: self.cfg.solver_tol,
                comp: self.cfg.solver_tol,
            },
            max_iter: self.cfg.solver_max_iter,
            mu_init: 0.1,
            trace: None,
        };
        let mut solved = solve(&problem, &opts);
        // A stale shifted trajectory (e.g. right after a reference jump) can
        // defeat the warm start; one cold retry is cheap at this scale.
        let mut retried_cold = false;
        if !matches!(&solved, Ok(s) if s.status == SolveStatus::Converged) && self.prev.is_some() {
            let (mut cold, _) = assemble_nlp(meas, &self.cfg, &self.params, self.penalty_mean);
            let _ = &mut cold;
            solved = solve(&cold, &opts);
            retried_cold = true;
        }
        let solve_time_s = started.elapsed().as_secs_f64();
        let _ = retried_cold;

        let (decision, diag) = match solved {
            Ok(sol) if sol.status == SolveStatus::Converged => {
                let t_em = sol.x[layout.t_em(1)];
                let predicted = self.extract_trajectory(meas, &sol);
                let costs = self.cost_components(meas, &sol);
                let diag = SolveDiag {
                    status: "converged".into(),
                    converged: true,
                    iters: sol.iterations,
                    solve_ms: solve_time_s * 1e3,
                    cost: costs[0],
                    cost_fuel: costs[1],
                    cost_soc: costs[2],
                    cost_track: costs[3],
                    cost_du: costs[4],
                };
                let decision = EmsDecision {
                    t_em_applied: t_em,
                    predicted,
                    status: sol.status,
                    iterations: sol.iterations,
                    solve_time_s,
                    fallback: false,
                };
                self.prev = Some(sol);
                (decision, diag)
            }
            Ok(sol) => {
                // The engine PI alone is stabilizing; coast this period.
                self.prev = None;
                let diag = SolveDiag {
                    status: match sol.status {
                        SolveStatus::MaxIter => "max_iter".into(),
                        _ => "numerical_failure".into(),
                    },
                    converged: false,
                    iters: sol.iterations,
                    solve_ms: solve_time_s * 1e3,
                    ..Default::default()
                };
                (
                    EmsDecision {
                        t_em_applied: 0.0,
                        predicted: Vec::new(),
                        status: sol.status,
                        iterations: sol.iterations,
                        solve_time_s,
                        fallback: true,
                    },
                    diag,
                )
            }
            Err(e) => {
                self.prev = None;
                let diag = SolveDiag {
                    status: format!("error: {e}"),
                    converged: false,
                    solve_ms: solve_time_s * 1e3,
                    ..Default::default()
                };
                (
                    EmsDecision {
                        t_em_applied: 0.0,
                        predicted: Vec::new(),
                        status: SolveStatus::NumericalFailure,
                        iterations: 0,
                        solve_time_s,
                        fallback: true,
                    },
                    diag,
                )
            }
        };
        self.last_decision = Some(decision.clone());
        (decision, diag)
    }

    fn extract_trajectory(&self, meas: &Measurement, sol: &NlpSolution) -> Vec<[f64; 4]> {
        let mut out = Vec::with_capacity(self.layout.n);
        out.push([meas.omega, 0.0, meas.soc, meas.x_ice]);
        for k in 2..=self.layout.n {
            out.push([
                sol.x[self.layout.state(k, 0)],
                sol.x[self.layout.state(k, 1)],
                sol.x[self.layout.state(k, 2)],
                sol.x[self.layout.state(k, 3)],
            ]);
        }
        out
    }

    /// `[total, fuel, soc, track, du]` cost pieces of a solution.
    fn cost_components(&self, meas: &Measurement, sol: &NlpSolution) -> [f64; 5] {
        let n = self.layout.n;
        let cfg = &self.cfg;
        let c_fuel_g = cfg.c_fuel(&self.params) / 1000.0;
        let c_soc = cfg.c_soc(&self.params);
        let pen = penalty_lookup(meas.soc, &cfg.penalty, self.penalty_mean);
        let fuel = c_fuel_g * sol.x[self.layout.state(n, 1)];
        let soc = pen * c_soc * (meas.soc - sol.x[self.layout.state(n, 2)]);
        let w_track = cfg.c_track * cfg.alpha_track;
        let mut track = 0.0;
        for k in 2..=n {
            let r = meas.omega_ref + meas.omega_ref_rate * cfg.dt * (k - 1) as f64;
            let e = sol.x[self.layout.state(k, 0)] - r;
            track += w_track * e * e;
        }
        let mut du = 0.0;
        for k in 1..n {
            let d = sol.x[self.layout.t_em(k + 1)] - sol.x[self.layout.t_em(k)];
            du += cfg.c_control * d * d;
        }
        [fuel + soc + track + du, fuel, soc, track, du]
    }
}

impl EmsPolicy for MpcPolicy {
    fn decide(&mut self, obs: &EmsObservation) -> PolicyDecision {
        let meas = Measurement {
            omega: obs.state.omega,
            soc: obs.state.soc,
            x_ice: obs.state.x_ice,
            omega_ref: obs.omega_ref,
            omega_ref_rate: obs.omega_ref_rate,
            tau_gb: obs.tau_gb,
            t_pto: obs.t_pto,
            i_aux: obs.i_b_aux,
        };
        let (decision, diag) = self.step(&meas);
        PolicyDecision {
            t_em: decision.t_em_applied,
            diag: Some(diag),
        }
    }
}
