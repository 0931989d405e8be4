//! Multiple-shooting transcription of the energy-management program: decision
//! variables are the EM torque sequence and the state trajectory, linked by
//! per-step Euler dynamics as equality constraints; SoC bounds (with an L1
//! slack), speed-dependent EM torque limits and SoC-rate (current) bounds are
//! the hard inequalities.

use std::sync::Arc;

use emslab_nlp::{
    Block, Curvature, LinearBlock, NlpProblem, NlpSolution, QuadraticBlock, VecBlockFn, WarmStart,
};
use emslab_num::{Dual, Scalar};
use emslab_powertrain::VehicleParams;
use nalgebra::DMatrix;

use crate::config::MpcConfig;
use crate::model::{predict_model_step, NodeInputs};
use crate::penalty::penalty_lookup;

/// Characteristic magnitudes of [Ω, m_f(g), SoC, x_ice] used for variable and
/// residual scaling.
pub const STATE_SCALE: [f64; 4] = [200.0, 1.0, 100.0, 200.0];
pub const TORQUE_SCALE: f64 = 200.0;
const OBJ_SCALE: f64 = 1e-5;

/// Measured quantities the controller sees at one tick.
#[derive(Debug, Clone, Copy)]
pub struct Measurement {
    pub omega: f64,
    pub soc: f64,
    pub x_ice: f64,
    pub omega_ref: f64,
    pub omega_ref_rate: f64,
    pub tau_gb: f64,
    pub t_pto: f64,
    pub i_aux: f64,
}

/// Index bookkeeping of the assembled program.
#[derive(Debug, Clone)]
pub struct Layout {
    pub n: usize,
    pub n_vars: usize,
    /// Variables of the OP1 structure itself (torques and state nodes).
    pub n_primary: usize,
    pub n_slack: usize,
    pub m_eq_rows: usize,
    state_base: usize,
    slack_base: usize,
    n_obj_blocks: usize,
    n_blocks_total: usize,
    soc_rows: usize,
    torque_rows: usize,
    rate_rows: usize,
}

impl Layout {
    pub fn new(n_horizon: usize) -> Self {
        let n = n_horizon;
        let n_primary = n + 4 * (n - 1);
        let n_slack = n - 1;
        let state_base = n;
        let slack_base = n + 4 * (n - 1);
        let n_obj_blocks = 2 + 3 * (n - 1);
        // objective + shooting + (soc, torque, rate) inequality blocks
        // + internal bound blocks (T_em(1) and the slacks).
        let n_blocks_total = n_obj_blocks + (n - 1) + 3 * (n - 1) + 1 + (n - 1);
        Layout {
            n,
            n_vars: n_primary + n_slack,
            n_primary,
            n_slack,
            m_eq_rows: 4 * (n - 1),
            state_base,
            slack_base,
            n_obj_blocks,
            n_blocks_total,
            soc_rows: 0,
            torque_rows: 2 * (n - 1),
            rate_rows: 4 * (n - 1),
        }
    }

    /// Variable index of T_em(k), k = 1..=N.
    pub fn t_em(&self, k: usize) -> usize {
        debug_assert!((1..=self.n).contains(&k));
        k - 1
    }

    /// Variable index of state component j of node k, k = 2..=N.
    pub fn state(&self, k: usize, j: usize) -> usize {
        debug_assert!((2..=self.n).contains(&k) && j < 4);
        self.state_base + 4 * (k - 2) + j
    }

    /// Variable index of the SoC slack of node k, k = 2..=N.
    pub fn slack(&self, k: usize) -> usize {
        debug_assert!((2..=self.n).contains(&k));
        self.slack_base + (k - 2)
    }

    fn eq_block_flat(&self, gap: usize) -> usize {
        self.n_obj_blocks + gap
    }

    /// Shifted primal guess: the previous optimal trajectory moved one step,
    /// last node duplicated; the first node is the fresh measurement by
    /// construction (it is not a variable).
    pub fn shifted_guess(&self, prev: &NlpSolution) -> Vec<f64> {
        let n = self.n;
        let mut x0 = vec![0.0; self.n_vars];
        for k in 1..=n {
            let src = if k < n { k + 1 } else { n };
            x0[self.t_em(k)] = prev.x[self.t_em(src)];
        }
        let mf_consumed = prev.x[self.state(2, 1)];
        for k in 2..=n {
            let src = if k < n { k + 1 } else { n };
            for j in 0..4 {
                x0[self.state(k, j)] = prev.x[self.state(src, j)];
            }
            x0[self.state(k, 1)] -= mf_consumed;
            x0[self.slack(k)] = prev.x[self.slack(src)];
        }
        x0
    }

    /// Shifted duals and curvature elements.
    pub fn shifted_warm(&self, prev: &NlpSolution) -> WarmStart {
        let n = self.n;
        let gaps = n - 1;
        let mut y_eq = vec![0.0; self.m_eq_rows];
        for g in 0..gaps {
            let src = (g + 1).min(gaps - 1);
            for j in 0..4 {
                y_eq[4 * g + j] = prev.y_eq[4 * src + j];
            }
        }
        let shift_node_rows = |dst: &mut [f64], src: &[f64], base: usize, per: usize| {
            for k in 0..gaps {
                let s = (k + 1).min(gaps - 1);
                for j in 0..per {
                    dst[base + per * k + j] = src[base + per * s + j];
                }
            }
        };
        let mut z_lo = prev.z_lo.clone();
        let mut z_hi = prev.z_hi.clone();
        let mut s_lo = prev.warm.s_lo.clone();
        let mut s_hi = prev.warm.s_hi.clone();
        let mut groups: Vec<(&mut Vec<f64>, &Vec<f64>)> = vec![
            (&mut z_lo, &prev.z_lo),
            (&mut z_hi, &prev.z_hi),
        ];
        if s_lo.len() == prev.z_lo.len() {
            groups.push((&mut s_lo, &prev.warm.s_lo));
            groups.push((&mut s_hi, &prev.warm.s_hi));
        }
        for (dst, src) in groups {
            shift_node_rows(dst, src, self.soc_rows, 2);
            shift_node_rows(dst, src, self.torque_rows, 2);
            shift_node_rows(dst, src, self.rate_rows, 1);
            // Bound rows (t_em(1), slacks) keep their previous values.
        }
        let mut bfgs: Vec<Option<DMatrix<f64>>> = prev.warm.bfgs.clone();
        if bfgs.len() == self.n_blocks_total {
            for g in 0..gaps {
                let src = (g + 1).min(gaps - 1);
                bfgs[self.eq_block_flat(g)] = prev.warm.bfgs[self.eq_block_flat(src)].clone();
            }
        }
        WarmStart {
            y_eq,
            z_lo,
            z_hi,
            s_lo,
            s_hi,
            bfgs,
            mu: prev.warm.mu,
        }
    }
}

/// Shooting-gap residual: `(X(k+1) − X(k) − Δs F(X(k), T_em(k))) / scale`.
struct ShootingBlock {
    params: Arc<VehicleParams>,
    cfg: Arc<MpcConfig>,
    inp: NodeInputs,
    /// Present only for the first gap, where X(1) is the measurement.
    x1: Option<[f64; 4]>,
}

impl ShootingBlock {
    fn residual<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let (xk, t_em, next_off) = match self.x1 {
            Some(x1) => (
                [
                    S::from_f64(x1[0]),
                    S::from_f64(x1[1]),
                    S::from_f64(x1[2]),
                    S::from_f64(x1[3]),
                ],
                x[0],
                1,
            ),
            None => ([x[0], x[1], x[2], x[3]], x[4], 5),
        };
        let pred = predict_model_step(&xk, t_em, &self.inp, &self.params, &self.cfg);
        for j in 0..4 {
            out[j] = (x[next_off + j] - pred[j]) / STATE_SCALE[j];
        }
    }
}

impl VecBlockFn for ShootingBlock {
    fn dim(&self) -> usize {
        4
    }
    fn eval_f64(&self, x: &[f64], out: &mut [f64]) {
        self.residual(x, out)
    }
    fn eval_dual(&self, x: &[Dual], out: &mut [Dual]) {
        self.residual(x, out)
    }
}

/// Speed-dependent EM torque limits at one node: rows
/// `(T_em − T_min(Ω))/s ≥ 0` and `(T_max(Ω) − T_em)/s ≥ 0`.
struct TorqueLimitBlock {
    params: Arc<VehicleParams>,
}

impl TorqueLimitBlock {
    fn rows<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let (t_em, omega) = (x[0], x[1]);
        out[0] = (t_em - self.params.em.t_min_curve(omega)) / TORQUE_SCALE;
        out[1] = (self.params.em.t_max_curve(omega) - t_em) / TORQUE_SCALE;
    }
}

impl VecBlockFn for TorqueLimitBlock {
    fn dim(&self) -> usize {
        2
    }
    fn eval_f64(&self, x: &[f64], out: &mut [f64]) {
        self.rows(x, out)
    }
    fn eval_dual(&self, x: &[Dual], out: &mut [Dual]) {
        self.rows(x, out)
    }
}

/// Assemble the program for one control tick.
pub fn assemble_nlp(
    meas: &Measurement,
    cfg: &Arc<MpcConfig>,
    params: &Arc<VehicleParams>,
    penalty_mean: f64,
) -> (NlpProblem, Layout) {
    let n = cfg.horizon;
    let layout = Layout::new(n);
    let mut p = NlpProblem::new(layout.n_vars);
    p.obj_scale = OBJ_SCALE;

    // Variable scaling.
    for k in 1..=n {
        p.scaling[layout.t_em(k)] = TORQUE_SCALE;
    }
    for k in 2..=n {
        for j in 0..4 {
            p.scaling[layout.state(k, j)] = STATE_SCALE[j];
        }
        p.scaling[layout.slack(k)] = 1.0;
    }

    // Predicted reference per node (constant measured derivative).
    let refs: Vec<f64> = (0..n)
        .map(|i| meas.omega_ref + meas.omega_ref_rate * cfg.dt * i as f64)
        .collect();

    let c_fuel_per_g = cfg.c_fuel(params) / 1000.0;
    let c_soc = cfg.c_soc(params);
    let pen = penalty_lookup(meas.soc, &cfg.penalty, penalty_mean);
    let w_track = cfg.c_track * cfg.alpha_track;

    // Objective: terminal fuel, penalty-weighted battery draw, tracking,
    // control smoothness, slack penalty.
    p.objective.push(Block::new(
        vec![layout.state(n, 1)],
        Box::new(LinearBlock::single(vec![c_fuel_per_g], 0.0)),
        Curvature::Quadratic,
    ));
    p.objective.push(Block::new(
        vec![layout.state(n, 2)],
        Box::new(LinearBlock::single(
            vec![-pen * c_soc],
            pen * c_soc * meas.soc,
        )),
        Curvature::Quadratic,
    ));
    for k in 2..=n {
        let r = refs[k - 1];
        p.objective.push(Block::new(
            vec![layout.state(k, 0)],
            Box::new(QuadraticBlock {
                q: DMatrix::from_row_slice(1, 1, &[2.0 * w_track]),
                c: vec![-2.0 * w_track * r],
                b: w_track * r * r,
            }),
            Curvature::Quadratic,
        ));
    }
    for k in 1..n {
        let w = cfg.c_control;
        p.objective.push(Block::new(
            vec![layout.t_em(k), layout.t_em(k + 1)],
            Box::new(QuadraticBlock {
                q: DMatrix::from_row_slice(2, 2, &[2.0 * w, -2.0 * w, -2.0 * w, 2.0 * w]),
                c: vec![0.0, 0.0],
                b: 0.0,
            }),
            Curvature::Quadratic,
        ));
    }
    let slack_w = cfg.soc_slack_penalty_factor * c_soc;
    for k in 2..=n {
        p.objective.push(Block::new(
            vec![layout.slack(k)],
            Box::new(LinearBlock::single(vec![slack_w], 0.0)),
            Curvature::Quadratic,
        ));
    }

    // Shooting equalities.
    let x1 = [meas.omega, 0.0, meas.soc, meas.x_ice];
    for gap in 0..(n - 1) {
        let inp = NodeInputs {
            tau_gb: meas.tau_gb,
            omega_ref: refs[gap],
            t_pto: meas.t_pto,
            i_aux: meas.i_aux,
        };
        let (vars, x1_opt) = if gap == 0 {
            let mut vars = vec![layout.t_em(1)];
            vars.extend((0..4).map(|j| layout.state(2, j)));
            (vars, Some(x1))
        } else {
            let k = gap + 1; // gap links node k to k+1
            let mut vars: Vec<usize> = (0..4).map(|j| layout.state(k, j)).collect();
            vars.push(layout.t_em(k));
            vars.extend((0..4).map(|j| layout.state(k + 1, j)));
            (vars, None)
        };
        p.eq.push(Block::new(
            vars,
            Box::new(ShootingBlock {
                params: Arc::clone(params),
                cfg: Arc::clone(cfg),
                inp,
                x1: x1_opt,
            }),
            Curvature::None,
        ));
    }

    // SoC window with L1 slack.
    let batt = &params.battery;
    for k in 2..=n {
        p.ineq.push(Block::new(
            vec![layout.state(k, 2), layout.slack(k)],
            Box::new(LinearBlock {
                a: DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]),
                b: vec![0.0, 0.0],
            }),
            Curvature::Quadratic,
        ));
        p.ineq_lower.extend([batt.soc_min, f64::NEG_INFINITY]);
        p.ineq_upper.extend([f64::INFINITY, batt.soc_max]);
    }
    // Speed-dependent torque limits for nodes whose speed is a variable.
    for k in 2..=n {
        p.ineq.push(Block::new(
            vec![layout.t_em(k), layout.state(k, 0)],
            Box::new(TorqueLimitBlock {
                params: Arc::clone(params),
            }),
            Curvature::None,
        ));
        p.ineq_lower.extend([0.0, 0.0]);
        p.ineq_upper.extend([f64::INFINITY, f64::INFINITY]);
    }
    // Battery-current bounds expressed on the SoC rate, tightened by the
    // configured margin against the constant-voltage model error.
    let rate_lo = 100.0 * batt.i_min * cfg.current_margin / batt.q_ah();
    let rate_hi = 100.0 * batt.i_max * cfg.current_margin / batt.q_ah();
    for gap in 0..(n - 1) {
        let block = if gap == 0 {
            Block::new(
                vec![layout.state(2, 2)],
                Box::new(LinearBlock {
                    a: DMatrix::from_row_slice(1, 1, &[-1.0 / cfg.dt]),
                    b: vec![meas.soc / cfg.dt],
                }),
                Curvature::Quadratic,
            )
        } else {
            let k = gap + 1;
            Block::new(
                vec![layout.state(k, 2), layout.state(k + 1, 2)],
                Box::new(LinearBlock {
                    a: DMatrix::from_row_slice(1, 2, &[1.0 / cfg.dt, -1.0 / cfg.dt]),
                    b: vec![0.0],
                }),
                Curvature::Quadratic,
            )
        };
        p.ineq.push(block);
        p.ineq_lower.push(rate_lo);
        p.ineq_upper.push(rate_hi);
    }

    // Bounds: first torque move against the limits at the measured speed;
    // slacks non-negative.
    let t_lo: f64 = params.em.t_min_curve(meas.omega);
    let t_hi: f64 = params.em.t_max_curve(meas.omega);
    p.x_bounds[layout.t_em(1)] = (t_lo, t_hi);
    for k in 2..=n {
        p.x_bounds[layout.slack(k)] = (0.0, f64::INFINITY);
    }

    // Cold-start point: zero torque plan, measured state replicated across
    // the nodes. (A literal all-zero state guess parks the SoC-rate rows
    // three orders of magnitude outside their bounds and stalls the barrier
    // method before it can recover.)
    let mut x0 = vec![0.0; layout.n_vars];
    for k in 2..=n {
        x0[layout.state(k, 0)] = meas.omega;
        x0[layout.state(k, 1)] = 0.0;
        x0[layout.state(k, 2)] = meas.soc;
        x0[layout.state(k, 3)] = meas.x_ice;
        let viol = (batt.soc_min - meas.soc).max(meas.soc - batt.soc_max).max(0.0);
        x0[layout.slack(k)] = viol;
    }
    p.x0 = x0;
    (p, layout)
}
