//! Primal-dual interior-point iteration: slack variables and a log barrier on
//! every finite inequality side, Newton steps on the perturbed KKT system,
//! fraction-to-boundary line search on an L1 merit function, and a monotone
//! barrier schedule (μ ← μ/5).

use std::io::Write;
use std::path::PathBuf;

use emslab_num::Dual;
use nalgebra::DMatrix;

use crate::band::{KktMatrix, KktSymbolic};
use crate::bfgs::BfgsElement;
use crate::deriv::{block_jacobian, check_finite};
use crate::error::{NlpError, Result};
use crate::problem::{Block, Curvature, LinearBlock, NlpProblem, WarmStart};

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub stat: f64,
    pub feas: f64,
    pub comp: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            stat: 1e-6,
            feas: 1e-6,
            comp: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub tol: Tolerances,
    pub max_iter: usize,
    pub mu_init: f64,
    /// Per-iteration trace CSV (`iter,mu,step,stat_res,feas_res,comp_res`).
    pub trace: Option<PathBuf>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: Tolerances::default(),
            max_iter: 100,
            mu_init: 0.1,
            trace: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct KktResiduals {
    pub stat: f64,
    pub feas: f64,
    pub comp: f64,
}

#[derive(Debug, Clone)]
pub struct NlpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub y_eq: Vec<f64>,
    pub z_lo: Vec<f64>,
    pub z_hi: Vec<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub residuals: KktResiduals,
    pub mu_final: f64,
    /// Duals and curvature for warm-starting the next solve of the same shape.
    pub warm: WarmStart,
}

enum Group {
    Obj,
    Eq,
    Ineq,
}

struct BlockRef<'a> {
    group: Group,
    block: &'a Block,
    /// Index into the unified bfgs/curvature vectors.
    flat: usize,
}

struct Evaluated {
    f: f64,
    /// Scaled objective gradient, length n.
    grad: Vec<f64>,
    /// Per-objective-block local scaled gradients.
    obj_grad_loc: Vec<Vec<f64>>,
    c_e: Vec<f64>,
    j_e: Vec<DMatrix<f64>>,
    g_i: Vec<f64>,
    j_i: Vec<DMatrix<f64>>,
}

pub fn solve(p: &NlpProblem, opts: &SolveOptions) -> Result<NlpSolution> {
    p.validate()?;
    Solver::new(p, opts)?.run()
}

struct Solver<'a> {
    p: &'a NlpProblem,
    opts: &'a SolveOptions,
    bound_blocks: Vec<Block>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    m_e: usize,
    m_i: usize,
    eq_row_off: Vec<usize>,
    ineq_row_off: Vec<usize>,
    sym: KktSymbolic,
    /// Constant per-row local Hessians for Quadratic blocks, flat-indexed.
    quad_h: Vec<Option<Vec<DMatrix<f64>>>>,
    bfgs: Vec<Option<BfgsElement>>,
    n_blocks: usize,
}

impl<'a> Solver<'a> {
    fn new(p: &'a NlpProblem, opts: &'a SolveOptions) -> Result<Self> {
        // Variable bounds become one-variable linear inequality blocks so the
        // whole machinery below sees a single kind of constraint.
        let mut bound_blocks = Vec::new();
        let mut lo = p.ineq_lower.clone();
        let mut hi = p.ineq_upper.clone();
        for (j, &(l, h)) in p.x_bounds.iter().enumerate() {
            if l.is_finite() || h.is_finite() {
                bound_blocks.push(Block::new(
                    vec![j],
                    Box::new(LinearBlock::single(vec![1.0], 0.0)),
                    Curvature::Quadratic,
                ));
                lo.push(l);
                hi.push(h);
            }
        }
        let m_e: usize = p.eq.iter().map(|b| b.f.dim()).sum();
        let m_i_user: usize = p.ineq.iter().map(|b| b.f.dim()).sum();
        let m_i = m_i_user + bound_blocks.len();

        let mut eq_row_off = Vec::with_capacity(p.eq.len());
        let mut acc = 0;
        for b in &p.eq {
            eq_row_off.push(acc);
            acc += b.f.dim();
        }
        let mut ineq_row_off = Vec::with_capacity(p.ineq.len() + bound_blocks.len());
        let mut acc = 0;
        for b in p.ineq.iter().chain(bound_blocks.iter()) {
            ineq_row_off.push(acc);
            acc += b.f.dim();
        }

        // KKT pattern: curvature squares, inequality barrier squares, and
        // equality variable-dual couplings.
        let dim = p.n + m_e;
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let square = |edges: &mut Vec<(usize, usize)>, vars: &[usize]| {
            for (i, &a) in vars.iter().enumerate() {
                for &b in &vars[i + 1..] {
                    edges.push((a, b));
                }
            }
        };
        for b in &p.objective {
            if b.curvature != Curvature::None {
                square(&mut edges, &b.vars);
            }
        }
        for (bi, b) in p.eq.iter().enumerate() {
            if b.curvature != Curvature::None {
                square(&mut edges, &b.vars);
            }
            for r in 0..b.f.dim() {
                let dual = p.n + eq_row_off[bi] + r;
                for &v in &b.vars {
                    edges.push((v, dual));
                }
            }
        }
        for b in p.ineq.iter().chain(bound_blocks.iter()) {
            square(&mut edges, &b.vars);
        }
        let mut is_dual = vec![false; dim];
        for d in is_dual.iter_mut().skip(p.n) {
            *d = true;
        }
        let sym = KktSymbolic::build(dim, &edges, &is_dual);

        let n_blocks = p.objective.len() + p.eq.len() + p.ineq.len() + bound_blocks.len();

        let mut solver = Solver {
            p,
            opts,
            bound_blocks,
            lo,
            hi,
            m_e,
            m_i,
            eq_row_off,
            ineq_row_off,
            sym,
            quad_h: vec![None; n_blocks],
            bfgs: vec![None; n_blocks],
            n_blocks,
        };
        solver.capture_quadratics()?;
        solver.init_bfgs();
        Ok(solver)
    }

    fn blocks(&self) -> Vec<BlockRef<'_>> {
        let mut out = Vec::with_capacity(self.n_blocks);
        let mut flat = 0;
        for b in self.p.objective.iter() {
            out.push(BlockRef {
                group: Group::Obj,
                block: b,
                flat,
            });
            flat += 1;
        }
        for b in self.p.eq.iter() {
            out.push(BlockRef {
                group: Group::Eq,
                block: b,
                flat,
            });
            flat += 1;
        }
        for b in self.p.ineq.iter().chain(self.bound_blocks.iter()) {
            out.push(BlockRef {
                group: Group::Ineq,
                block: b,
                flat,
            });
            flat += 1;
        }
        out
    }

    /// Scaled local Jacobian of a block at scaled point `xs`.
    fn local_jacobian(
        &self,
        b: &Block,
        is_obj: bool,
        xs: &[f64],
        jac: &mut DMatrix<f64>,
        vals: &mut Vec<f64>,
        din: &mut Vec<Dual>,
        dout: &mut Vec<Dual>,
    ) {
        let q = b.vars.len();
        let m = b.f.dim();
        let mut x_loc = vec![0.0; q];
        for (k, &v) in b.vars.iter().enumerate() {
            x_loc[k] = xs[v] * self.p.scaling[v];
        }
        vals.resize(m, 0.0);
        block_jacobian(b.f.as_ref(), &x_loc, vals, jac, din, dout);
        let w = if is_obj { self.p.obj_scale } else { 1.0 };
        for r in 0..m {
            for (k, &v) in b.vars.iter().enumerate() {
                jac[(r, k)] *= w * self.p.scaling[v];
            }
            if is_obj {
                vals[r] *= w;
            }
        }
    }

    fn capture_quadratics(&mut self) -> Result<()> {
        let xs0: Vec<f64> = self
            .p
            .x0
            .iter()
            .zip(&self.p.scaling)
            .map(|(x, s)| x / s)
            .collect();
        let mut din = Vec::new();
        let mut dout = Vec::new();
        let refs = self.blocks();
        let mut captured: Vec<(usize, Vec<DMatrix<f64>>)> = Vec::new();
        for br in &refs {
            if br.block.curvature != Curvature::Quadratic {
                continue;
            }
            let is_obj = matches!(br.group, Group::Obj);
            let q = br.block.vars.len();
            let m = br.block.f.dim();
            let mut base = DMatrix::zeros(m, q);
            let mut vals = Vec::new();
            self.local_jacobian(br.block, is_obj, &xs0, &mut base, &mut vals, &mut din, &mut dout);
            check_finite(&base, "quadratic capture", br.flat)?;
            let mut h_rows = vec![DMatrix::zeros(q, q); m];
            let mut xs_probe = xs0.clone();
            let mut jac_p = DMatrix::zeros(m, q);
            for j in 0..q {
                let v = br.block.vars[j];
                xs_probe[v] += 1.0;
                self.local_jacobian(
                    br.block, is_obj, &xs_probe, &mut jac_p, &mut vals, &mut din, &mut dout,
                );
                xs_probe[v] = xs0[v];
                for r in 0..m {
                    for i in 0..q {
                        h_rows[r][(i, j)] = jac_p[(r, i)] - base[(r, i)];
                    }
                }
            }
            for h in &mut h_rows {
                let ht = h.transpose();
                *h = 0.5 * (&*h + ht);
            }
            captured.push((br.flat, h_rows));
        }
        for (flat, h) in captured {
            self.quad_h[flat] = Some(h);
        }
        Ok(())
    }

    fn init_bfgs(&mut self) {
        let warm_bfgs = self.p.warm.as_ref().map(|w| &w.bfgs);
        let refs = self.blocks();
        let mut assign: Vec<(usize, BfgsElement)> = Vec::new();
        for br in &refs {
            if br.block.curvature != Curvature::Bfgs {
                continue;
            }
            let q = br.block.vars.len();
            let el = match warm_bfgs.and_then(|w| w.get(br.flat)).and_then(|o| o.as_ref()) {
                Some(m) if m.nrows() == q => BfgsElement::from_matrix(m.clone()),
                _ => BfgsElement::new(q, 1e-2),
            };
            assign.push((br.flat, el));
        }
        for (flat, el) in assign {
            self.bfgs[flat] = Some(el);
        }
    }

    fn eval_into(&self, xs: &[f64], out: &mut Evaluated) -> Result<()> {
        out.f = 0.0;
        out.grad.iter_mut().for_each(|g| *g = 0.0);
        let mut din = Vec::new();
        let mut dout = Vec::new();
        let mut vals = Vec::new();
        for (i, b) in self.p.objective.iter().enumerate() {
            let q = b.vars.len();
            if out.obj_grad_loc[i].len() != q {
                out.obj_grad_loc[i] = vec![0.0; q];
            }
            let mut jac = DMatrix::zeros(1, q);
            self.local_jacobian(b, true, xs, &mut jac, &mut vals, &mut din, &mut dout);
            check_finite(&jac, "objective", i)?;
            out.f += vals[0];
            for k in 0..q {
                out.obj_grad_loc[i][k] = jac[(0, k)];
                out.grad[b.vars[k]] += jac[(0, k)];
            }
        }
        for (i, b) in self.p.eq.iter().enumerate() {
            let m = b.f.dim();
            self.local_jacobian(b, false, xs, &mut out.j_e[i], &mut vals, &mut din, &mut dout);
            check_finite(&out.j_e[i], "eq", i)?;
            out.c_e[self.eq_row_off[i]..self.eq_row_off[i] + m].copy_from_slice(&vals[..m]);
        }
        for (i, b) in self.p.ineq.iter().chain(self.bound_blocks.iter()).enumerate() {
            let m = b.f.dim();
            self.local_jacobian(b, false, xs, &mut out.j_i[i], &mut vals, &mut din, &mut dout);
            check_finite(&out.j_i[i], "ineq", i)?;
            out.g_i[self.ineq_row_off[i]..self.ineq_row_off[i] + m].copy_from_slice(&vals[..m]);
        }
        if !out.f.is_finite()
            || out.c_e.iter().any(|v| !v.is_finite())
            || out.g_i.iter().any(|v| !v.is_finite())
        {
            return Err(NlpError::BadProblem(
                "non-finite function value during iteration".into(),
            ));
        }
        Ok(())
    }

    /// Objective and constraint values only (for the line search).
    fn eval_values(&self, xs: &[f64], c_e: &mut [f64], g_i: &mut [f64]) -> Option<f64> {
        let mut f = 0.0;
        let mut vals: Vec<f64> = Vec::new();
        for b in &self.p.objective {
            let x_loc: Vec<f64> = b
                .vars
                .iter()
                .map(|&v| xs[v] * self.p.scaling[v])
                .collect();
            vals.resize(1, 0.0);
            b.f.eval_f64(&x_loc, &mut vals);
            f += self.p.obj_scale * vals[0];
        }
        for (i, b) in self.p.eq.iter().enumerate() {
            let x_loc: Vec<f64> = b
                .vars
                .iter()
                .map(|&v| xs[v] * self.p.scaling[v])
                .collect();
            let m = b.f.dim();
            vals.resize(m, 0.0);
            b.f.eval_f64(&x_loc, &mut vals);
            c_e[self.eq_row_off[i]..self.eq_row_off[i] + m].copy_from_slice(&vals[..m]);
        }
        for (i, b) in self.p.ineq.iter().chain(self.bound_blocks.iter()).enumerate() {
            let x_loc: Vec<f64> = b
                .vars
                .iter()
                .map(|&v| xs[v] * self.p.scaling[v])
                .collect();
            let m = b.f.dim();
            vals.resize(m, 0.0);
            b.f.eval_f64(&x_loc, &mut vals);
            g_i[self.ineq_row_off[i]..self.ineq_row_off[i] + m].copy_from_slice(&vals[..m]);
        }
        if f.is_finite()
            && c_e.iter().all(|v| v.is_finite())
            && g_i.iter().all(|v| v.is_finite())
        {
            Some(f)
        } else {
            None
        }
    }

    fn run(mut self) -> Result<NlpSolution> {
        let n = self.p.n;
        let (m_e, m_i) = (self.m_e, self.m_i);
        let tol = self.opts.tol;

        let mut xs: Vec<f64> = self
            .p
            .x0
            .iter()
            .zip(&self.p.scaling)
            .map(|(x, s)| x / s)
            .collect();

        let mut eval = Evaluated {
            f: 0.0,
            grad: vec![0.0; n],
            obj_grad_loc: vec![Vec::new(); self.p.objective.len()],
            c_e: vec![0.0; m_e],
            j_e: self.p.eq.iter().map(|b| DMatrix::zeros(b.f.dim(), b.vars.len())).collect(),
            g_i: vec![0.0; m_i],
            j_i: self
                .p
                .ineq
                .iter()
                .chain(self.bound_blocks.iter())
                .map(|b| DMatrix::zeros(b.f.dim(), b.vars.len()))
                .collect(),
        };
        self.eval_into(&xs, &mut eval)?;

        // Slacks and duals, one pair per finite side.
        let has_lo: Vec<bool> = self.lo.iter().map(|v| v.is_finite()).collect();
        let has_hi: Vec<bool> = self.hi.iter().map(|v| v.is_finite()).collect();
        let mut s_lo = vec![0.0; m_i];
        let mut s_hi = vec![0.0; m_i];
        let mut z_lo = vec![0.0; m_i];
        let mut z_hi = vec![0.0; m_i];

        let warm = self.p.warm.as_ref();
        let warm_slacks = warm
            .filter(|w| w.s_lo.len() == m_i && w.s_hi.len() == m_i)
            .map(|w| (&w.s_lo, &w.s_hi));
        for r in 0..m_i {
            if has_lo[r] {
                s_lo[r] = match warm_slacks {
                    Some((sl, _)) if sl[r] > 0.0 => sl[r],
                    _ => (eval.g_i[r] - self.lo[r]).max(1e-8),
                };
            }
            if has_hi[r] {
                s_hi[r] = match warm_slacks {
                    Some((_, sh)) if sh[r] > 0.0 => sh[r],
                    _ => (self.hi[r] - eval.g_i[r]).max(1e-8),
                };
            }
        }
        let mut mu = self.opts.mu_init;
        if let Some(w) = warm {
            if w.z_lo.len() == m_i && w.z_hi.len() == m_i {
                let mut comp_sum = 0.0;
                let mut count = 0usize;
                for r in 0..m_i {
                    if has_lo[r] {
                        z_lo[r] = w.z_lo[r].max(1e-10);
                        comp_sum += s_lo[r] * z_lo[r];
                        count += 1;
                    }
                    if has_hi[r] {
                        z_hi[r] = w.z_hi[r].max(1e-10);
                        comp_sum += s_hi[r] * z_hi[r];
                        count += 1;
                    }
                }
                if count > 0 {
                    mu = (comp_sum / count as f64).clamp(1e-9, self.opts.mu_init);
                }
            }
        }
        if warm.map(|w| w.z_lo.len() != m_i).unwrap_or(true) {
            for r in 0..m_i {
                if has_lo[r] {
                    z_lo[r] = (mu / s_lo[r]).clamp(1e-6, 1e6);
                }
                if has_hi[r] {
                    z_hi[r] = (mu / s_hi[r]).clamp(1e-6, 1e6);
                }
            }
        }
        let mut y: Vec<f64> = match warm {
            Some(w) if w.y_eq.len() == m_e => w.y_eq.clone(),
            _ => vec![0.0; m_e],
        };

        let mu_floor = (tol.comp / 100.0).max(1e-12);
        let mut nu: f64 = 10.0;
        let mut delta_last: f64 = 0.0;
        // Proximal damping engaged when the line search starts cutting steps:
        // the first-order Lagrangian model lacks the constraint curvature, and
        // a Levenberg-style shift restores reliable descent directions.
        let mut prox: f64 = 0.0;
        let mut status = SolveStatus::MaxIter;
        let mut iters_done = 0;
        let mut residuals = KktResiduals::default();
        let mut stall = 0usize;

        let mut trace = match &self.opts.trace {
            Some(path) => {
                let mut f = std::fs::File::create(path)?;
                writeln!(f, "iter,mu,step,stat_res,feas_res,comp_res")?;
                Some(f)
            }
            None => None,
        };

        let mut kkt = KktMatrix::zeros(&self.sym);
        let mut prev: Option<(Vec<f64>, Vec<DMatrix<f64>>, Vec<Vec<f64>>)> = None;

        let mut c_try = vec![0.0; m_e];
        let mut g_try = vec![0.0; m_i];

        for iter in 0..self.opts.max_iter {
            iters_done = iter + 1;

            // Damped BFGS elements from the last accepted step, evaluated
            // against the current duals.
            if let Some((xs_prev, j_prev, obj_g_prev)) = &prev {
                update_bfgs_elements(
                    self.p,
                    &self.bound_blocks,
                    &self.eq_row_off,
                    &self.ineq_row_off,
                    &mut self.bfgs,
                    &xs,
                    &eval,
                    xs_prev,
                    j_prev,
                    obj_g_prev,
                    &y,
                    &z_lo,
                    &z_hi,
                );
            }

            // Residuals.
            let mut r_x = eval.grad.clone();
            for (i, b) in self.p.eq.iter().enumerate() {
                let off = self.eq_row_off[i];
                for r in 0..b.f.dim() {
                    for (k, &v) in b.vars.iter().enumerate() {
                        r_x[v] -= eval.j_e[i][(r, k)] * y[off + r];
                    }
                }
            }
            for (i, b) in self.p.ineq.iter().chain(self.bound_blocks.iter()).enumerate() {
                let off = self.ineq_row_off[i];
                for r in 0..b.f.dim() {
                    let zr = z_lo[off + r] - z_hi[off + r];
                    for (k, &v) in b.vars.iter().enumerate() {
                        r_x[v] -= eval.j_i[i][(r, k)] * zr;
                    }
                }
            }
            let stat_inf = r_x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let feas_e = eval.c_e.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let mut feas_i = 0.0f64;
            let mut comp0 = 0.0f64;
            let mut comp_mu = 0.0f64;
            let mut dual_sum = 0.0;
            let mut dual_count = 0usize;
            for r in 0..m_i {
                if has_lo[r] {
                    feas_i = feas_i.max((eval.g_i[r] - self.lo[r] - s_lo[r]).abs());
                    comp0 = comp0.max(s_lo[r] * z_lo[r]);
                    comp_mu = comp_mu.max((s_lo[r] * z_lo[r] - mu).abs());
                    dual_sum += z_lo[r].abs();
                    dual_count += 1;
                }
                if has_hi[r] {
                    feas_i = feas_i.max((self.hi[r] - eval.g_i[r] - s_hi[r]).abs());
                    comp0 = comp0.max(s_hi[r] * z_hi[r]);
                    comp_mu = comp_mu.max((s_hi[r] * z_hi[r] - mu).abs());
                    dual_sum += z_hi[r].abs();
                    dual_count += 1;
                }
            }
            for v in &y {
                dual_sum += v.abs();
                dual_count += 1;
            }
            let s_d = ((dual_sum / dual_count.max(1) as f64).max(100.0)) / 100.0;
            let feas = feas_e.max(feas_i);
            residuals = KktResiduals {
                stat: stat_inf / s_d,
                feas,
                comp: comp0 / s_d,
            };
            if stat_inf / s_d <= tol.stat && feas <= tol.feas && comp0 / s_d <= tol.comp {
                status = SolveStatus::Converged;
                if let Some(f) = trace.as_mut() {
                    writeln!(f, "{iter},{mu:.3e},0,{stat_inf:.3e},{feas:.3e},{comp0:.3e}")?;
                }
                break;
            }

            // Monotone barrier reduction once the subproblem is solved well
            // enough.
            while mu > mu_floor
                && (stat_inf / s_d).max(feas).max(comp_mu / s_d) <= 10.0 * mu
            {
                mu = (mu / 5.0).max(mu_floor);
                comp_mu = 0.0;
                for r in 0..m_i {
                    if has_lo[r] {
                        comp_mu = comp_mu.max((s_lo[r] * z_lo[r] - mu).abs());
                    }
                    if has_hi[r] {
                        comp_mu = comp_mu.max((s_hi[r] * z_hi[r] - mu).abs());
                    }
                }
            }
            let tau = 0.99f64.max(1.0 - mu);

            // Assemble and factor with inertia-correcting regularization.
            let delta_c = 1e-11;
            let mut delta_w = 0.0;
            let solved = loop {
                kkt.clear();
                self.assemble(&mut kkt, &eval, &y, &z_lo, &z_hi, &s_lo, &s_hi, &has_lo, &has_hi,
                    delta_w + prox, delta_c);
                match kkt.factor() {
                    Ok(()) => break true,
                    Err(_) => {
                        delta_w = if delta_w == 0.0 {
                            (delta_last / 3.0).max(1e-8)
                        } else {
                            delta_w * 10.0
                        };
                        if delta_w > 1e10 {
                            break false;
                        }
                    }
                }
            };
            if !solved {
                status = SolveStatus::NumericalFailure;
                break;
            }
            if delta_w > 0.0 {
                delta_last = delta_w;
            }

            // Right-hand side.
            let mut rhs = vec![0.0; n + m_e];
            for v in 0..n {
                rhs[v] = -r_x[v];
            }
            for (i, b) in self.p.ineq.iter().chain(self.bound_blocks.iter()).enumerate() {
                let off = self.ineq_row_off[i];
                for r in 0..b.f.dim() {
                    let gr = off + r;
                    let mut w = 0.0;
                    if has_lo[gr] {
                        let sigma = z_lo[gr] / s_lo[gr];
                        let r_lo = eval.g_i[gr] - self.lo[gr] - s_lo[gr];
                        w += mu / s_lo[gr] - z_lo[gr] - sigma * r_lo;
                    }
                    if has_hi[gr] {
                        let sigma = z_hi[gr] / s_hi[gr];
                        let r_hi = self.hi[gr] - eval.g_i[gr] - s_hi[gr];
                        w -= mu / s_hi[gr] - z_hi[gr] - sigma * r_hi;
                    }
                    for (k, &v) in b.vars.iter().enumerate() {
                        rhs[v] += eval.j_i[i][(r, k)] * w;
                    }
                }
            }
            for r in 0..m_e {
                rhs[n + r] = -eval.c_e[r];
            }
            kkt.solve(&mut rhs);
            let dx = &rhs[..n];
            let dy: Vec<f64> = rhs[n..].iter().map(|v| -v).collect();

            // Slack and multiplier steps.
            let mut ds_lo = vec![0.0; m_i];
            let mut ds_hi = vec![0.0; m_i];
            let mut dz_lo = vec![0.0; m_i];
            let mut dz_hi = vec![0.0; m_i];
            for (i, b) in self.p.ineq.iter().chain(self.bound_blocks.iter()).enumerate() {
                let off = self.ineq_row_off[i];
                for r in 0..b.f.dim() {
                    let gr = off + r;
                    let mut jdx = 0.0;
                    for (k, &v) in b.vars.iter().enumerate() {
                        jdx += eval.j_i[i][(r, k)] * dx[v];
                    }
                    if has_lo[gr] {
                        let r_lo = eval.g_i[gr] - self.lo[gr] - s_lo[gr];
                        ds_lo[gr] = jdx + r_lo;
                        dz_lo[gr] =
                            mu / s_lo[gr] - z_lo[gr] - z_lo[gr] / s_lo[gr] * ds_lo[gr];
                    }
                    if has_hi[gr] {
                        let r_hi = self.hi[gr] - eval.g_i[gr] - s_hi[gr];
                        ds_hi[gr] = -jdx + r_hi;
                        dz_hi[gr] =
                            mu / s_hi[gr] - z_hi[gr] - z_hi[gr] / s_hi[gr] * ds_hi[gr];
                    }
                }
            }

            // Fraction to boundary.
            let mut alpha_pri: f64 = 1.0;
            let mut alpha_dual: f64 = 1.0;
            for r in 0..m_i {
                if has_lo[r] {
                    if ds_lo[r] < 0.0 {
                        alpha_pri = alpha_pri.min(-tau * s_lo[r] / ds_lo[r]);
                    }
                    if dz_lo[r] < 0.0 {
                        alpha_dual = alpha_dual.min(-tau * z_lo[r] / dz_lo[r]);
                    }
                }
                if has_hi[r] {
                    if ds_hi[r] < 0.0 {
                        alpha_pri = alpha_pri.min(-tau * s_hi[r] / ds_hi[r]);
                    }
                    if dz_hi[r] < 0.0 {
                        alpha_dual = alpha_dual.min(-tau * z_hi[r] / dz_hi[r]);
                    }
                }
            }

            // Merit line search.
            let theta0: f64 = eval.c_e.iter().map(|v| v.abs()).sum::<f64>()
                + (0..m_i)
                    .map(|r| {
                        let mut t = 0.0;
                        if has_lo[r] {
                            t += (eval.g_i[r] - self.lo[r] - s_lo[r]).abs();
                        }
                        if has_hi[r] {
                            t += (self.hi[r] - eval.g_i[r] - s_hi[r]).abs();
                        }
                        t
                    })
                    .sum::<f64>();
            let barrier0: f64 = (0..m_i)
                .map(|r| {
                    let mut t = 0.0;
                    if has_lo[r] {
                        t -= mu * s_lo[r].ln();
                    }
                    if has_hi[r] {
                        t -= mu * s_hi[r].ln();
                    }
                    t
                })
                .sum();
            // Penalty weight sized from the step's model decrease rather than
            // dual norms: large-but-benign multipliers (e.g. slack penalties)
            // must not freeze the line search.
            let mut d_obj: f64 = eval.grad.iter().zip(dx).map(|(g, d)| g * d).sum();
            for r in 0..m_i {
                if has_lo[r] {
                    d_obj -= mu * ds_lo[r] / s_lo[r];
                }
                if has_hi[r] {
                    d_obj -= mu * ds_hi[r] / s_hi[r];
                }
            }
            if theta0 > 1e-12 {
                let required = d_obj.max(0.0) / (0.5 * theta0) + 1.0;
                nu = nu.max(required.min(1e8));
            }
            let phi0 = eval.f + barrier0 + nu * theta0;
            let d_dir = d_obj - nu * theta0;

            let mut alpha = alpha_pri;
            let mut accepted = false;
            let mut xs_try = xs.clone();
            while alpha > 1e-12 {
                for v in 0..n {
                    xs_try[v] = xs[v] + alpha * dx[v];
                }
                if let Some(f_try) = self.eval_values(&xs_try, &mut c_try, &mut g_try) {
                    let mut barrier_t = 0.0;
                    let mut theta_t = c_try.iter().map(|v| v.abs()).sum::<f64>();
                    let mut ok = true;
                    for r in 0..m_i {
                        if has_lo[r] {
                            let s = s_lo[r] + alpha * ds_lo[r];
                            if s <= 0.0 {
                                ok = false;
                                break;
                            }
                            barrier_t -= mu * s.ln();
                            theta_t += (g_try[r] - self.lo[r] - s).abs();
                        }
                        if has_hi[r] {
                            let s = s_hi[r] + alpha * ds_hi[r];
                            if s <= 0.0 {
                                ok = false;
                                break;
                            }
                            barrier_t -= mu * s.ln();
                            theta_t += (self.hi[r] - g_try[r] - s).abs();
                        }
                    }
                    if ok {
                        let phi_t = f_try + barrier_t + nu * theta_t;
                        if phi_t <= phi0 + 1e-4 * alpha * d_dir.min(0.0) {
                            accepted = true;
                            break;
                        }
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                alpha = 1e-12;
                for v in 0..n {
                    xs_try[v] = xs[v] + alpha * dx[v];
                }
                stall += 1;
            } else if alpha < 1e-10 {
                stall += 1;
            } else {
                stall = 0;
            }
            if stall >= 5 {
                status = SolveStatus::NumericalFailure;
                break;
            }
            if alpha < 0.25 {
                prox = (prox.max(1e-3) * 4.0).min(1e3);
            } else if alpha > 0.9 {
                prox /= 4.0;
                if prox < 1e-4 {
                    prox = 0.0;
                }
            }

            // Keep what BFGS needs from the old point, then move.
            let j_prev: Vec<DMatrix<f64>> = eval
                .j_e
                .iter()
                .chain(eval.j_i.iter())
                .cloned()
                .collect();
            let obj_g_prev = eval.obj_grad_loc.clone();
            let xs_old = xs.clone();

            for r in 0..m_i {
                if has_lo[r] {
                    s_lo[r] += alpha * ds_lo[r];
                    z_lo[r] = (z_lo[r] + alpha_dual * dz_lo[r]).max(1e-14);
                }
                if has_hi[r] {
                    s_hi[r] += alpha * ds_hi[r];
                    z_hi[r] = (z_hi[r] + alpha_dual * dz_hi[r]).max(1e-14);
                }
            }
            for r in 0..m_e {
                y[r] += alpha * dy[r];
            }
            xs.copy_from_slice(&xs_try);
            match self.eval_into(&xs, &mut eval) {
                Ok(()) => {}
                Err(_) => {
                    status = SolveStatus::NumericalFailure;
                    break;
                }
            }
            prev = Some((xs_old, j_prev, obj_g_prev));

            if let Some(f) = trace.as_mut() {
                writeln!(
                    f,
                    "{iter},{mu:.3e},{alpha:.3e},{stat_inf:.3e},{feas:.3e},{comp0:.3e}"
                )?;
            }
        }

        let x: Vec<f64> = xs
            .iter()
            .zip(&self.p.scaling)
            .map(|(v, s)| v * s)
            .collect();
        let objective = eval.f / self.p.obj_scale;
        let warm_out = WarmStart {
            y_eq: y.clone(),
            z_lo: z_lo.clone(),
            z_hi: z_hi.clone(),
            s_lo: s_lo.clone(),
            s_hi: s_hi.clone(),
            bfgs: self
                .bfgs
                .iter()
                .map(|o| o.as_ref().map(|e| e.b.clone()))
                .collect(),
            mu,
        };
        Ok(NlpSolution {
            x,
            objective,
            y_eq: y,
            z_lo,
            z_hi,
            status,
            iterations: iters_done,
            residuals,
            mu_final: mu,
            warm: warm_out,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        &self,
        kkt: &mut KktMatrix,
        eval: &Evaluated,
        y: &[f64],
        z_lo: &[f64],
        z_hi: &[f64],
        s_lo: &[f64],
        s_hi: &[f64],
        has_lo: &[bool],
        has_hi: &[bool],
        delta_w: f64,
        delta_c: f64,
    ) {
        let n = self.p.n;
        // Curvature of objective blocks.
        let mut flat = 0;
        for b in &self.p.objective {
            match b.curvature {
                Curvature::Quadratic => {
                    let h = &self.quad_h[flat].as_ref().unwrap()[0];
                    add_local_sym(kkt, &b.vars, h, 1.0);
                }
                Curvature::Bfgs => {
                    let el = self.bfgs[flat].as_ref().unwrap();
                    add_local_sym(kkt, &b.vars, &el.b, 1.0);
                }
                Curvature::None => {}
            }
            flat += 1;
        }
        // Equality blocks: curvature and Jacobian coupling.
        for (i, b) in self.p.eq.iter().enumerate() {
            let off = self.eq_row_off[i];
            match b.curvature {
                Curvature::Quadratic => {
                    let hs = self.quad_h[flat].as_ref().unwrap();
                    for (r, h) in hs.iter().enumerate() {
                        let w = -y[off + r];
                        if w != 0.0 {
                            add_local_sym(kkt, &b.vars, h, w);
                        }
                    }
                }
                Curvature::Bfgs => {
                    let el = self.bfgs[flat].as_ref().unwrap();
                    add_local_sym(kkt, &b.vars, &el.b, 1.0);
                }
                Curvature::None => {}
            }
            for r in 0..b.f.dim() {
                let dual = n + off + r;
                for (k, &v) in b.vars.iter().enumerate() {
                    let j = eval.j_e[i][(r, k)];
                    if j != 0.0 {
                        kkt.add(dual, v, j);
                    }
                }
            }
            flat += 1;
        }
        // Inequality blocks: curvature and barrier condensation.
        for (i, b) in self.p.ineq.iter().chain(self.bound_blocks.iter()).enumerate() {
            let off = self.ineq_row_off[i];
            match b.curvature {
                Curvature::Quadratic => {
                    let hs = self.quad_h[flat].as_ref().unwrap();
                    for (r, h) in hs.iter().enumerate() {
                        let w = -(z_lo[off + r] - z_hi[off + r]);
                        if w != 0.0 {
                            add_local_sym(kkt, &b.vars, h, w);
                        }
                    }
                }
                Curvature::Bfgs => {
                    let el = self.bfgs[flat].as_ref().unwrap();
                    add_local_sym(kkt, &b.vars, &el.b, 1.0);
                }
                Curvature::None => {}
            }
            for r in 0..b.f.dim() {
                let gr = off + r;
                let mut sigma = 0.0;
                if has_lo[gr] {
                    sigma += z_lo[gr] / s_lo[gr];
                }
                if has_hi[gr] {
                    sigma += z_hi[gr] / s_hi[gr];
                }
                if sigma == 0.0 {
                    continue;
                }
                for (a, &va) in b.vars.iter().enumerate() {
                    let ja = eval.j_i[i][(r, a)];
                    if ja == 0.0 {
                        continue;
                    }
                    for (c, &vc) in b.vars.iter().enumerate().take(a + 1) {
                        let jc = eval.j_i[i][(r, c)];
                        if jc != 0.0 {
                            kkt.add(va, vc, sigma * ja * jc);
                        }
                    }
                }
            }
            flat += 1;
        }
        // Regularization.
        for v in 0..n {
            kkt.add(v, v, delta_w);
        }
        for r in 0..self.m_e {
            kkt.add(n + r, n + r, -delta_c);
        }
    }

}

#[allow(clippy::too_many_arguments)]
fn update_bfgs_elements(
    p: &NlpProblem,
    bound_blocks: &[Block],
    eq_row_off: &[usize],
    ineq_row_off: &[usize],
    bfgs: &mut [Option<BfgsElement>],
    xs: &[f64],
    eval: &Evaluated,
    xs_prev: &[f64],
    j_prev: &[DMatrix<f64>],
    obj_g_prev: &[Vec<f64>],
    y: &[f64],
    z_lo: &[f64],
    z_hi: &[f64],
) {
    let mut flat = 0;
    let n_eq = p.eq.len();
    for (i, b) in p.objective.iter().enumerate() {
        if b.curvature == Curvature::Bfgs {
            let s: Vec<f64> = b.vars.iter().map(|&v| xs[v] - xs_prev[v]).collect();
            let yv: Vec<f64> = eval.obj_grad_loc[i]
                .iter()
                .zip(&obj_g_prev[i])
                .map(|(a, b)| a - b)
                .collect();
            bfgs[flat].as_mut().unwrap().update(&s, &yv);
        }
        flat += 1;
    }
    for (i, b) in p.eq.iter().enumerate() {
        if b.curvature == Curvature::Bfgs {
            let off = eq_row_off[i];
            let q = b.vars.len();
            let s: Vec<f64> = b.vars.iter().map(|&v| xs[v] - xs_prev[v]).collect();
            let mut yv = vec![0.0; q];
            for r in 0..b.f.dim() {
                let w = -y[off + r];
                for k in 0..q {
                    yv[k] += w * (eval.j_e[i][(r, k)] - j_prev[i][(r, k)]);
                }
            }
            bfgs[flat].as_mut().unwrap().update(&s, &yv);
        }
        flat += 1;
    }
    for (i, b) in p.ineq.iter().chain(bound_blocks.iter()).enumerate() {
        if b.curvature == Curvature::Bfgs {
            let off = ineq_row_off[i];
            let q = b.vars.len();
            let s: Vec<f64> = b.vars.iter().map(|&v| xs[v] - xs_prev[v]).collect();
            let mut yv = vec![0.0; q];
            for r in 0..b.f.dim() {
                let w = -(z_lo[off + r] - z_hi[off + r]);
                for k in 0..q {
                    yv[k] += w * (eval.j_i[i][(r, k)] - j_prev[n_eq + i][(r, k)]);
                }
            }
            bfgs[flat].as_mut().unwrap().update(&s, &yv);
        }
        flat += 1;
    }
}

fn add_local_sym(kkt: &mut KktMatrix, vars: &[usize], h: &DMatrix<f64>, w: f64) {
    for (a, &va) in vars.iter().enumerate() {
        for (c, &vc) in vars.iter().enumerate().take(a + 1) {
            let mut v = h[(a, c)];
            if a != c {
                // Stored symmetric halves may differ after capture rounding.
                v = 0.5 * (h[(a, c)] + h[(c, a)]);
            }
            if v != 0.0 {
                kkt.add(va, vc, w * v);
            }
        }
    }
}
