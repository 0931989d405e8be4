//! Exact first derivatives of evaluator blocks by forward-mode dual seeding,
//! plus the finite-difference validator used in debug builds.

use emslab_num::Dual;
use nalgebra::DMatrix;

use crate::error::{NlpError, Result};
use crate::problem::{NlpProblem, VecBlockFn};

/// Value and Jacobian of one block at the local point. The Jacobian is
/// `dim × |vars|`, one dual evaluation per local variable.
pub fn block_jacobian(
    f: &dyn VecBlockFn,
    x_loc: &[f64],
    values: &mut [f64],
    jac: &mut DMatrix<f64>,
    scratch_in: &mut Vec<Dual>,
    scratch_out: &mut Vec<Dual>,
) {
    let q = x_loc.len();
    let m = f.dim();
    f.eval_f64(x_loc, values);
    scratch_in.clear();
    scratch_in.extend(x_loc.iter().map(|&v| Dual::constant(v)));
    scratch_out.resize(m, Dual::constant(0.0));
    for j in 0..q {
        scratch_in[j].der = 1.0;
        f.eval_dual(scratch_in, scratch_out);
        for r in 0..m {
            jac[(r, j)] = scratch_out[r].der;
        }
        scratch_in[j].der = 0.0;
    }
}

/// Check a Jacobian for non-finite entries, reporting the offending index.
pub fn check_finite(
    jac: &DMatrix<f64>,
    context: &'static str,
    block: usize,
) -> Result<()> {
    for r in 0..jac.nrows() {
        for c in 0..jac.ncols() {
            if !jac[(r, c)].is_finite() {
                return Err(NlpError::NonFiniteDerivative {
                    context,
                    block,
                    row: r,
                    col: c,
                });
            }
        }
    }
    Ok(())
}

/// Compare every block's AD Jacobian against central finite differences at
/// the given point. Intended for debug builds and tests.
pub fn validate_derivatives(p: &NlpProblem, x: &[f64], rel_tol: f64) -> Result<()> {
    let mut scratch_in = Vec::new();
    let mut scratch_out = Vec::new();
    let groups = [
        ("objective", &p.objective),
        ("eq", &p.eq),
        ("ineq", &p.ineq),
    ];
    for (kind, blocks) in groups {
        for (bi, block) in blocks.iter().enumerate() {
            let q = block.vars.len();
            let m = block.f.dim();
            let mut x_loc: Vec<f64> = block.vars.iter().map(|&v| x[v]).collect();
            let mut values = vec![0.0; m];
            let mut jac = DMatrix::zeros(m, q);
            block_jacobian(
                block.f.as_ref(),
                &x_loc,
                &mut values,
                &mut jac,
                &mut scratch_in,
                &mut scratch_out,
            );
            let mut lo = vec![0.0; m];
            let mut hi = vec![0.0; m];
            for j in 0..q {
                let h = 1e-6 * x_loc[j].abs().max(1.0);
                let keep = x_loc[j];
                x_loc[j] = keep + h;
                block.f.eval_f64(&x_loc, &mut hi);
                x_loc[j] = keep - h;
                block.f.eval_f64(&x_loc, &mut lo);
                x_loc[j] = keep;
                for r in 0..m {
                    let fd = (hi[r] - lo[r]) / (2.0 * h);
                    let ad = jac[(r, j)];
                    let scale = fd.abs().max(ad.abs()).max(1.0);
                    if (ad - fd).abs() > rel_tol * scale {
                        return Err(NlpError::DerivativeMismatch(format!(
                            "{kind} block {bi} row {r} var {j}: ad {ad:.9e} vs fd {fd:.9e}"
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{LinearBlock, QuadraticBlock};

    #[test]
    fn square_gradient() {
        // d/dx x² at 3 → 6, through the block machinery.
        let b = QuadraticBlock {
            q: DMatrix::from_row_slice(1, 1, &[2.0]),
            c: vec![0.0],
            b: 0.0,
        };
        let mut vals = [0.0];
        let mut jac = DMatrix::zeros(1, 1);
        block_jacobian(
            &b,
            &[3.0],
            &mut vals,
            &mut jac,
            &mut Vec::new(),
            &mut Vec::new(),
        );
        assert_eq!(vals[0], 9.0);
        assert_eq!(jac[(0, 0)], 6.0);
    }

    #[test]
    fn linear_block_jacobian_is_matrix() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 0.0, 4.0, -1.0]);
        let b = LinearBlock {
            a: a.clone(),
            b: vec![1.0, -1.0],
        };
        let mut vals = [0.0; 2];
        let mut jac = DMatrix::zeros(2, 3);
        block_jacobian(
            &b,
            &[0.3, -0.7, 2.0],
            &mut vals,
            &mut jac,
            &mut Vec::new(),
            &mut Vec::new(),
        );
        assert_eq!(jac, a);
    }

    #[test]
    fn validator_flags_wrong_jacobian() {
        struct Liar;
        impl VecBlockFn for Liar {
            fn dim(&self) -> usize {
                1
            }
            fn eval_f64(&self, x: &[f64], out: &mut [f64]) {
                out[0] = x[0] * x[0];
            }
            fn eval_dual(&self, x: &[emslab_num::Dual], out: &mut [emslab_num::Dual]) {
                // wrong derivative on purpose
                out[0] = emslab_num::Dual::new(x[0].val * x[0].val, 1.0);
            }
        }
        let mut p = NlpProblem::new(1);
        p.x0 = vec![2.0];
        p.objective
            .push(crate::problem::Block::new(vec![0], Box::new(Liar), crate::problem::Curvature::None));
        assert!(validate_derivatives(&p, &[2.0], 1e-5).is_err());
    }
}
