//! Solver checks against analytic optima and a dense active-set oracle.

use emslab_nlp::{
    solve, Block, Curvature, LinearBlock, NlpProblem, QuadraticBlock, SolveOptions, SolveStatus,
};
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Textbook primal active-set method for strictly convex QPs
/// `min ½xᵀQx + cᵀx  s.t.  Ax = b, l ≤ x ≤ u`, used as an independent
/// reference for the interior-point path.
mod active_set {
    use nalgebra::{DMatrix, DVector};

    pub struct BoxQp {
        pub q: DMatrix<f64>,
        pub c: DVector<f64>,
        pub a: Option<DMatrix<f64>>,
        pub b: DVector<f64>,
        pub lo: DVector<f64>,
        pub hi: DVector<f64>,
    }

    #[derive(Clone, Copy, PartialEq, Eq)]
    enum Active {
        Free,
        Lower,
        Upper,
    }

    pub fn solve(qp: &BoxQp, x0: &DVector<f64>) -> (DVector<f64>, f64) {
        let n = qp.q.nrows();
        let m = qp.a.as_ref().map(|a| a.nrows()).unwrap_or(0);
        let mut x = x0.clone();
        for i in 0..n {
            x[i] = x[i].clamp(qp.lo[i], qp.hi[i]);
        }
        let mut active: Vec<Active> = (0..n)
            .map(|i| {
                if x[i] <= qp.lo[i] {
                    Active::Lower
                } else if x[i] >= qp.hi[i] {
                    Active::Upper
                } else {
                    Active::Free
                }
            })
            .collect();

        for _iter in 0..(50 * (n + 1)) {
            // Solve the equality-constrained subproblem on the free set.
            let free: Vec<usize> = (0..n)
                .filter(|&i| active[i] == Active::Free)
                .collect();
            let nf = free.len();
            let dim = nf + m;
            let mut kkt = DMatrix::zeros(dim, dim);
            let mut rhs = DVector::zeros(dim);
            for (a, &ia) in free.iter().enumerate() {
                for (bcol, &ib) in free.iter().enumerate() {
                    kkt[(a, bcol)] = qp.q[(ia, ib)];
                }
                let mut g = qp.c[ia];
                for i in 0..n {
                    if active[i] != Active::Free {
                        g += qp.q[(ia, i)] * x[i];
                    }
                }
                rhs[a] = -g;
            }
            if let Some(a_mat) = &qp.a {
                for r in 0..m {
                    for (col, &ic) in free.iter().enumerate() {
                        kkt[(nf + r, col)] = a_mat[(r, ic)];
                        kkt[(col, nf + r)] = a_mat[(r, ic)];
                    }
                    let mut bv = qp.b[r];
                    for i in 0..n {
                        if active[i] != Active::Free {
                            bv -= a_mat[(r, i)] * x[i];
                        }
                    }
                    rhs[nf + r] = bv;
                }
            }
            let sol = kkt
                .lu()
                .solve(&rhs)
                .expect("active-set subproblem must be solvable");
            let mut x_target = x.clone();
            for (a, &ia) in free.iter().enumerate() {
                x_target[ia] = sol[a];
            }
            let y: DVector<f64> = DVector::from_iterator(m, (0..m).map(|r| sol[nf + r]));

            // Step toward the subproblem solution up to the first bound.
            let mut alpha: f64 = 1.0;
            let mut hit: Option<(usize, Active)> = None;
            for &ia in &free {
                let d = x_target[ia] - x[ia];
                if d < -1e-14 {
                    let a_max = (qp.lo[ia] - x[ia]) / d;
                    if a_max < alpha {
                        alpha = a_max;
                        hit = Some((ia, Active::Lower));
                    }
                } else if d > 1e-14 {
                    let a_max = (qp.hi[ia] - x[ia]) / d;
                    if a_max < alpha {
                        alpha = a_max;
                        hit = Some((ia, Active::Upper));
                    }
                }
            }
            for &ia in &free {
                x[ia] += alpha * (x_target[ia] - x[ia]);
            }
            if let Some((ia, side)) = hit {
                active[ia] = side;
                x[ia] = match side {
                    Active::Lower => qp.lo[ia],
                    Active::Upper => qp.hi[ia],
                    Active::Free => unreachable!(),
                };
                continue;
            }

            // At the subproblem optimum: check bound multipliers.
            let grad = &qp.q * &x + &qp.c;
            let lagr = match &qp.a {
                Some(a_mat) => grad - a_mat.transpose() * &y,
                None => grad,
            };
            let mut worst: Option<(usize, f64)> = None;
            for i in 0..n {
                let viol = match active[i] {
                    Active::Lower => -lagr[i], // multiplier must be >= 0
                    Active::Upper => lagr[i],  // -z_hi must be <= 0
                    Active::Free => continue,
                };
                if viol > 1e-10 && worst.map(|(_, w)| viol > w).unwrap_or(true) {
                    worst = Some((i, viol));
                }
            }
            match worst {
                Some((i, _)) => active[i] = Active::Free,
                None => break,
            }
        }
        let f = 0.5 * (&x.transpose() * &qp.q * &x)[(0, 0)] + qp.c.dot(&x);
        (x, f)
    }
}

fn quad_obj(n: usize, q: DMatrix<f64>, c: Vec<f64>) -> Block {
    Block::new(
        (0..n).collect(),
        Box::new(QuadraticBlock { q, c, b: 0.0 }),
        Curvature::Quadratic,
    )
}

#[test]
fn analytic_equality_qp() {
    // min x² + y² s.t. x + y = 1 → (0.5, 0.5), dual 1.0.
    let mut p = NlpProblem::new(2);
    p.objective.push(quad_obj(
        2,
        DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]),
        vec![0.0, 0.0],
    ));
    p.eq.push(Block::new(
        vec![0, 1],
        Box::new(LinearBlock::single(vec![1.0, 1.0], -1.0)),
        Curvature::Quadratic,
    ));
    let sol = solve(&p, &SolveOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Converged);
    assert!((sol.x[0] - 0.5).abs() < 1e-7, "x = {:?}", sol.x);
    assert!((sol.x[1] - 0.5).abs() < 1e-7);
    assert!((sol.y_eq[0] - 1.0).abs() < 1e-6, "dual = {}", sol.y_eq[0]);
}

#[test]
fn active_bound_with_positive_multiplier() {
    // min (x−2)² s.t. x ≤ 1 → x* = 1, upper multiplier 2.
    let mut p = NlpProblem::new(1);
    p.objective.push(quad_obj(
        1,
        DMatrix::from_row_slice(1, 1, &[2.0]),
        vec![-4.0],
    ));
    p.x_bounds[0] = (f64::NEG_INFINITY, 1.0);
    p.x0 = vec![0.0];
    let sol = solve(&p, &SolveOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Converged);
    assert!((sol.x[0] - 1.0).abs() < 1e-6, "x = {}", sol.x[0]);
    assert!((sol.z_hi[0] - 2.0).abs() < 1e-5, "z_hi = {}", sol.z_hi[0]);
}

#[test]
fn random_qps_match_active_set_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..100 {
        let n = rng.random_range(2..=50);
        let mut m_mat = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m_mat[(i, j)] = rng.random_range(-1.0..1.0);
            }
        }
        let q = &m_mat.transpose() * &m_mat + DMatrix::identity(n, n) * 0.5;
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lo: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..-0.2)).collect();
        let hi: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.5)).collect();
        let with_eq = trial % 3 == 0;

        let mut p = NlpProblem::new(n);
        p.objective.push(quad_obj(n, q.clone(), c.clone()));
        for i in 0..n {
            p.x_bounds[i] = (lo[i], hi[i]);
        }
        if with_eq {
            p.eq.push(Block::new(
                (0..n).collect(),
                Box::new(LinearBlock::single(vec![1.0; n], -0.1)),
                Curvature::Quadratic,
            ));
        }
        p.x0 = vec![0.0; n];
        let sol = solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(
            sol.status,
            SolveStatus::Converged,
            "trial {trial} n={n} failed to converge"
        );

        let qp = active_set::BoxQp {
            q,
            c: DVector::from_vec(c),
            a: with_eq.then(|| DMatrix::from_element(1, n, 1.0)),
            b: DVector::from_element(1, 0.1),
            lo: DVector::from_vec(lo),
            hi: DVector::from_vec(hi),
        };
        let x0 = DVector::zeros(n);
        let (_, f_oracle) = active_set::solve(&qp, &x0);
        assert!(
            (sol.objective - f_oracle).abs() <= 1e-6 * f_oracle.abs().max(1.0),
            "trial {trial}: ip {} vs oracle {}",
            sol.objective,
            f_oracle
        );
    }
}

#[test]
fn warm_start_resolves_quickly() {
    let n = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut m_mat = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m_mat[(i, j)] = rng.random_range(-1.0..1.0);
        }
    }
    let q = &m_mat.transpose() * &m_mat + DMatrix::identity(n, n);
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let build = || {
        let mut p = NlpProblem::new(n);
        p.objective.push(quad_obj(n, q.clone(), c.clone()));
        for i in 0..n {
            p.x_bounds[i] = (-1.0, 1.0);
        }
        p.x0 = vec![0.0; n];
        p
    };
    let cold = solve(&build(), &SolveOptions::default()).unwrap();
    assert_eq!(cold.status, SolveStatus::Converged);

    let mut warm_p = build();
    warm_p.x0 = cold.x.clone();
    warm_p.warm = Some(cold.warm.clone());
    let warm = solve(&warm_p, &SolveOptions::default()).unwrap();
    assert_eq!(warm.status, SolveStatus::Converged);
    assert!(
        warm.iterations <= 3,
        "warm start took {} iterations (cold {})",
        warm.iterations,
        cold.iterations
    );
    assert!(warm.iterations * 2 <= cold.iterations);
}

#[test]
fn bfgs_handles_nonquadratic_objective() {
    // Rosenbrock restricted to a box, solved with BFGS curvature.
    struct Rosenbrock;
    impl emslab_nlp::VecBlockFn for Rosenbrock {
        fn dim(&self) -> usize {
            1
        }
        fn eval_f64(&self, x: &[f64], out: &mut [f64]) {
            out[0] = (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        }
        fn eval_dual(&self, x: &[emslab_num::Dual], out: &mut [emslab_num::Dual]) {
            use emslab_num::Scalar;
            let a = -x[0] + 1.0;
            let b = x[1] - x[0] * x[0];
            out[0] = a.powi(2) + b.powi(2) * 100.0;
        }
    }
    let mut p = NlpProblem::new(2);
    p.objective
        .push(Block::new(vec![0, 1], Box::new(Rosenbrock), Curvature::Bfgs));
    p.x_bounds[0] = (-2.0, 2.0);
    p.x_bounds[1] = (-2.0, 2.0);
    p.x0 = vec![-1.2, 1.0];
    let opts = SolveOptions {
        max_iter: 300,
        ..Default::default()
    };
    let sol = solve(&p, &opts).unwrap();
    assert_eq!(sol.status, SolveStatus::Converged);
    assert!((sol.x[0] - 1.0).abs() < 1e-4, "x = {:?}", sol.x);
    assert!((sol.x[1] - 1.0).abs() < 1e-4);
}

#[test]
fn trace_shows_monotone_barrier() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    let mut p = NlpProblem::new(3);
    p.objective.push(quad_obj(
        3,
        DMatrix::identity(3, 3) * 2.0,
        vec![-1.0, 0.5, -2.0],
    ));
    for i in 0..3 {
        p.x_bounds[i] = (-0.4, 0.4);
    }
    p.x0 = vec![0.0; 3];
    let opts = SolveOptions {
        trace: Some(path.clone()),
        ..Default::default()
    };
    let sol = solve(&p, &opts).unwrap();
    assert_eq!(sol.status, SolveStatus::Converged);
    let text = std::fs::read_to_string(&path).unwrap();
    let mut mus = Vec::new();
    for line in text.lines().skip(1) {
        let mu: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        mus.push(mu);
    }
    assert!(mus.len() >= 2);
    for w in mus.windows(2) {
        assert!(w[1] <= w[0] + 1e-15, "barrier increased: {:?}", w);
    }
    assert!(*mus.last().unwrap() < mus[0]);
}

#[test]
fn infeasible_start_recovers() {
    // Start far outside the bounds and the equality manifold.
    let mut p = NlpProblem::new(2);
    p.objective.push(quad_obj(
        2,
        DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]),
        vec![0.0, 0.0],
    ));
    p.eq.push(Block::new(
        vec![0, 1],
        Box::new(LinearBlock::single(vec![1.0, 2.0], -2.0)),
        Curvature::Quadratic,
    ));
    p.x_bounds[0] = (0.0, 10.0);
    p.x_bounds[1] = (0.0, 10.0);
    p.x0 = vec![8.0, 9.0];
    let sol = solve(&p, &SolveOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Converged);
    // KKT by hand: x = (2/3)·(1, 1)... check constraint and stationarity.
    assert!((sol.x[0] + 2.0 * sol.x[1] - 2.0).abs() < 1e-6);
    let g = [2.0 * sol.x[0], 4.0 * sol.x[1]];
    let ratio = g[0] / 1.0;
    assert!((g[1] / 2.0 - ratio).abs() < 1e-4);
}
