//! Least-squares polynomial surface fitting of efficiency samples.

use emslab_powertrain::PolySurface;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{IdentError, Result};

#[derive(Debug, Clone, Copy)]
pub struct SurfaceSample {
    pub torque: f64,
    pub omega: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub coefficients: Vec<f64>,
    pub residual_rms: f64,
    pub sample_count: usize,
    /// Ratio of largest to smallest singular value of the design matrix.
    pub condition: f64,
}

/// Fit `η(T, Ω)` as a tensor polynomial of the given degrees; reference
/// scales normalize the design matrix.
pub fn fit_polynomial_surface(
    samples: &[SurfaceSample],
    deg_t: usize,
    deg_omega: usize,
    t_ref: f64,
    omega_ref: f64,
) -> Result<(PolySurface, FitResult)> {
    let n_coef = (deg_t + 1) * (deg_omega + 1);
    if samples.len() < n_coef {
        return Err(IdentError::InsufficientData(format!(
            "{} samples for {n_coef} coefficients",
            samples.len()
        )));
    }
    let mut design = DMatrix::zeros(samples.len(), n_coef);
    let mut rhs = DVector::zeros(samples.len());
    for (row, s) in samples.iter().enumerate() {
        let u = s.torque / t_ref;
        let w = s.omega / omega_ref;
        for i in 0..=deg_t {
            for j in 0..=deg_omega {
                design[(row, i * (deg_omega + 1) + j)] = u.powi(i as i32) * w.powi(j as i32);
            }
        }
        rhs[row] = s.eta;
    }
    let svd = design.clone().svd(true, true);
    let s_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let s_min = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if s_min <= 1e-10 * s_max {
        return Err(IdentError::Degenerate(format!(
            "design matrix rank-deficient (condition {:.3e})",
            s_max / s_min.max(1e-300)
        )));
    }
    let coeffs = svd
        .solve(&rhs, 1e-12)
        .map_err(|e| IdentError::Degenerate(e.to_string()))?;
    let resid = &design * &coeffs - &rhs;
    let residual_rms = (resid.norm_squared() / samples.len() as f64).sqrt();
    let surface = PolySurface {
        t_ref,
        omega_ref,
        deg_t,
        deg_omega,
        coeffs: coeffs.iter().cloned().collect(),
    };
    let fit = FitResult {
        coefficients: surface.coeffs.clone(),
        residual_rms,
        sample_count: samples.len(),
        condition: s_max / s_min,
    };
    Ok((surface, fit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn truth() -> PolySurface {
        emslab_powertrain::IceMap::synthetic_default().efficiency_poly
    }

    fn sample_grid(noise: f64, rng: &mut ChaCha8Rng) -> Vec<SurfaceSample> {
        let s = truth();
        let mut out = Vec::new();
        for i in 0..12 {
            for j in 0..12 {
                let torque = 20.0 + 380.0 * i as f64 / 11.0;
                let omega = 100.0 + 150.0 * j as f64 / 11.0;
                let eta: f64 = s.eval(torque, omega);
                let eps = if noise > 0.0 {
                    let u1: f64 = rng.random_range(1e-12..1.0);
                    let u2: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    noise * (-2.0 * u1.ln()).sqrt() * u2.cos()
                } else {
                    0.0
                };
                out.push(SurfaceSample {
                    torque,
                    omega,
                    eta: eta + eps,
                });
            }
        }
        out
    }

    #[test]
    fn exact_model_recovered_to_machine_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let samples = sample_grid(0.0, &mut rng);
        let (fit, result) = fit_polynomial_surface(&samples, 2, 2, 400.0, 200.0).unwrap();
        for (a, b) in fit.coeffs.iter().zip(&truth().coeffs) {
            assert!((a - b).abs() < 1e-8, "coefficient {a} vs {b}");
        }
        assert!(result.residual_rms < 1e-10);
    }

    #[test]
    fn noisy_fit_reports_noise_floor() {
        // Monte-Carlo over seeds: the residual RMS estimates sigma.
        let sigma = 0.01;
        let mut ratios = Vec::new();
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let samples = sample_grid(sigma, &mut rng);
            let (_, result) = fit_polynomial_surface(&samples, 2, 2, 400.0, 200.0).unwrap();
            ratios.push(result.residual_rms / sigma);
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!((mean - 1.0).abs() < 0.2, "residual/σ mean {mean}");
    }

    #[test]
    fn constant_surface_kills_higher_terms() {
        let samples: Vec<SurfaceSample> = (0..60)
            .map(|k| SurfaceSample {
                torque: 30.0 + 5.0 * k as f64,
                omega: 100.0 + 2.0 * (k % 17) as f64,
                eta: 0.31,
            })
            .collect();
        let (fit, _) = fit_polynomial_surface(&samples, 2, 2, 400.0, 200.0).unwrap();
        assert!((fit.coeffs[0] - 0.31).abs() < 1e-9);
        for &c in &fit.coeffs[1..] {
            assert!(c.abs() < 1e-8, "non-constant coefficient {c}");
        }
    }

    #[test]
    fn rank_deficiency_detected() {
        // All samples on one speed line cannot identify omega terms.
        let samples: Vec<SurfaceSample> = (0..40)
            .map(|k| SurfaceSample {
                torque: 10.0 + 9.0 * k as f64,
                omega: 150.0,
                eta: 0.3,
            })
            .collect();
        assert!(fit_polynomial_surface(&samples, 2, 2, 400.0, 200.0).is_err());
    }
}
