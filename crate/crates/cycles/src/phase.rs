//! Surrogate series by spectral phase randomization: same power spectrum
//! magnitude, new time-domain realization.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{CycleError, Result};

fn fft_forward(series: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = series.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new()
        .plan_fft_forward(series.len())
        .process(&mut buf);
    buf
}

/// Per-bin magnitude of the discrete Fourier transform.
pub fn spectrum_magnitude(series: &[f64]) -> Vec<f64> {
    fft_forward(series).iter().map(|c| c.norm()).collect()
}

/// Rebuild a real series from the base's spectrum magnitudes and the given
/// phases for bins `1..n/2`. DC (and the Nyquist bin for even lengths) keep
/// their original values; conjugate symmetry is enforced.
pub fn surrogate_with_phases(base: &[f64], phases: &[f64]) -> Result<Vec<f64>> {
    let n = base.len();
    if n < 64 {
        return Err(CycleError::BadSpec(format!(
            "phase randomization needs >= 64 samples, got {n}"
        )));
    }
    let half = (n - 1) / 2;
    if phases.len() != half {
        return Err(CycleError::BadSpec(format!(
            "expected {half} phases, got {}",
            phases.len()
        )));
    }
    let mut spec = fft_forward(base);
    for k in 1..=half {
        let mag = spec[k].norm();
        let rotated = Complex::from_polar(mag, phases[k - 1]);
        spec[k] = rotated;
        spec[n - k] = rotated.conj();
    }
    let mut buf = spec;
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    Ok(buf.iter().map(|c| c.re / n as f64).collect())
}

/// Phases of the base series itself for bins `1..n/2`; feeding them back into
/// [`surrogate_with_phases`] reproduces the input.
pub fn original_phases(base: &[f64]) -> Vec<f64> {
    let n = base.len();
    let spec = fft_forward(base);
    (1..=(n - 1) / 2).map(|k| spec[k].arg()).collect()
}

/// Seeded phase-randomized surrogate of the base series.
pub fn phase_randomize(base: &[f64], seed: u64) -> Result<Vec<f64>> {
    let n = base.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases: Vec<f64> = (0..(n - 1) / 2)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    surrogate_with_phases(base, &phases)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_series(n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let t = i as f64 * 0.05;
                3.0 + 0.9 * (0.31 * t).sin() + 0.4 * (1.17 * t + 0.5).sin()
            })
            .collect()
    }

    #[test]
    fn magnitude_preserved_bin_by_bin() {
        for n in [128usize, 255, 1024] {
            let base = base_series(n);
            let surr = phase_randomize(&base, 9).unwrap();
            let ms = spectrum_magnitude(&base);
            let mo = spectrum_magnitude(&surr);
            let scale = ms.iter().cloned().fold(0.0f64, f64::max);
            for (k, (a, b)) in ms.iter().zip(&mo).enumerate() {
                assert!(
                    (a - b).abs() <= 1e-10 * scale,
                    "n={n} bin {k}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn seeded_determinism_is_bitwise() {
        let base = base_series(512);
        let a = phase_randomize(&base, 1234).unwrap();
        let b = phase_randomize(&base, 1234).unwrap();
        assert_eq!(a, b);
        let c = phase_randomize(&base, 1235).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn identity_phases_reproduce_input() {
        let base = base_series(300);
        let phases = original_phases(&base);
        let back = surrogate_with_phases(&base, &phases).unwrap();
        for (a, b) in base.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn mean_and_variance_preserved() {
        let base = base_series(2048);
        let surr = phase_randomize(&base, 7).unwrap();
        let stats = |s: &[f64]| {
            let m = s.iter().sum::<f64>() / s.len() as f64;
            let v = s.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / s.len() as f64;
            (m, v)
        };
        let (mb, vb) = stats(&base);
        let (ms, vs) = stats(&surr);
        assert!((mb - ms).abs() < 1e-9 * mb.abs());
        assert!((vb - vs).abs() < 0.02 * vb);
    }

    #[test]
    fn short_series_rejected() {
        assert!(phase_randomize(&[1.0; 63], 0).is_err());
    }
}
