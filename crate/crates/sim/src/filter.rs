//! First-order reference prefilter, discretized exactly under zero-order hold.

/// Advance the low-pass state over `dt` with the input held at
/// `omega_ref_raw`. Exact solution of `ẏ = 2π f_c (u - y)`.
pub fn prefilter_step(omega_ref_raw: f64, state: f64, dt: f64, cutoff_hz: f64) -> f64 {
    let decay = (-2.0 * std::f64::consts::PI * cutoff_hz * dt).exp();
    omega_ref_raw + (state - omega_ref_raw) * decay
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUTOFF: f64 = 1.5;

    #[test]
    fn zero_in_zero_state_stays_zero() {
        assert_eq!(prefilter_step(0.0, 0.0, 0.01, CUTOFF), 0.0);
    }

    #[test]
    fn unit_step_one_time_constant() {
        let tau = 1.0 / (2.0 * std::f64::consts::PI * CUTOFF);
        let dt = 1e-3;
        let n = (tau / dt).round() as usize;
        let mut y = 0.0;
        for _ in 0..n {
            y = prefilter_step(1.0, y, dt, CUTOFF);
        }
        assert!((y - (1.0 - (-1.0f64).exp())).abs() < 1e-3, "y = {y}");
    }

    #[test]
    fn settling_to_95_percent() {
        // 3τ ≈ 0.318 s for the 1.5 Hz filter.
        let tau = 1.0 / (2.0 * std::f64::consts::PI * CUTOFF);
        assert!((3.0 * tau - 0.318).abs() < 1e-3);
        let y = prefilter_step(1.0, 0.0, 3.0 * tau, CUTOFF);
        assert!((y - 0.95).abs() < 0.003, "y = {y}");
    }

    #[test]
    fn constant_input_converges_exactly() {
        let mut y = 40.0;
        for _ in 0..2000 {
            y = prefilter_step(120.0, y, 0.01, CUTOFF);
        }
        assert!((y - 120.0).abs() < 1e-9);
    }
}
