//! Efficiency surfaces and torque-limit curves.

use emslab_num::{smooth_min, smooth_positive, Scalar};
use serde::{Deserialize, Serialize};

use crate::error::{PowertrainError, Result};

/// Polynomial surface in normalized torque/speed coordinates:
/// `p(T, Ω) = Σ c[i][j] (T/t_ref)^i (Ω/omega_ref)^j`, coefficients stored
/// row-major with `j` fastest.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PolySurface {
    pub t_ref: f64,
    pub omega_ref: f64,
    pub deg_t: usize,
    pub deg_omega: usize,
    pub coeffs: Vec<f64>,
}

impl PolySurface {
    pub fn validate(&self) -> Result<()> {
        let expect = (self.deg_t + 1) * (self.deg_omega + 1);
        if self.coeffs.len() != expect {
            return Err(PowertrainError::InvalidParams(format!(
                "surface degree ({},{}) needs {} coefficients, got {}",
                self.deg_t,
                self.deg_omega,
                expect,
                self.coeffs.len()
            )));
        }
        if self.t_ref <= 0.0 || self.omega_ref <= 0.0 {
            return Err(PowertrainError::InvalidParams(
                "surface reference scales must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn eval<S: Scalar>(&self, torque: S, omega: S) -> S {
        let u = torque / self.t_ref;
        let w = omega / self.omega_ref;
        // Horner in u, inner Horner in w.
        let mut acc = S::from_f64(0.0);
        for i in (0..=self.deg_t).rev() {
            let row = &self.coeffs[i * (self.deg_omega + 1)..(i + 1) * (self.deg_omega + 1)];
            let mut inner = S::from_f64(0.0);
            for &c in row.iter().rev() {
                inner = inner * w + c;
            }
            acc = acc * u + inner;
        }
        acc
    }
}

/// Quadratic curve `c0 + c1 Ω + c2 Ω²` (engine maximum torque vs speed).
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct QuadCurve {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl QuadCurve {
    pub fn eval<S: Scalar>(&self, omega: S) -> S {
        (omega * self.c2 + self.c1) * omega + self.c0
    }
}

/// Width of the smooth floor/ceiling blends applied to efficiency surfaces.
const ETA_BLEND_WIDTH: f64 = 0.01;

fn bounded_eta<S: Scalar>(raw: S, floor: f64, ceil: f64) -> S {
    let capped = -smooth_positive(-raw + ceil, ETA_BLEND_WIDTH) + ceil;
    smooth_positive(capped - floor, ETA_BLEND_WIDTH) + floor
}

/// ICE efficiency map with speed limits and maximum-torque curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IceMap {
    pub efficiency_poly: PolySurface,
    pub eta_floor: f64,
    pub eta_ceil: f64,
    /// rad/s
    pub omega_min: f64,
    /// rad/s
    pub omega_max: f64,
    pub torque_max_curve: QuadCurve,
    /// Lower heating value, J/kg.
    pub lambda_f: f64,
    /// Friction torque magnitude at zero injection, N·m.
    pub t_friction: f64,
}

impl IceMap {
    pub fn validate(&self) -> Result<()> {
        self.efficiency_poly.validate()?;
        if !(self.omega_min > 0.0 && self.omega_max > self.omega_min) {
            return Err(PowertrainError::InvalidParams(
                "ICE speed limits must satisfy 0 < omega_min < omega_max".into(),
            ));
        }
        if self.lambda_f <= 0.0 || self.t_friction < 0.0 {
            return Err(PowertrainError::InvalidParams(
                "lambda_f must be positive and t_friction non-negative".into(),
            ));
        }
        if !(0.0 < self.eta_floor && self.eta_floor < self.eta_ceil && self.eta_ceil < 1.0) {
            return Err(PowertrainError::InvalidParams(
                "ICE efficiency bounds must satisfy 0 < floor < ceil < 1".into(),
            ));
        }
        // Max torque positive across the admissible speed band.
        let steps = 64;
        for k in 0..=steps {
            let omega =
                self.omega_min + (self.omega_max - self.omega_min) * k as f64 / steps as f64;
            if self.torque_max_curve.eval(omega) <= 0.0 {
                return Err(PowertrainError::InvalidParams(format!(
                    "torque_max_curve non-positive at {omega:.1} rad/s"
                )));
            }
        }
        Ok(())
    }

    pub fn check_speed(&self, omega: f64) -> Result<()> {
        if omega < self.omega_min || omega > self.omega_max {
            return Err(PowertrainError::SpeedOutOfRange {
                omega,
                min: self.omega_min,
                max: self.omega_max,
            });
        }
        Ok(())
    }

    /// Bounded efficiency, defined (and smooth) for any torque/speed.
    pub fn efficiency<S: Scalar>(&self, torque: S, omega: S) -> S {
        bounded_eta(
            self.efficiency_poly.eval(torque, omega),
            self.eta_floor,
            self.eta_ceil,
        )
    }

    pub fn torque_max<S: Scalar>(&self, omega: S) -> S {
        self.torque_max_curve.eval(omega)
    }

    /// Synthetic default: concave surface peaking at 0.35 near 1600 rpm and
    /// 80 % of the maximum torque there.
    pub fn synthetic_default() -> Self {
        let torque_max_curve = QuadCurve {
            c0: 230.0,
            c1: 2.42,
            c2: -7.7e-3,
        };
        let (t_ref, omega_ref) = (400.0, 200.0);
        let omega_peak: f64 = 1600.0 * std::f64::consts::PI / 30.0; // rad/s
        let t_peak = 0.8 * torque_max_curve.eval(omega_peak);
        let (u0, w0) = (t_peak / t_ref, omega_peak / omega_ref);
        let (eta0, a_t, a_w, a_x) = (0.35, 0.41, 0.20, 0.05);
        // Expand eta0 - a_t (u-u0)^2 - a_w (w-w0)^2 - a_x (u-u0)(w-w0).
        let coeffs = vec![
            eta0 - a_t * u0 * u0 - a_w * w0 * w0 - a_x * u0 * w0, // 1
            2.0 * a_w * w0 + a_x * u0,                            // w
            -a_w,                                                 // w^2
            2.0 * a_t * u0 + a_x * w0,                            // u
            -a_x,                                                 // u w
            0.0,                                                  // u w^2
            -a_t,                                                 // u^2
            0.0,                                                  // u^2 w
            0.0,                                                  // u^2 w^2
        ];
        IceMap {
            efficiency_poly: PolySurface {
                t_ref,
                omega_ref,
                deg_t: 2,
                deg_omega: 2,
                coeffs,
            },
            eta_floor: 0.05,
            eta_ceil: 0.40,
            omega_min: 900.0 * std::f64::consts::PI / 30.0,
            omega_max: 2450.0 * std::f64::consts::PI / 30.0,
            torque_max_curve,
            lambda_f: 42.68e6,
            t_friction: 30.0,
        }
    }
}

/// EM efficiency map with asymmetric speed-dependent torque limits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmMap {
    pub efficiency_poly: PolySurface,
    pub eta_floor: f64,
    pub eta_ceil: f64,
    /// Constant-torque plateau in traction, N·m.
    pub t_max_const: f64,
    /// Power limit in traction, W.
    pub p_max_traction: f64,
    /// Constant-torque plateau magnitude in recharge, N·m.
    pub t_min_const: f64,
    /// Power limit magnitude in recharge, W.
    pub p_max_recharge: f64,
    /// Blend width of the torque/power corner, N·m.
    pub limit_blend_width: f64,
    /// rad/s, upper bound of the map's validity.
    pub omega_max: f64,
}

impl EmMap {
    pub fn validate(&self) -> Result<()> {
        self.efficiency_poly.validate()?;
        if self.t_max_const <= 0.0 || self.t_min_const <= 0.0 {
            return Err(PowertrainError::InvalidParams(
                "EM torque plateaus must be positive magnitudes".into(),
            ));
        }
        if self.p_max_traction <= 0.0 || self.p_max_recharge <= 0.0 {
            return Err(PowertrainError::InvalidParams(
                "EM power limits must be positive".into(),
            ));
        }
        if !(0.0 < self.eta_floor && self.eta_floor < self.eta_ceil && self.eta_ceil < 1.0) {
            return Err(PowertrainError::InvalidParams(
                "EM efficiency bounds must satisfy 0 < floor < ceil < 1".into(),
            ));
        }
        Ok(())
    }

    pub fn efficiency<S: Scalar>(&self, torque: S, omega: S) -> S {
        bounded_eta(
            self.efficiency_poly.eval(torque, omega),
            self.eta_floor,
            self.eta_ceil,
        )
    }

    /// Speed-dependent traction limit (> 0): torque plateau blended into the
    /// constant-power hyperbola.
    pub fn t_max_curve<S: Scalar>(&self, omega: S) -> S {
        let omega_safe = smooth_positive(omega, 2.0) + 1.0;
        smooth_min(
            S::from_f64(self.t_max_const),
            S::from_f64(self.p_max_traction) / omega_safe,
            self.limit_blend_width,
        )
    }

    /// Speed-dependent recharge limit (< 0).
    pub fn t_min_curve<S: Scalar>(&self, omega: S) -> S {
        let omega_safe = smooth_positive(omega, 2.0) + 1.0;
        -smooth_min(
            S::from_f64(self.t_min_const),
            S::from_f64(self.p_max_recharge) / omega_safe,
            self.limit_blend_width,
        )
    }

    pub fn check_torque(&self, t_em: f64, omega: f64) -> Result<()> {
        let t_min = self.t_min_curve(omega);
        let t_max = self.t_max_curve(omega);
        if t_em < t_min || t_em > t_max {
            return Err(PowertrainError::EmTorqueOutOfRange {
                t_em,
                t_min,
                t_max,
                omega,
            });
        }
        Ok(())
    }

    /// Synthetic default peaking at 0.92.
    pub fn synthetic_default() -> Self {
        let (t_ref, omega_ref) = (250.0, 200.0);
        let (u0, w0) = (0.5, 0.9);
        let (eta0, a_t, a_w) = (0.92, 0.10, 0.05);
        let coeffs = vec![
            eta0 - a_t * u0 * u0 - a_w * w0 * w0, // 1
            2.0 * a_w * w0,                       // w
            -a_w,                                 // w^2
            2.0 * a_t * u0,                       // u
            0.0,                                  // u w
            0.0,                                  // u w^2
            -a_t,                                 // u^2
            0.0,                                  // u^2 w
            0.0,                                  // u^2 w^2
        ];
        EmMap {
            efficiency_poly: PolySurface {
                t_ref,
                omega_ref,
                deg_t: 2,
                deg_omega: 2,
                coeffs,
            },
            eta_floor: 0.30,
            eta_ceil: 0.95,
            t_max_const: 250.0,
            p_max_traction: 45.0e3,
            t_min_const: 200.0,
            p_max_recharge: 36.0e3,
            limit_blend_width: 10.0,
            omega_max: 270.0,
        }
    }
}
