use thiserror::Error;

#[derive(Debug, Error)]
pub enum PowertrainError {
    #[error("engine speed {omega:.1} rad/s outside [{min:.1}, {max:.1}] rad/s")]
    SpeedOutOfRange { omega: f64, min: f64, max: f64 },

    #[error("EM torque {t_em:.1} N·m outside [{t_min:.1}, {t_max:.1}] N·m at {omega:.1} rad/s")]
    EmTorqueOutOfRange {
        t_em: f64,
        t_min: f64,
        t_max: f64,
        omega: f64,
    },

    #[error("gear {gear} invalid, gearbox has {count} ratios")]
    InvalidGear { gear: usize, count: usize },

    #[error("battery cannot deliver {power:.0} W at V_oc {voc:.1} V (discriminant negative)")]
    BatteryPowerInfeasible { power: f64, voc: f64 },

    #[error("invalid vehicle parameters: {0}")]
    InvalidParams(String),

    #[error("config parse error: {0}")]
    Config(#[from] serde_json::Error),

    #[error("config io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PowertrainError>;
