use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("powertrain: {0}")]
    Powertrain(#[from] emslab_powertrain::PowertrainError),

    #[error("invalid cycle: {0}")]
    InvalidCycle(String),

    #[error("invalid simulation options: {0}")]
    InvalidOptions(String),

    #[error("simulation aborted at t = {t:.3} s: {reason}")]
    Aborted { t: f64, reason: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;
