use thiserror::Error;

#[derive(Debug, Error)]
pub enum CycleError {
    #[error("bad cycle spec: {0}")]
    BadSpec(String),

    #[error("generated cycle infeasible: {0}")]
    Infeasible(String),

    #[error("powertrain: {0}")]
    Powertrain(#[from] emslab_powertrain::PowertrainError),
}

pub type Result<T> = std::result::Result<T, CycleError>;
