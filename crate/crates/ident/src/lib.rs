//! Reproduction of the identification pipeline on synthetic test data: the
//! fits recover the parameters the plant was built from.

pub mod coastdown;
pub mod nelder_mead;
pub mod surface;
pub mod pi_gains;

pub use coastdown::fit_coastdown;
pub use nelder_mead::nelder_mead;
pub use pi_gains::{fit_pi_gains, staircase_cycle, PiFit, PiFitConfig};
pub use surface::{fit_polynomial_surface, FitResult, SurfaceSample};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IdentError {
    #[error("degenerate fit: {0}")]
    Degenerate(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("sim: {0}")]
    Sim(#[from] emslab_sim::SimError),

    #[error("powertrain: {0}")]
    Powertrain(#[from] emslab_powertrain::PowertrainError),
}

pub type Result<T> = std::result::Result<T, IdentError>;
