use thiserror::Error;

#[derive(Debug, Error)]
pub enum NlpError {
    #[error("ill-formed problem: {0}")]
    BadProblem(String),

    #[error("non-finite derivative in {context} (block {block}, row {row}, local var {col})")]
    NonFiniteDerivative {
        context: &'static str,
        block: usize,
        row: usize,
        col: usize,
    },

    #[error("derivative check failed: {0}")]
    DerivativeMismatch(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NlpError>;
