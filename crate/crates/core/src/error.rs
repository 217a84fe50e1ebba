use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("unbound parameter `{0}`")]
    UnboundParameter(String),

    #[error("mode index {index} out of range ({available} available)")]
    ModeIndex { index: usize, available: usize },

    #[error("matrix is not Hermitian (defect {0:.3e})")]
    NotHermitian(f64),

    #[error("frame degeneracy: {0}")]
    FrameDegeneracy(String),

    #[error("step-size error: {0}")]
    StepSize(String),

    #[error("truncation error: {0}")]
    Truncation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for errors caused by user input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Parse { .. }
                | Error::Model(_)
                | Error::UnboundParameter(_)
                | Error::ModeIndex { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
