use thiserror::Error;

use crate::linalg::SingularMatrix;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid effect curve: {0}")]
    InvalidCurve(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("model {model} is not identifiable on this layout: {detail}")]
    NotIdentifiable { model: String, detail: String },

    #[error("singular system while {context}: {source}")]
    Singular {
        context: String,
        #[source]
        source: SingularMatrix,
    },

    #[error("degenerate closed form: {0}")]
    Degenerate(String),

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    NoConvergence {
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("dataset error at line {line}: {message}")]
    Data { line: usize, message: String },

    #[error("study aborted: {failures} of {replicates} replicates failed in scenario {scenario}")]
    StudyAborted {
        scenario: String,
        failures: usize,
        replicates: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn singular(context: impl Into<String>, source: SingularMatrix) -> Self {
        Error::Singular {
            context: context.into(),
            source,
        }
    }

    /// Failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::Degenerate(_)
                | Error::NoConvergence { .. }
                | Error::StudyAborted { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
