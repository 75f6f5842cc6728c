use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("inverse transform left an imaginary residue of {0:e}")]
    ImaginaryResidue(f64),

    /// Cholesky factorization of `lambda*I - W` failed, so `lambda` does not
    /// exceed the largest eigenvalue of `W`.
    #[error("lambda below spectral bound (factorization failed at pivot {pivot})")]
    LambdaBelowSpectralBound { pivot: usize },

    #[error("operation requires a finite lambda")]
    InfiniteLambda,

    #[error("{what} did not converge after {iterations} iterations (last estimate {last})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        last: f64,
    },

    #[error("dynamics did not converge after {steps} steps")]
    DynamicsNotConverged { steps: usize, state: Vec<f64> },

    #[error("step too large: hidden state diverged after {steps} steps")]
    StepTooLarge { steps: usize },

    #[error("{path}: {}", describe_io(source))]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate ranking: zero rank variance")]
    DegenerateRanking,

    #[error("{0}")]
    Invalid(String),
}

fn describe_io(e: &std::io::Error) -> String {
    match e.kind() {
        std::io::ErrorKind::NotFound => "file not found".to_string(),
        _ => e.to_string(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
