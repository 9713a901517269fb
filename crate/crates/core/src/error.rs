use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("problem too large: {cells} cells exceeds the cap of {cap}")]
    Capacity { cells: usize, cap: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("CFL condition violated: dt = {dt:.6e} but the scheme requires dt <= {required:.6e} (K >= {min_steps})")]
    Cfl {
        dt: f64,
        required: f64,
        min_steps: usize,
    },

    #[error("scheme error: {0}")]
    Scheme(String),

    #[error("divergence detected at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    #[error("best response was computed against belief {computed_at} but the state is at {current}")]
    StaleBestResponse { computed_at: usize, current: usize },

    #[error("sequence too short: {len} points, need at least {min}")]
    ShortSequence { len: usize, min: usize },
}

impl Error {
    /// Attaches the loop iteration to a divergence raised inside a solver.
    pub fn at_iteration(self, n: usize) -> Self {
        match self {
            Error::Divergence { detail, .. } => Error::Divergence { iteration: n, detail },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
