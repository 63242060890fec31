use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("frequency {omega} lies within {window:e} of rest-space pole {pole}")]
    PoleProximity { omega: f64, pole: f64, window: f64 },

    #[error("no fixed point in [{lo}, {hi}] on branch {branch}")]
    NoFixedPoint { lo: f64, hi: f64, branch: usize },

    #[error("no usable frequency samples: every grid point falls inside a pole window")]
    EmptyGrid,

    #[error("{what} did not converge after {iterations} iterations (last change {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("numeric consistency check failed: {0}")]
    NumericConsistency(String),

    #[error("branch tracking failed near omega = {omega} (best overlap {overlap})")]
    TrackingFailure { omega: f64, overlap: f64 },

    #[error("coupling block vanishes; kernel is undefined")]
    DegenerateKernel,

    #[error("coupling kernel is rank deficient (smallest/largest singular value {ratio:e})")]
    RankDeficientKernel { ratio: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures caused by the numbers themselves rather than by the
    /// caller's input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::PoleProximity { .. }
                | Error::NoFixedPoint { .. }
                | Error::EmptyGrid
                | Error::NonConvergence { .. }
                | Error::NumericConsistency(_)
                | Error::TrackingFailure { .. }
                | Error::DegenerateKernel
                | Error::RankDeficientKernel { .. }
        )
    }
}
