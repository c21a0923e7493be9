use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("parameter `{name}` = {value} is out of range, expected {expected}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("interval ({lo}, {hi}] is not aligned to the grid cells")]
    Misaligned { lo: f64, hi: f64 },

    #[error("covariance matrix is not positive definite (after jitter {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unsupported specification: {0}")]
    Unsupported(String),

    #[error("Picard iteration did not converge within {iterations} iterations (last distance {last:e})")]
    NonConvergence {
        iterations: usize,
        last: f64,
        distances: Vec<f64>,
    },

    #[error("cutoff still active after {retries} doublings of N (N = {n_cutoff})")]
    CutoffRetriesExhausted { retries: usize, n_cutoff: f64 },

    #[error("time average does not exist: {0}")]
    NoTimeAverage(String),

    #[error("bounded-primitive condition violated: sup |G| grew from {first:e} to {second:e}")]
    UnboundedPrimitive { first: f64, second: f64 },

    #[error("solve failed for epsilon = {epsilon}: {source}")]
    Averaging {
        epsilon: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn out_of_range(name: &'static str, value: f64, expected: &'static str) -> Self {
        Error::OutOfRange {
            name,
            value,
            expected,
        }
    }
}
