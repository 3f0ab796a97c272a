use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("malformed scenario document: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A prior variance of exactly zero was passed where a finite precision is required.
    #[error("degenerate input: prior variance of user {user} is {value}")]
    DegenerateVariance { user: usize, value: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("extrinsic SINR of user {user} is not positive ({value:e})")]
    NonPositiveSinr { user: usize, value: f64 },

    #[error("quadrature did not converge after {panels} panels (last estimates {previous:.12e}, {last:.12e})")]
    Quadrature {
        panels: usize,
        previous: f64,
        last: f64,
    },

    #[error("rate computation failed at gamma {gamma:?}: {source}")]
    AtGamma {
        gamma: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("psi samples are not monotone at index {0}")]
    NonMonotone(usize),

    #[error("invalid decoding order: {0}")]
    InvalidOrder(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
