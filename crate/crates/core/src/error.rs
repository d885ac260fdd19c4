use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input text could not be parsed (dataset rows, config documents).
    #[error("parse error: {0}")]
    Parse(String),

    /// Input parsed but violates a data or model invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("history `{id}` is impossible under the model (forward mass vanished at occasion {occasion})")]
    ImpossibleHistory { id: String, occasion: usize },

    #[error("covariate value {value} lies outside the grid range [{lower}, {upper}]")]
    OutsideGrid { value: f64, lower: f64, upper: f64 },

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("brute-force enumeration needs {terms} terms, limit is {limit}")]
    InstanceTooLarge { terms: f64, limit: f64 },

    #[error("likelihood is not finite at the initial parameter values")]
    NonFiniteInit,

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("fits were computed on different datasets ({0} vs {1})")]
    MixedDatasets(String, String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
