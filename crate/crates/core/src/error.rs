use thiserror::Error;

/// Errors raised by model evaluation, estimation and experiment drivers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("rank-deficient dictionary at x = {x:?} (singular value ratio {ratio:e})")]
    Degenerate { x: Vec<f64>, ratio: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("support packing infeasible: placed {placed} of {requested} spikes")]
    PackingInfeasible { placed: usize, requested: usize },

    #[error("coverage error: every sample rejected at radius {radius:e}")]
    Coverage { radius: f64 },

    #[error("input error: {0}")]
    Input(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
