use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("expected a field in {expected} representation, got {found}")]
    Representation {
        expected: &'static str,
        found: &'static str,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("region {region} violates the evaluation margin: {detail}")]
    Margin { region: String, detail: String },

    #[error("trajectory is missing the snapshot at t = {0}")]
    MissingSnapshot(f64),

    #[error("eta undefined: dissipation rate {0} is not positive (laminar limit)")]
    LaminarLimit(f64),

    #[error("time step {dt} exceeds the stability bound {bound}")]
    StepTooLarge { dt: f64, bound: f64 },

    #[error("fewer than three usable shells in the fit range ({0} survived)")]
    TooFewShells(usize),

    #[error("sink failed: {0}")]
    Sink(String),
}

pub type Result<T> = std::result::Result<T, Error>;
