use alloc::string::String;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("non-finite value in channel {channel} at row {row}")]
    NonFinite { channel: usize, row: usize },

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("kernel row {0} has zero degree")]
    ZeroDegree(usize),

    #[error("eigenpair {index} is complex (relative imaginary part {relative_imag:e})")]
    ComplexEigenpair { index: usize, relative_imag: f64 },

    #[error("eigensolver did not converge")]
    NoConvergence,

    #[error("eigenvalue of component {component} is {value:e}, below the extension floor")]
    EigenvalueFloor { component: usize, value: f64 },

    #[error("squared diffusion {value:e} below floor")]
    DiffusionFloor { value: f64 },

    #[error("trajectory left the guard box at step {step}")]
    GuardBox { step: usize },

    #[error("window [{start}, {end}] does not fit a trajectory of length {len}")]
    Window { start: usize, end: usize, len: usize },

    #[error("no ensemble origin lies in region A")]
    NoOriginInRegion,
}

pub type Result<T> = core::result::Result<T, Error>;
