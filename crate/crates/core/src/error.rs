use std::path::PathBuf;

/// Errors raised by the chain, averaging, reconstruction and closure routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("potential argument must be positive, got {0}")]
    NonPositiveArgument(f64),

    #[error("particles {left} and {right} coincide or are out of order (gap {gap:e})")]
    DegenerateGeometry { left: usize, right: usize, gap: f64 },

    #[error("particle ordering lost at t = {t} (particles {left}, {right}); reduce the time step")]
    BlowUp { t: f64, left: usize, right: usize },

    #[error("cell {beta} has no particles inside the window support")]
    EmptyCell { beta: usize },

    #[error(
        "grid mismatch: expected {expected} samples on length {expected_l}, got {got} on {got_l}"
    )]
    GridMismatch {
        expected: usize,
        got: usize,
        expected_l: f64,
        got_l: f64,
    },

    #[error("reconstructed density {value:e} at x = {x} is below the vacuum threshold")]
    NearVacuum { x: f64, value: f64 },

    #[error("reconstructed jacobian {value:e} at x = {x} is not positive")]
    ReconstructionFailure { x: f64, value: f64 },

    #[error("density must be positive, got {value:e} at x = {x}")]
    ZeroDensity { x: f64, value: f64 },

    #[error("prescription is infeasible: energy budget is short by {deficit:e}")]
    InfeasiblePrescription { deficit: f64 },

    #[error("CFL number {cfl:.3} exceeds the limit {limit}")]
    Cfl { cfl: f64, limit: f64 },

    #[error("density became non-positive in cell {beta} at t = {t}")]
    NegativeDensity { beta: usize, t: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
