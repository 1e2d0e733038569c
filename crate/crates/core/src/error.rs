//! Error types shared across the crate.

use crate::dynamics::Trajectory;
use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("trajectory diverged at t = {time}: {detail}")]
    Divergence { time: f64, detail: String },

    /// Divergence during `simulate`; the states computed so far are attached.
    #[error("simulation diverged at t = {time}")]
    SimulationDiverged { time: f64, partial: Box<Trajectory> },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("ill-conditioned problem: {detail} (numerical rank {rank}, needed {needed})")]
    Conditioning {
        rank: usize,
        needed: usize,
        detail: String,
    },

    #[error("singular Jacobian at {location:?}: |det| = {det:e}")]
    SingularJacobian { location: Vec<f64>, det: f64 },

    #[error("unknown system '{name}'; valid names: {valid}")]
    UnknownSystem { name: String, valid: String },

    #[error("CFL violation: dt = {dt:e} exceeds admissible dt = {dt_max:e}")]
    CflViolation { dt: f64, dt_max: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

impl CoreError {
    /// True for failures of the numerics (divergence, conditioning,
    /// singularity) as opposed to domain/validation errors.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            CoreError::Divergence { .. }
                | CoreError::SimulationDiverged { .. }
                | CoreError::Conditioning { .. }
                | CoreError::SingularJacobian { .. }
                | CoreError::Linalg(_)
        )
    }

    /// Short machine-readable kind tag, used for structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            CoreError::DimensionMismatch { .. } => "dimension_mismatch",
            CoreError::Domain(_) => "domain",
            CoreError::Divergence { .. } => "divergence",
            CoreError::SimulationDiverged { .. } => "divergence",
            CoreError::Unsupported(_) => "unsupported",
            CoreError::Conditioning { .. } => "conditioning",
            CoreError::SingularJacobian { .. } => "singular_jacobian",
            CoreError::UnknownSystem { .. } => "unknown_system",
            CoreError::CflViolation { .. } => "cfl_violation",
            CoreError::Parse(_) => "parse",
            CoreError::Shape(_) => "shape",
            CoreError::Io(_) => "io",
            CoreError::Linalg(_) => "linalg",
        }
    }
}

impl From<ndarray_linalg::error::LinalgError> for CoreError {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        CoreError::Linalg(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
