use thiserror::Error;

/// Errors produced by the grid, solvers and run orchestration.
#[derive(Debug, Error)]
pub enum KmfgError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("CFL violation: dt = {dt} exceeds admissible dt = {admissible}")]
    Cfl { dt: f64, admissible: f64 },

    #[error("negative density: min value {min} at cell {cell}")]
    NegativeDensity { min: f64, cell: usize },

    #[error("non-finite value at time level {level}")]
    NonFinite { level: usize },

    #[error("fixed-point iteration diverged after {} iterations", history.len())]
    Divergence { history: Vec<f64> },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("singular tridiagonal system at row {row}")]
    LinearSolve { row: usize },

    #[error("manifest error at {pointer}: {message}")]
    Manifest { pointer: String, message: String },

    #[error("checkpoint format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, KmfgError>;

impl KmfgError {
    /// Short machine-readable reason used by the CLI exit report.
    pub fn reason(&self) -> &'static str {
        match self {
            KmfgError::Io(_) => "io",
            KmfgError::Manifest { .. } => "manifest",
            KmfgError::Divergence { .. } => "divergence",
            KmfgError::Cfl { .. } => "cfl",
            KmfgError::NonFinite { .. } => "non_finite",
            KmfgError::NegativeDensity { .. } => "negative_density",
            KmfgError::GridMismatch(_) => "grid_mismatch",
            KmfgError::Format(_) => "format",
            KmfgError::LinearSolve { .. } => "linear_solve",
            KmfgError::InvalidGrid(_) | KmfgError::InvalidArgument(_) => "invalid_argument",
        }
    }

    /// Process exit code: 1 solver failure, 2 manifest error, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            KmfgError::Manifest { .. } => 2,
            KmfgError::Io(_) | KmfgError::Format(_) => 3,
            _ => 1,
        }
    }
}
