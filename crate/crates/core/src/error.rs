use thiserror::Error;

/// Errors raised by the homogenization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("6x6 Voigt matrix is not symmetric (relative asymmetry {0:.3e})")]
    NonSymmetricVoigt(f64),
    #[error("3x3 dielectric matrix is not symmetric (relative asymmetry {0:.3e})")]
    NonSymmetricDielectric(f64),
    #[error("invalid hole primitive: {0}")]
    InvalidHole(String),
    #[error("resolution must be at least 2, got {0}")]
    InvalidResolution(usize),
    #[error("every voxel of the cell is void")]
    AllVoid,
    #[error("material region of the cell is not connected under periodic face adjacency")]
    DisconnectedGeometry,
    #[error("assembled {block} block failed the positive-semidefinite probe (Rayleigh quotient {quotient:.3e})")]
    NonPositiveBlock { block: &'static str, quotient: f64 },
    #[error("linear solver breakdown in {case}: {reason}")]
    SolverBreakdown { case: String, reason: String },
    #[error("point {0:?} lies in a void voxel")]
    VoidPoint([f64; 3]),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("positivity certificate failed: {0}")]
    CertificateFailure(String),
    #[error("a void voxel touches the cell boundary; holes must be strictly interior for DNS")]
    HoleTouchesBoundary,
    #[error("epsilon {0} is not 1/m for an integer m >= 2")]
    InvalidEpsilon(f64),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
