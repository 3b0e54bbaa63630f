use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("correlation length scale must be positive, got {0}")]
    NonPositiveLengthScale(f64),

    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),

    #[error("invalid grid geometry: {0}")]
    InvalidGeometry(String),

    #[error("matrix is not symmetric (max |a_ij - a_ji| = {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("matrix is not positive semidefinite (lambda_min = {lambda_min:e}, lambda_max = {lambda_max:e})")]
    NotPositiveSemidefinite { lambda_min: f64, lambda_max: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("ensemble size m = {m} must be smaller than the state dimension n = {n}")]
    EnsembleTooLarge { m: usize, n: usize },

    #[error("ensemble size m = {0} is too small (need at least 2 members)")]
    EnsembleTooSmall(usize),

    #[error("hybrid weight beta = {0} lies outside [0, 1]")]
    WeightOutOfRange(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("observation count p = {p} does not divide the grid size n = {n} for this operator")]
    IncompatibleObservationCount { n: usize, p: usize },

    #[error("cannot place p = {p} observations on n = {n} grid points")]
    TooManyObservations { n: usize, p: usize },

    #[error("background covariance is numerically singular (lambda_n / lambda_1 = {ratio:e})")]
    NearSingularBackground { ratio: f64 },

    #[error("non-positive curvature p^T S p = {curvature:e} at CG iteration {iteration}")]
    IndefiniteDetected { iteration: usize, curvature: f64 },

    #[error("right-hand side has zero norm")]
    ZeroRightHandSide,

    #[error("degenerate inputs: {0}")]
    DegenerateInputs(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed matrix file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonPositiveLengthScale(_) => "NonPositiveLengthScale",
            Error::NonPositiveVariance(_) => "NonPositiveVariance",
            Error::InvalidGeometry(_) => "InvalidGeometry",
            Error::NotSymmetric { .. } => "NotSymmetric",
            Error::NotPositiveSemidefinite { .. } => "NotPositiveSemidefinite",
            Error::NotPositiveDefinite(_) => "NotPositiveDefinite",
            Error::EnsembleTooLarge { .. } => "EnsembleTooLarge",
            Error::EnsembleTooSmall(_) => "EnsembleTooSmall",
            Error::WeightOutOfRange(_) => "WeightOutOfRange",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::IncompatibleObservationCount { .. } => "IncompatibleObservationCount",
            Error::TooManyObservations { .. } => "TooManyObservations",
            Error::NearSingularBackground { .. } => "NearSingularBackground",
            Error::IndefiniteDetected { .. } => "IndefiniteDetected",
            Error::ZeroRightHandSide => "ZeroRightHandSide",
            Error::DegenerateInputs(_) => "DegenerateInputs",
            Error::Config(_) => "ConfigError",
            Error::Format(_) => "FormatError",
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
        }
    }

    /// True for failures of the numerics rather than of the inputs' shape.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveSemidefinite { .. }
                | Error::NotPositiveDefinite(_)
                | Error::NearSingularBackground { .. }
                | Error::IndefiniteDetected { .. }
                | Error::NotSymmetric { .. }
        )
    }
}
