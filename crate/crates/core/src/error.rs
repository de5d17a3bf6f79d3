use thiserror::Error;

/// Errors raised anywhere in the homogenization pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown coefficient preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid parameters for preset {preset}: {reason}")]
    InvalidParams { preset: String, reason: String },
    #[error("ellipticity audit failed at x={x:?}, y={y:?}: {quantity} = {value} violates certified bound {bound}")]
    AuditViolation {
        x: [f64; 2],
        y: [f64; 2],
        quantity: &'static str,
        value: f64,
        bound: f64,
    },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("iterative solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("zero pivot in tridiagonal elimination at row {row}")]
    ZeroPivot { row: usize },
    #[error("bordered system is singular: {0}")]
    SingularSystem(String),
    #[error("operator is singular: {0}")]
    SingularOperator(String),
    #[error("mesh with {nodes} nodes exceeds the node cap {cap}")]
    ExcessiveSize { nodes: usize, cap: usize },
    #[error("region mask selects no element")]
    EmptyRegion,
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    #[error("extension margin {margin} too large for domain width {width}")]
    MarginTooLarge { margin: f64, width: f64 },
    #[error("insufficient margin: need {needed} grid layers, have {available}")]
    InsufficientMargin { needed: usize, available: usize },
    #[error("point {0:?} lies outside the cell-solution table")]
    TableCoverage([f64; 2]),
    #[error("grid functions live on different meshes")]
    MeshMismatch,
    #[error("coefficient is not elliptic at x={x:?}: eigenvalue {value}")]
    EllipticityViolation { x: [f64; 2], value: f64 },
    #[error("need at least 3 usable data points for a rate fit, got {usable}")]
    InsufficientData { usable: usize },
    #[error("rate fit requires positive errors, got {0}")]
    NonPositiveError(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
