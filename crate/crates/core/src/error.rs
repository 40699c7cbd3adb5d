use thiserror::Error;

/// Errors raised by mesh construction, assembly, preconditioning and solves.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("nothing to refine")]
    NothingToRefine,

    #[error("element index {index} out of range for mesh with {len} elements")]
    ElementOutOfRange { index: usize, len: usize },

    #[error("geometry has no distinguished corner")]
    NoCorner,

    #[error("degenerate element {0} (zero length)")]
    DegenerateElement(usize),

    #[error("slit RHS requires open screen")]
    SlitRhsOnClosedMesh,

    #[error("RHS requires a closed boundary")]
    RhsRequiresClosedMesh,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Neumann data is not finite at ({0}, {1})")]
    NonFiniteData(f64, f64),

    #[error("quadrature did not converge (estimate {estimate:e})")]
    QuadratureNotConverged { estimate: f64 },

    #[error("nonpositive diagonal {value:e} at level {level}, node {node}")]
    NonPositiveDiagonal { level: usize, node: usize, value: f64 },

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("preconditioner is numerically indefinite (smallest eigenvalue {0:e})")]
    IndefinitePreconditioner(f64),

    #[error("Galerkin energy {energy} exceeds the exact energy {exact}")]
    EnergyAboveExact { energy: f64, exact: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
