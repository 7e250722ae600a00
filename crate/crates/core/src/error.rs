use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("delta approximation under-resolved: width {width} < 2 x spacing {spacing}")]
    Resolution { width: f64, spacing: f64 },

    #[error("table has {got} samples, grid has {expected} nodes")]
    TableLength { got: usize, expected: usize },

    #[error("assembled matrix is not Hermitian (defect {defect:e})")]
    NotHermitian { defect: f64 },

    #[error("scheme requires a grid node at the origin")]
    MissingOrigin,

    #[error("function value is not finite at eigenvalue {eigenvalue}")]
    NonFinite { eigenvalue: f64 },

    #[error("spectral parameter must be non-real, got Im z = {im}")]
    RealSpectralParameter { im: f64 },

    #[error("adaptive quadrature did not converge on [{a}, {b}] (error estimate {estimate:e})")]
    Quadrature { a: f64, b: f64, estimate: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("step size violation: {0}")]
    StepSize(String),

    #[error("boundary monitor tripped: mass fraction {mass:e} in the margin")]
    BoundaryTrip { mass: f64 },

    #[error("stage-1 profile did not converge; free profile withheld")]
    StageOneDiverged,

    #[error("malformed field dump: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
