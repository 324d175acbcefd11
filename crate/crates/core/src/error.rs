use thiserror::Error;

/// Errors raised by the geometry, solver and verification layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the region where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Spherical domains must stay inside the closed hemisphere around the base point.
    #[error("hemisphere bound violated (spherical domains must lie in the closed geodesic ball of radius pi/2 about the base point): {0}")]
    Hemisphere(String),

    #[error("volume {target} is not attainable (largest admissible volume is {max})")]
    UnattainableVolume { target: f64, max: f64 },

    #[error("index error: {0}")]
    Index(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "singular weight at the origin: mode k = {k} needs the regular-singular origin condition"
    )]
    SingularWeight { k: usize },

    #[error("convergence failure in {context}: grid {grid}, mode {mode}, residual {residual:e}")]
    Convergence {
        context: String,
        grid: usize,
        mode: usize,
        residual: f64,
    },

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("symmetry violation: {0}")]
    Symmetry(String),

    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),

    #[error("singular mass matrix: {0}")]
    SingularMass(String),

    #[error("spectrum truncated: only {certified} eigenvalues certified below cutoff {cutoff}, {requested} requested")]
    CutoffTooLow {
        certified: usize,
        requested: usize,
        cutoff: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
