use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("coordinate {value} outside [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("rotational Neumann mode crosses the first circumferential mode (eps = {eps}, h = {h})")]
    ModeCrossing { eps: f64, h: f64 },

    #[error("no admissible height window: {0}")]
    InfeasibleWindow(String),

    #[error("cross-cap identification needs an even angular resolution, got {0}")]
    IdentificationImpossible(usize),

    #[error("gluing mismatch: {0}")]
    GluingMismatch(String),

    #[error("degenerate triangle {triangle} in chart {chart}")]
    DegenerateTriangle { chart: usize, triangle: usize },

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("unknown boundary loop {0}")]
    UnknownLoop(usize),

    #[error("resolvent singular: lambda = {lambda} is within {distance:e} of eigenvalue {eigenvalue}")]
    ResolventSingular {
        lambda: f64,
        eigenvalue: f64,
        distance: f64,
    },

    #[error("annulus not resolved for the cutoff: {0}")]
    RefinementNeeded(String),

    #[error("symmetry assumption failed: |phi(x0) + phi(x1)| = {0:e}")]
    SymmetryAssumptionFailed(f64),

    #[error("kernel and piece do not match: {0}")]
    InvalidPairing(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("quasimode norm {0} outside [1/2, 2]")]
    NormHypothesis(f64),
}
