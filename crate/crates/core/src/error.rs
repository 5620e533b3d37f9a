use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("non-finite input: {0}")]
    NonFiniteInput(String),
    #[error("shape mismatch: {0}")]
    ShapeError(String),
    #[error("truncation order {m} too large for {n} grid points")]
    TruncationError { m: usize, n: usize },
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("eigensolver failure: {0}")]
    EigenError(String),
    #[error("no sign change in bracket [{lo}, {hi}]")]
    BracketError { lo: f64, hi: f64 },
    #[error("pattern collapsed to the homogeneous state (amplitude {0:.3e})")]
    CollapsedToHomogeneous(f64),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),
    #[error("branch jump at sigma = {sigma}: overlap {overlap:.3}")]
    BranchJump { sigma: f64, overlap: f64 },
    #[error("poor fit: {0}")]
    PoorFit(String),
    #[error("solvability condition violated: {0:.3e}")]
    FredholmError(f64),
    #[error("grid not aligned to cells: {0}")]
    AlignmentError(String),
    #[error("corrector construction failed: {0}")]
    CorrectorError(String),
    #[error("state outside the small-data regime: {0}")]
    OutOfRegime(String),
    #[error("constraint violated: {0}")]
    ConstraintViolation(String),
    #[error("ill-conditioned diagonalizer: {0}")]
    IllConditioned(String),
    #[error("matrix exponential failed: {0}")]
    ExpFailure(String),
    #[error("insufficient samples: {0}")]
    GridError(String),
    #[error("blow-up at t = {t}: sup norm {norm:.3e}")]
    BlowUp { t: f64, norm: f64 },
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
    #[error("degenerate fit window: {0}")]
    WindowError(String),
}

pub type Result<T> = std::result::Result<T, Error>;
