use thiserror::Error;

use crate::operator::Certificate;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time span must be positive (t_start = {t_start}, t_end = {t_end})")]
    NonPositiveSpan { t_start: f64, t_end: f64 },

    #[error("a time grid needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),

    #[error("decay rate must be non-negative, got {0}")]
    NegativeRho(f64),

    #[error("grid functions live on different time grids")]
    GridMismatch,

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("symmetric eigensolve failed: {0}")]
    EigenSolveFailure(String),

    #[error("operator is singular at shift {shift}")]
    SingularOperator { shift: f64 },

    #[error("grid function must vanish on the first and last node")]
    UnsupportedBoundarySupport,

    #[error("expected {expected} coefficient samples, got {found}")]
    SampleCountMismatch { expected: usize, found: usize },

    #[error("at least 2 samples are needed for a difference quotient, got {0}")]
    TooFewSamples(usize),

    #[error("no derivative samples available for M0")]
    MissingDerivative,

    #[error("M0 samples are flagged discontinuous; refusing to estimate a Lipschitz derivative")]
    NotLipschitz,

    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix has eigenvalue {0:e} below the PSD tolerance")]
    NegativeEigenvalue(f64),

    #[error("commutator regime needs a lower bound d_low > 0 for M0")]
    MissingLowerBound,

    #[error("step matrix at node {node} is singular (condition estimate {condition:e})")]
    StepSingular { node: usize, condition: f64 },

    #[error("hypothesis `{}` failed: margin {} < threshold {}", .0.kind, .0.margin, .0.threshold)]
    HypothesisFailed(Box<Certificate>),

    #[error("sandwiching operator is singular (not onto)")]
    SingularB,

    #[error("resolvent does not exist at shift {0}")]
    SingularShift(f64),
}
