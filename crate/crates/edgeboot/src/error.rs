use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid order: {0}")]
    InvalidOrder(String),
    #[error("matrix is not symmetric positive definite: min eigenvalue {0}")]
    NotSpd(f64),
    #[error("singular matrix in {0}")]
    Singular(String),
    #[error("degenerate statistic: leading covariance is singular (min eigenvalue {0})")]
    DegenerateStatistic(f64),
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("zero Monte Carlo budget")]
    ZeroBudget,
    #[error("enumeration size cap exceeded: n={n}, cap={cap}")]
    SizeCap { n: usize, cap: usize },
    #[error("invalid sample set: {0}")]
    InvalidSampleSet(String),
    #[error("region has no boundary (infinite radius)")]
    NoBoundary,
    #[error("unknown statistic {0:?}")]
    UnknownStatistic(String),
    #[error("unknown population {0:?}")]
    UnknownPopulation(String),
    #[error("derivative of order {0} unavailable for statistic {1:?}")]
    DerivativeUnavailable(usize, String),
    #[error("config error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
