use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("mismatched dimensions: expected {expected}, got {actual}")]
    MismatchedDimensions { expected: usize, actual: usize },

    #[error("probabilities do not sum to one (sum = {sum})")]
    NotNormalized { sum: f64 },

    #[error("degenerate probability: {0}")]
    DegenerateProbability(String),

    #[error("event log is empty or too short: need at least {required} events, have {actual}")]
    EmptyLog { required: usize, actual: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no signal: best periodic fit (rms {best:.3e}) is no better than a constant (rms {constant:.3e})")]
    NoSignal { best: f64, constant: f64 },

    #[error("operator is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("operator is not a rank-one projector (||rho^2 - rho|| = {deviation:.3e})")]
    NotPure { deviation: f64 },

    #[error("insufficient design: {0}")]
    InsufficientDesign(String),

    #[error("data cannot be separated: residual {residual:.3e} exceeds threshold {threshold:.3e}")]
    NonSeparable { residual: f64, threshold: f64 },

    #[error("frequency data shows no dependence on the analyzer direction")]
    TrivialSignal,

    #[error("phase undefined at {count} grid points where |psi| is below the floor")]
    PhaseUndefined { count: usize },

    #[error("unstable step: norm drifted by {drift:.3e} after {step} steps")]
    UnstableStep { step: usize, drift: f64 },

    #[error("wave packet reached the boundary: mass {mass:.3e} within the edge cells at step {step}")]
    BoundaryContact { step: usize, mass: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("corrupt data: {0}")]
    CorruptData(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::CorruptData(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::SchemaMismatch(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
