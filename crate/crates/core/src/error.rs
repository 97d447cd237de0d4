use thiserror::Error;

/// Errors raised across the model, schedule, analysis and experiment layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("covariance is not symmetric positive definite: {0}")]
    DegenerateCovariance(String),

    #[error("hypotheses are indistinguishable (m0 == m1)")]
    IndistinguishableHypotheses,

    #[error("no window length B <= period {period} makes every window union connected")]
    NoConnectedWindow { period: usize },

    #[error("invalid weight matrix at k={k}: {reason}")]
    InvalidWeights { k: usize, reason: String },

    #[error("index error: {0}")]
    Index(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error(
        "contraction bound violated at k={k}, j={j}, entry ({row},{col}): |value| {value:e} > bound {bound:e}"
    )]
    BoundViolated {
        k: usize,
        j: usize,
        row: usize,
        col: usize,
        value: f64,
        bound: f64,
    },

    #[error("maximizer at search boundary {boundary} (interval too small)")]
    MaximizerAtBoundary { boundary: f64 },

    #[error("threshold {gamma} outside the open interval ({lo}, {hi})")]
    ThresholdOutOfRange { gamma: f64, lo: f64, hi: f64 },

    #[error("degenerate variance {variance:e} at k={k}, node {node}")]
    DegenerateVariance {
        k: usize,
        node: usize,
        variance: f64,
    },

    #[error("need at least {need} points in window, found {found}")]
    InsufficientPoints { need: usize, found: usize },

    #[error("window contains zero-probability estimates; {usable} usable points remain")]
    ZeroProbabilityInWindow { usable: usize },

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// Variant name, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "Shape",
            Error::DegenerateCovariance(_) => "DegenerateCovariance",
            Error::IndistinguishableHypotheses => "IndistinguishableHypotheses",
            Error::NoConnectedWindow { .. } => "NoConnectedWindow",
            Error::InvalidWeights { .. } => "InvalidWeights",
            Error::Index(_) => "Index",
            Error::Parameter(_) => "Parameter",
            Error::BoundViolated { .. } => "BoundViolated",
            Error::MaximizerAtBoundary { .. } => "MaximizerAtBoundary",
            Error::ThresholdOutOfRange { .. } => "ThresholdOutOfRange",
            Error::DegenerateVariance { .. } => "DegenerateVariance",
            Error::InsufficientPoints { .. } => "InsufficientPoints",
            Error::ZeroProbabilityInWindow { .. } => "ZeroProbabilityInWindow",
            Error::Config(_) => "Config",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(expected: impl ToString, got: impl ToString) -> Error {
    Error::Shape {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
