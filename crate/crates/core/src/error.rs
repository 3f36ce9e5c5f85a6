use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid edge ({src}, {dst}, weight {weight}): {reason}")]
    InvalidEdge {
        src: usize,
        dst: usize,
        weight: f64,
        reason: &'static str,
    },

    #[error("duplicate edge between nodes {0} and {1}")]
    DuplicateEdge(usize, usize),

    #[error("graph is disconnected (lambda_2 = {lambda2:e} <= tol {tol:e})")]
    DisconnectedGraph { lambda2: f64, tol: f64 },

    #[error("graph became disconnected after removing edges below cutoff {cutoff}")]
    DisconnectedAfterCutoff { cutoff: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("filter has zero energy")]
    ZeroFilter,

    #[error("filter low band (first {k} coefficients) contains a zero; eta is unbounded")]
    LowBandZero { k: usize },

    #[error("LPF order {k} exceeds J = {j} (largest index with lambda_J <= lambda_avg)")]
    OrderTooHigh { k: usize, j: usize },

    #[error("mean vector is not aligned with any eigenvector (best cosine {cosine})")]
    MeanNotEigenvector { cosine: f64 },

    #[error("second filter is identically zero; quadratic form support is empty")]
    EmptySupport,

    #[error("numerical integration failed to converge (error bound {error_bound:e})")]
    NumericalFailure { error_bound: f64 },

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("signal batch is empty")]
    EmptyBatch,

    #[error("signal batch has zero energy")]
    ZeroSignal,

    #[error("noise variance must be positive, got {0}")]
    NonPositiveSigma(f64),

    #[error("LPF order k = {k} outside [1, {max}]")]
    InvalidOrder { k: usize, max: usize },
}

impl Error {
    /// Stable machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidEdge { .. } => "InvalidEdge",
            Error::DuplicateEdge(..) => "DuplicateEdge",
            Error::DisconnectedGraph { .. } => "DisconnectedGraph",
            Error::DisconnectedAfterCutoff { .. } => "DisconnectedAfterCutoff",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::ZeroFilter => "ZeroFilter",
            Error::LowBandZero { .. } => "LowBandZero",
            Error::OrderTooHigh { .. } => "OrderTooHigh",
            Error::MeanNotEigenvector { .. } => "MeanNotEigenvector",
            Error::EmptySupport => "EmptySupport",
            Error::NumericalFailure { .. } => "NumericalFailure",
            Error::DegenerateSpectrum(_) => "DegenerateSpectrum",
            Error::EmptyBatch => "EmptyBatch",
            Error::ZeroSignal => "ZeroSignal",
            Error::NonPositiveSigma(_) => "NonPositiveSigma",
            Error::InvalidOrder { .. } => "InvalidOrder",
        }
    }
}
