use lam_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: {detail}")]
    Dimension { context: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate statistics: variable {variable:?} has zero {what}")]
    DegenerateStats { variable: String, what: &'static str },

    #[error("statistics do not cover {0}")]
    MissingVariable(String),

    #[error("cell ({row}, {col}) is not readable through the {region} input")]
    MaskedAccess { region: &'static str, row: usize, col: usize },

    #[error("no future boundary available for lead {lead}")]
    MissingBoundary { lead: i64 },

    #[error("index {index} outside 0..={max}")]
    Index { index: usize, max: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure at {location}: {detail}")]
    Numerical { location: String, detail: String },

    #[error("need at least 2 ensemble members, got {0}")]
    InsufficientEnsemble(usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(context: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension { context, detail: detail.into() }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Incompatible(_) | Error::MissingVariable(_) => 2,
            Error::Io(_) | Error::Json(_) | Error::Format(_) => 3,
            Error::Numerical { .. } => 4,
            Error::Tensor(TensorError::Io(_) | TensorError::Json(_) | TensorError::Checkpoint(_)) => 3,
            _ => 5,
        }
    }

    /// Short machine-readable name of the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::Config(_) => "config",
            Error::DegenerateStats { .. } => "degenerate-stats",
            Error::MissingVariable(_) => "missing-variable",
            Error::MaskedAccess { .. } => "masked-access",
            Error::MissingBoundary { .. } => "missing-boundary",
            Error::Index { .. } => "index",
            Error::Domain(_) => "domain",
            Error::Numerical { .. } => "numerical",
            Error::InsufficientEnsemble(_) => "insufficient-ensemble",
            Error::Empty(_) => "empty",
            Error::Incompatible(_) => "incompatible",
            Error::Format(_) => "format",
            Error::Tensor(_) => "tensor",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
