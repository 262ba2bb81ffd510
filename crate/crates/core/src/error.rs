use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite argument: {0}")]
    NonFinite(f64),

    #[error("probability {0} outside (0, 1)")]
    ProbabilityOutOfRange(f64),

    #[error("mgf diverges at t = {t} (requires t < {limit})")]
    MgfDomain { t: f64, limit: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unsupported model: {0}")]
    Unsupported(String),

    #[error("invalid parameters for model: {0}")]
    InvalidParams(String),

    #[error("unbalanced: cell {cell} has {found} of {expected} replicates")]
    Unbalanced {
        cell: String,
        found: usize,
        expected: usize,
    },

    #[error("duplicate: cell {cell} has more than {expected} replicates (record {record})")]
    DuplicateCell {
        cell: String,
        expected: usize,
        record: usize,
    },

    #[error(
        "unknown level {label:?} for factor {factor} (record {record}; factor has {levels} levels)"
    )]
    UnknownLevel {
        factor: String,
        label: String,
        levels: usize,
        record: usize,
    },

    #[error("non-numeric response {value:?} (record {record})")]
    NonNumericResponse { value: String, record: usize },

    #[error("record {record} has {found} labels, expected {expected}")]
    RecordShape {
        record: usize,
        found: usize,
        expected: usize,
    },

    #[error("unknown factor {0:?}")]
    UnknownFactor(String),

    #[error("unknown source {0:?}")]
    UnknownSource(String),

    #[error("noncentral denominator for {numerator} / {denominator}")]
    NoncentralDenominator {
        numerator: String,
        denominator: String,
    },

    #[error("singular expected-mean-square system: {0}")]
    SingularEms(String),
}

pub type Result<T> = std::result::Result<T, Error>;
