use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("molecule `{id}`: symbol {symbol:?} is not in the alphabet")]
    BadSymbol { id: String, symbol: char },
    #[error("duplicate molecule id `{0}`")]
    DuplicateId(String),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),
    #[error("invalid target specification: {0}")]
    InvalidTargetSpec(String),
    #[error("invalid label for `{id}`: {reason}")]
    InvalidLabel { id: String, reason: String },
    #[error("holdout size {n_test} must be smaller than corpus size {size}")]
    NTestTooLarge { n_test: usize, size: usize },
    #[error("molecule `{0}` is already labeled")]
    AlreadyLabeled(String),
    #[error("unknown molecule id `{0}`")]
    UnknownId(String),
    #[error("no embedding for molecule `{0}`")]
    MissingEmbedding(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("ragged embedding rows: line {line} has {actual} values, expected {expected}")]
    RaggedRows { line: usize, expected: usize, actual: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("bad architecture: {0}")]
    BadArch(String),
    #[error("empty training batch")]
    EmptyBatch,
    #[error("at least 2 posterior samples are required, got {0}")]
    TooFewSamples(usize),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("negative uncertainty {0}")]
    NegativeUncertainty(f64),
    #[error("requested top {k} of only {available} records")]
    KTooLarge { k: usize, available: usize },
    #[error("budget {budget} exceeds the {available} unlabeled molecules")]
    BudgetExceedsPool { budget: usize, available: usize },
    #[error("budget {budget} exceeds the {available} recommended molecules")]
    BudgetExceedsUnion { budget: usize, available: usize },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("pool exhausted at round {0}")]
    PoolExhausted(usize),
    #[error("invalid selection: {0}")]
    BadSelection(String),
    #[error("holdout set is empty")]
    EmptyHoldout,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable code, used by the HTTP layer.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MissingColumn(_) => "MissingColumn",
            Error::BadSymbol { .. } => "BadSymbol",
            Error::DuplicateId(_) => "DuplicateId",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::InvalidAlphabet(_) => "InvalidAlphabet",
            Error::InvalidTargetSpec(_) => "InvalidTargetSpec",
            Error::InvalidLabel { .. } => "InvalidLabel",
            Error::NTestTooLarge { .. } => "NTestTooLarge",
            Error::AlreadyLabeled(_) => "AlreadyLabeled",
            Error::UnknownId(_) => "UnknownId",
            Error::MissingEmbedding(_) => "MissingEmbedding",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::RaggedRows { .. } => "RaggedRows",
            Error::Parse(_) => "ParseError",
            Error::BadArch(_) => "BadArch",
            Error::EmptyBatch => "EmptyBatch",
            Error::TooFewSamples(_) => "TooFewSamples",
            Error::OutOfRange(_) => "OutOfRange",
            Error::NegativeUncertainty(_) => "NegativeUncertainty",
            Error::KTooLarge { .. } => "KTooLarge",
            Error::BudgetExceedsPool { .. } => "BudgetExceedsPool",
            Error::BudgetExceedsUnion { .. } => "BudgetExceedsUnion",
            Error::ConfigInvalid(_) => "ConfigInvalid",
            Error::PoolExhausted(_) => "PoolExhausted",
            Error::BadSelection(_) => "BadSelection",
            Error::EmptyHoldout => "EmptyHoldout",
            Error::Io { .. } => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }
}
