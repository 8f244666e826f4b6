//! Error type shared by every module of the crate.

use std::path::PathBuf;

use chrono::NaiveDate;

/// Convenience alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    // ingestion / dataset
    #[error("missing column `{0}` in CSV header")]
    MissingColumn(String),
    #[error("gap of {days} missing day(s) after {after} exceeds the 3-day fill limit")]
    GapTooLarge { after: NaiveDate, days: i64 },
    #[error("non-finite or unparseable value in `{field}`: {detail}")]
    NonFinite { field: String, detail: String },
    #[error("dates are not strictly increasing at {0}")]
    NonMonotoneDates(NaiveDate),
    #[error("invalid record on {date}: {reason}")]
    InvalidRecord { date: NaiveDate, reason: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset does not fully cover year {0}")]
    InsufficientData(i32),
    #[error("too few present seasons: need at least 2, got {0}")]
    TooFewSeasons(usize),

    // features
    #[error("window must have exactly {expected} values, got {got}")]
    WrongWindowLength { expected: usize, got: usize },
    #[error("dataset has {len} day(s), shorter than the {window}-day window")]
    DatasetTooShort { len: usize, window: usize },
    #[error("row index {index} out of range (rows: {rows})")]
    IndexOutOfRange { index: usize, rows: usize },

    // gbm
    #[error("too few training rows: need at least {needed}, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("expected {expected} features, got {got}")]
    WrongFeatureCount { expected: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    // pipeline
    #[error("year {0} has no season label for the requested boundary")]
    MissingLabel(i32),
    #[error("horizon window for year {year} reaches day {z}, outside the available data")]
    HorizonOutOfRange { year: i32, z: i32 },
    #[error("too few years: need at least {needed}, got {got}")]
    TooFewYears { needed: usize, got: usize },
    #[error("feature window unavailable for year {year}, day {z}")]
    WindowUnavailable { year: i32, z: i32 },

    // wls
    #[error("too few points: need at least 2, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate design: all prediction days are identical")]
    DegenerateDesign,
    #[error("non-positive weight at point {0}")]
    NonPositiveWeight(usize),
    #[error("degenerate slope |beta1| = {0:e} is at or below the slope floor")]
    DegenerateSlope(f64),
    #[error("slope beta1 must be non-zero")]
    ZeroSlope,

    // backtest
    #[error("invalid fold configuration: {0}")]
    FoldConfigInvalid(String),
    #[error("empty input")]
    Empty,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingColumn(_) => "MissingColumn",
            Error::GapTooLarge { .. } => "GapTooLarge",
            Error::NonFinite { .. } => "NonFinite",
            Error::NonMonotoneDates(_) => "NonMonotoneDates",
            Error::InvalidRecord { .. } => "InvalidRecord",
            Error::EmptyDataset => "EmptyDataset",
            Error::InsufficientData(_) => "InsufficientData",
            Error::TooFewSeasons(_) => "TooFewSeasons",
            Error::WrongWindowLength { .. } => "WrongWindowLength",
            Error::DatasetTooShort { .. } => "DatasetTooShort",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::TooFewRows { .. } => "TooFewRows",
            Error::WrongFeatureCount { .. } => "WrongFeatureCount",
            Error::LengthMismatch(..) => "LengthMismatch",
            Error::MissingLabel(_) => "MissingLabel",
            Error::HorizonOutOfRange { .. } => "HorizonOutOfRange",
            Error::TooFewYears { .. } => "TooFewYears",
            Error::WindowUnavailable { .. } => "WindowUnavailable",
            Error::TooFewPoints(_) => "TooFewPoints",
            Error::DegenerateDesign => "DegenerateDesign",
            Error::NonPositiveWeight(_) => "NonPositiveWeight",
            Error::DegenerateSlope(_) => "DegenerateSlope",
            Error::ZeroSlope => "ZeroSlope",
            Error::FoldConfigInvalid(_) => "FoldConfigInvalid",
            Error::Empty => "Empty",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::Io { .. } => "IoError",
            Error::Csv(_) => "CsvError",
            Error::Json(_) => "JsonError",
        }
    }
}
