use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("line {line}: timestamp {timestamp} is not on the {interval_seconds} s sampling grid")]
    GridMisalignment {
        line: usize,
        timestamp: String,
        interval_seconds: u32,
    },

    #[error("day {date} is incomplete: {found} of {expected} samples present")]
    IncompleteDay {
        date: NaiveDate,
        found: usize,
        expected: usize,
    },

    #[error("line {line}: negative power {value} W is below the -1 W noise tolerance")]
    NegativePower { line: usize, value: f64 },

    #[error("invalid sampling grid: {0}")]
    InvalidGrid(String),

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("too few days: {0}")]
    TooFewDays(String),

    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),

    #[error("insufficient history for day {target_day}: needs {depth_days} preceding day(s)")]
    InsufficientHistory {
        target_day: usize,
        depth_days: usize,
    },

    #[error("insufficient training days: need {needed}, have {available}")]
    InsufficientTrainingDays { needed: usize, available: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("neighbor distances are not sorted ascending")]
    UnsortedDistances,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("profiles are not on the model's sampling grid")]
    GridMismatch,

    #[error("damped normal equations could not be solved even at maximum damping")]
    SingularStep,

    #[error("least squares is underdetermined: 2*{max_harmonic}+1 coefficients exceed window length {window_length}")]
    Underdetermined {
        window_length: usize,
        max_harmonic: usize,
    },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error(
        "sample index {index} is outside the correctable range of a {samples_per_day}-sample day"
    )]
    IndexOutOfDay {
        index: usize,
        samples_per_day: usize,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("date {0} is not present in the series")]
    UnknownDate(NaiveDate),

    #[error("checksum mismatch: file says {expected}, payload hashes to {actual}")]
    ChecksumMismatch { expected: String, actual: String },

    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),

    #[error("model invariant violated: {0}")]
    InvariantViolation(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Errors caused by not having enough days (or history) to do the work.
    pub fn is_insufficient_data(&self) -> bool {
        matches!(
            self,
            Error::TooFewDays(_)
                | Error::InsufficientHistory { .. }
                | Error::InsufficientTrainingDays { .. }
        )
    }
}
