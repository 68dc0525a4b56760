use std::path::PathBuf;

use thiserror::Error;

use crate::metamodel::validate::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine reports. Each variant carries a stable
/// machine-readable code (see [`Error::code`]) used by the CLI and the
/// HTTP envelope.
#[derive(Debug, Error)]
pub enum Error {
    #[error("value cannot be canonically encoded: {0}")]
    Encoding(String),
    #[error("lineage cycle detected: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("unknown lineage node {0}")]
    UnknownNode(String),

    #[error("path {0} is not empty")]
    PathOccupied(PathBuf),
    #[error("store at {0} is locked by another writer")]
    Locked(PathBuf),
    #[error("store is opened read-only")]
    ReadOnly,
    #[error("record failed validation: {}", format_violations(.0))]
    ValidationFailed(Vec<Violation>),
    #[error("unknown ledger {0}")]
    UnknownLedger(String),
    #[error("unknown blob {0}")]
    UnknownBlob(String),
    #[error("ledger {ledger} is corrupt at line {line}: {reason}")]
    CorruptionMidLedger {
        ledger: String,
        line: usize,
        reason: String,
    },
    #[error("no {kind} with id {id}")]
    NotFound { kind: &'static str, id: String },

    #[error("source {0} is empty")]
    EmptySource(String),
    #[error("row {0} does not match the header arity")]
    RaggedRow(usize),
    #[error("malformed signal header: {0}")]
    HeaderMalformed(String),
    #[error("declared {declared} samples but found {found}")]
    SampleCountMismatch { declared: usize, found: usize },
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("unknown tag label {0}")]
    UnknownLabel(String),

    #[error("experiment needs a research question")]
    MissingQuestion,
    #[error("experiment needs at least one team member")]
    EmptyTeam,
    #[error("release {0} carries no text")]
    NotTextBearing(String),
    #[error("member {member} is not in the team of experiment {experiment}")]
    NotTeamMember { member: String, experiment: String },
    #[error("publish-level action on {0} requires a senior member")]
    SeniorRequired(String),
    #[error("unknown target {0}")]
    UnknownTarget(String),
    #[error("required model field {0} is neither mapped nor declared absent")]
    UnmappedRequired(String),
    #[error("column {0} is not numeric")]
    NonNumericColumn(String),
    #[error("history of {target} moved: expected {expected} entries, found {found}")]
    Conflict {
        target: String,
        expected: usize,
        found: usize,
    },

    #[error("inputs differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("input is empty")]
    Empty,
    #[error("no algorithmic confidences to histogram")]
    NoConfidences,
    #[error("invalid cluster count k={k} for {n} rows")]
    BadK { k: usize, n: usize },
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("long-term window of {window} samples exceeds trace of {len} samples")]
    WindowTooLong { window: usize, len: usize },
    #[error("need at least 3 picks, got {0}")]
    Underdetermined(usize),
    #[error("unknown export format {0}")]
    UnknownFormat(String),
    #[error("filter expression: {0}")]
    FilterParse(String),

    #[error("unknown operation {0}")]
    UnknownOperation(String),
    #[error("step {step} binds {binding}, which is not an earlier step")]
    ForwardReference { step: usize, binding: String },
    #[error("blob {0} is missing from the blob zone")]
    MissingBlob(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn not_found(kind: &'static str, id: impl Into<String>) -> Self {
        Error::NotFound {
            kind,
            id: id.into(),
        }
    }

    /// Stable upper-snake-case code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Encoding(_) => "ENCODING_ERROR",
            Error::CycleDetected(_) => "CYCLE_DETECTED",
            Error::UnknownNode(_) => "UNKNOWN_NODE",
            Error::PathOccupied(_) => "PATH_OCCUPIED",
            Error::Locked(_) => "LOCKED",
            Error::ReadOnly => "READ_ONLY",
            Error::ValidationFailed(_) => "VALIDATION_FAILED",
            Error::UnknownLedger(_) => "UNKNOWN_LEDGER",
            Error::UnknownBlob(_) => "UNKNOWN_BLOB",
            Error::CorruptionMidLedger { .. } => "CORRUPTION_MID_LEDGER",
            Error::NotFound { .. } => "NOT_FOUND",
            Error::EmptySource(_) => "EMPTY_SOURCE",
            Error::RaggedRow(_) => "RAGGED_ROW",
            Error::HeaderMalformed(_) => "HEADER_MALFORMED",
            Error::SampleCountMismatch { .. } => "SAMPLE_COUNT_MISMATCH",
            Error::UnknownColumn(_) => "UNKNOWN_COLUMN",
            Error::UnknownLabel(_) => "UNKNOWN_LABEL",
            Error::MissingQuestion => "MISSING_QUESTION",
            Error::EmptyTeam => "EMPTY_TEAM",
            Error::NotTextBearing(_) => "NOT_TEXT_BEARING",
            Error::NotTeamMember { .. } => "NOT_TEAM_MEMBER",
            Error::SeniorRequired(_) => "SENIOR_REQUIRED",
            Error::UnknownTarget(_) => "UNKNOWN_TARGET",
            Error::UnmappedRequired(_) => "UNMAPPED_REQUIRED",
            Error::NonNumericColumn(_) => "NON_NUMERIC_COLUMN",
            Error::Conflict { .. } => "CONFLICT",
            Error::LengthMismatch(..) => "LENGTH_MISMATCH",
            Error::Empty => "EMPTY",
            Error::NoConfidences => "NO_CONFIDENCES",
            Error::BadK { .. } => "BAD_K",
            Error::TooFew { .. } => "TOO_FEW",
            Error::WindowTooLong { .. } => "WINDOW_TOO_LONG",
            Error::Underdetermined(_) => "UNDERDETERMINED",
            Error::UnknownFormat(_) => "UNKNOWN_FORMAT",
            Error::FilterParse(_) => "FILTER_PARSE",
            Error::UnknownOperation(_) => "UNKNOWN_OPERATION",
            Error::ForwardReference { .. } => "FORWARD_REFERENCE",
            Error::MissingBlob(_) => "MISSING_BLOB",
            Error::InvalidArgument(_) => "INVALID_ARGUMENT",
            Error::Io { .. } => "IO_ERROR",
            Error::Json(_) => "JSON_ERROR",
            Error::Csv(_) => "CSV_ERROR",
        }
    }
}
