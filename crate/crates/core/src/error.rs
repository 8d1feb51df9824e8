use thiserror::Error;

use crate::graph::{EntityKind, RelationKind};
use crate::models::ModelKind;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "schema violation: {relation} expects {expected_head}->{expected_tail}, got {head}->{tail}"
    )]
    SchemaViolation {
        relation: RelationKind,
        expected_head: EntityKind,
        expected_tail: EntityKind,
        head: EntityKind,
        tail: EntityKind,
    },
    #[error("self-citation on ordinal {0}")]
    SelfCitation(usize),
    #[error("duplicate triple ({head}, {relation}, {tail})")]
    DuplicateTriple {
        head: usize,
        relation: RelationKind,
        tail: usize,
    },
    #[error("unknown entity {0}")]
    UnknownEntity(String),
    #[error("unknown ordinal {0}")]
    UnknownOrdinal(usize),
    #[error("store has no triples")]
    EmptyStore,
    #[error("corruption pool too small: need {needed} candidates, {available} available")]
    PoolTooSmall { needed: usize, available: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("malformed classification code {0:?}")]
    MalformedCode(String),
    #[error("numerical divergence at epoch {epoch}, batch {batch}")]
    NumericalDivergence { epoch: usize, batch: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("truncated payload at byte offset {offset}: expected {expected} bytes")]
    Truncated { offset: u64, expected: u64 },
    #[error("malformed archive: {0}")]
    Archive(String),
    #[error("vocabulary fingerprint mismatch: parameters bound to {expected}, store has {found}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("{model} does not support {what}")]
    UnsupportedModel { model: ModelKind, what: String },
    #[error("home domain is empty")]
    EmptyHome,
    #[error("target group {0} is already in the home domain")]
    TargetInHome(String),
    #[error("need at least two target groups, got {0}")]
    TooFewTargets(usize),
    #[error("portfolio is empty")]
    EmptyPortfolio,
    #[error("group {0} is not in the universe")]
    UnknownGroup(String),
    #[error("expansion profile is empty")]
    EmptyProfile,
    #[error("agents disagree on the model set")]
    InconsistentModelSets,
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn at_line(self, line: usize) -> Self {
        match self {
            e @ (Error::Parse { .. } | Error::AtLine { .. }) => e,
            e => Error::AtLine {
                line,
                source: Box::new(e),
            },
        }
    }

    /// Stable machine-readable tag for the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::SchemaViolation { .. } => "SchemaViolation",
            Error::SelfCitation(_) => "SelfCitation",
            Error::DuplicateTriple { .. } => "DuplicateTriple",
            Error::UnknownEntity(_) => "UnknownEntity",
            Error::UnknownOrdinal(_) => "UnknownOrdinal",
            Error::EmptyStore => "EmptyStore",
            Error::PoolTooSmall { .. } => "PoolTooSmall",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Parse { .. } => "ParseError",
            Error::AtLine { source, .. } => source.code(),
            Error::MalformedCode(_) => "MalformedCode",
            Error::NumericalDivergence { .. } => "NumericalDivergence",
            Error::Io { .. } => "IoError",
            Error::Truncated { .. } => "IoError",
            Error::Archive(_) => "ArchiveError",
            Error::FingerprintMismatch { .. } => "FingerprintMismatch",
            Error::EmptyTestSet => "EmptyTestSet",
            Error::ZeroVector => "ZeroVector",
            Error::UnsupportedModel { .. } => "UnsupportedModel",
            Error::EmptyHome => "EmptyHome",
            Error::TargetInHome(_) => "TargetInHome",
            Error::TooFewTargets(_) => "TooFewTargets",
            Error::EmptyPortfolio => "EmptyPortfolio",
            Error::UnknownGroup(_) => "UnknownGroup",
            Error::EmptyProfile => "EmptyProfile",
            Error::InconsistentModelSets => "InconsistentModelSets",
        }
    }
}
