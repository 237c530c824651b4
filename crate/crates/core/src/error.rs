use thiserror::Error;

use crate::model::Violation;
use crate::zoo::Family;

/// Location inside a model source, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Location {
    pub line: usize,
    pub column: usize,
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("{origin}:{location}: syntax error: {message}")]
    Syntax {
        origin: String,
        location: Location,
        message: String,
    },
    #[error("{origin}:{location}: unknown identifier {name}")]
    UnknownIdentifier {
        origin: String,
        location: Location,
        name: String,
    },
    #[error("{origin}:{location}: unknown distribution family {name}")]
    UnknownFamily {
        origin: String,
        location: Location,
        name: String,
    },
    #[error("{origin}:{location}: {family} takes {expected} parameter(s), found {found}")]
    Arity {
        origin: String,
        location: Location,
        family: Family,
        expected: usize,
        found: usize,
    },
}

impl ParseError {
    pub fn location(&self) -> Location {
        match self {
            ParseError::Syntax { location, .. }
            | ParseError::UnknownIdentifier { location, .. }
            | ParseError::UnknownFamily { location, .. }
            | ParseError::Arity { location, .. } => *location,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model: {0}")]
    Invalid(Violation),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("{family}: {op} is not implemented for this family")]
    Unsupported { family: Family, op: &'static str },
    #[error("{0}: parameters are symbolic")]
    Symbolic(Family),
    #[error("invalid parameters for {family}: {detail}")]
    InvalidParameters { family: Family, detail: String },
    #[error("value {value} is outside the support of {family}")]
    OutsideSupport { family: Family, value: String },
    #[error("family mismatch: {0} vs {1}")]
    FamilyMismatch(Family, Family),
    #[error("support mismatch between {0} instances")]
    SupportMismatch(Family),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeriveError {
    #[error("invalid model: {0}")]
    Model(#[from] ModelError),
    #[error("invalid selection: {0}")]
    InvalidSelection(String),
    #[error("sampling measure is cyclic: {0}")]
    CyclicMeasure(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConjugateError {
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid observations: {0}")]
    InvalidObservations(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unknown conjugate family {0}")]
    UnknownFamily(String),
    #[error("malformed payload: {0}")]
    Payload(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("model is not fully tabular: {0}")]
    NonTabular(String),
    #[error("joint state space has {0} states, limit is {1}")]
    StateSpaceOverflow(u128, u128),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error(transparent)]
    Derive(#[from] DeriveError),
    #[error(transparent)]
    Dist(#[from] DistError),
}
