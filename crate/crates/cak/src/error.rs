//! Error type shared by every module.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    // core
    #[error("variable `{0}` is not assigned by the setting")]
    MissingVariable(String),
    #[error("variable `{0}` has a real-valued range and cannot be enumerated")]
    NotEnumerable(String),
    #[error("enumeration of {size} settings exceeds the budget of {budget}")]
    EnumerationBudgetExceeded { size: u128, budget: u64 },
    #[error("cyclic model with real-valued variable `{0}` cannot be solved by enumeration")]
    UnsolvableRepresentation(String),
    #[error("state space of {size} exceeds the budget of {budget}")]
    BudgetExceeded { size: u128, budget: u64 },
    #[error("mechanism evaluation failed for `{var}`: {msg}")]
    Eval { var: String, msg: String },

    // intervene
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("value {value} is outside the range of `{var}`")]
    RangeViolation { var: String, value: String },
    #[error("interventions refer to different signatures")]
    SignatureMismatch,
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("source input yields no solution")]
    UnsolvedSource,

    // algebra
    #[error("sequence holds more than one atom of class {0}")]
    DuplicateClass(String),

    // abstraction
    #[error("intervention {0} lies outside the domain of omega")]
    DomainViolation(String),
    #[error("supplied maps are not mutually inverse at {0}")]
    NotInverse(String),

    // interchange
    #[error("source run has no solution")]
    NoSolution,
    #[error("source run has {0} solutions")]
    AmbiguousSolution(usize),
    #[error("featurizer does not preserve input variables: {0}")]
    NotInputPreserving(String),
    #[error("cell `{cell}` value {value} is realized with high values {first} and {second}")]
    AlignmentConflict { cell: String, value: String, first: String, second: String },
    #[error("cell `{cell}` value {value} is not realized by any input")]
    UnrealizedValue { cell: String, value: String },

    // approx
    #[error("outcome variable `{0}` is not numeric")]
    NonNumericOutcome(String),
    #[error("mediator variable `{0}` is not real-valued")]
    NonRealMediator(String),

    // scrub
    #[error("no pool input gives `{var}` the value {value}")]
    EmptyConditionedSet { var: String, value: String },

    // nn
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not orthogonal (deviation {0:e})")]
    NotOrthogonal(f64),
    #[error("covariance is degenerate: {0}")]
    DegenerateCovariance(String),
    #[error("probe weights have rank {rank} < {rows}")]
    RankDeficient { rank: usize, rows: usize },

    // fixtures
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
    #[error("bubble sort did not converge within {0} rows")]
    NoConvergence(usize),

    // dsl
    #[error("parse error at line {line}, column {column}: {msg}")]
    ParseError { line: usize, column: usize, msg: String },
    #[error("type error at {path}: {msg}")]
    TypeError { path: String, msg: String },
    #[error("undeclared variable `{0}`")]
    UndeclaredVariable(String),
    #[error("invalid partition: {0}")]
    PartitionError(String),
    #[error("map for `{0}` is not surjective")]
    SurjectivityError(String),
    #[error("cannot serialize: {0}")]
    NotSerializable(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by malformed input documents or arguments.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::ParseError { .. }
                | Error::TypeError { .. }
                | Error::UndeclaredVariable(_)
                | Error::PartitionError(_)
                | Error::SurjectivityError(_)
                | Error::UnknownFixture(_)
                | Error::UnknownVariable(_)
                | Error::RangeViolation { .. }
        )
    }
}
