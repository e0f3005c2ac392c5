use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("variable {0} exceeds the degree bound")]
    DegreeExceeded(usize),
    #[error("constraint {0} has weight outside [1, w]")]
    WeightOutOfRange(usize),
    #[error("predicate {0} exceeds the arity bound")]
    ArityExceeded(String),
    #[error("predicate {0} has a truth table of the wrong length")]
    BadTruthTableLength(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("enumeration of {0} assignments exceeds the budget")]
    BudgetExceeded(u128),
    #[error("LP is unbounded")]
    Unbounded,
    #[error("LP is infeasible")]
    Infeasible,
    #[error("simplex stopped after {0} pivots")]
    IterationLimit(usize),
    #[error("LP has {0} columns, above the size limit")]
    SizeLimit(usize),
    #[error("negative entry in {0}")]
    NegativeEntry(String),
    #[error("solution is not feasible for the packing LP (row {0})")]
    NotFeasibleForLp3(String),
    #[error("variable {0} has an all-zero marginal row")]
    ZeroRow(usize),
    #[error("table is not a distribution")]
    NotADistribution,
    #[error("folded enumeration of {0} assignments exceeds the budget")]
    FoldTooLarge(u128),
    #[error("seed solution is not feasible for BasicLP: {0}")]
    InfeasibleSeedSolution(String),
    #[error("constraints have different predicates or arities")]
    ArityMismatch,
    #[error("query names a variable that has not been seen")]
    UnseenVariableQuery,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Budget-type errors map to a distinct CLI exit code.
    pub fn is_budget(&self) -> bool {
        matches!(
            self,
            Error::BudgetExceeded(_) | Error::SizeLimit(_) | Error::FoldTooLarge(_)
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
