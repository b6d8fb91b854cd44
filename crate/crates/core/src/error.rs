use thiserror::Error;

/// Errors raised by design construction, estimation and bounding.
#[derive(Debug, Error)]
pub enum Error {
    #[error("layout mismatch: expected {expected}, found {found}")]
    LayoutMismatch { expected: String, found: String },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("support of {size} assignments exceeds the cap of {cap}; opt into monte-carlo mode or raise the cap")]
    SupportOverflow { size: u128, cap: u64 },

    #[error("design is not identified: inclusion probability {value} at flat index {index} is outside (0,1)")]
    NotIdentified { index: usize, value: f64 },

    #[error("operation requires an exact-mode design: {0}")]
    RequiresExact(&'static str),

    #[error("estimation infeasible: {0}")]
    EstimationInfeasible(String),

    #[error("{0}")]
    NeymanPrecondition(NeymanViolation),

    #[error("algorithm-m did not converge after {iterations} iterations (last min eigenvalue {min_eig:e})")]
    NonConvergence { iterations: usize, min_eig: f64 },

    #[error("bound matrix is not identified: entry ({row},{col}) is nonzero where the joint probability is zero")]
    UnidentifiedBound { row: usize, col: usize },

    #[error("quadratic form {value:e} is negative beyond tolerance; the matrix is not positive semidefinite")]
    NotPositiveSemidefinite { value: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("fourth-order accumulation needs {required} steps, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// The individual ways the generalized Neyman bound can be inapplicable.
#[derive(Debug, Clone, PartialEq)]
pub enum NeymanViolation {
    ContrastNotZeroSum {
        sum: f64,
    },
    ZeroContrastEntry {
        arm: usize,
    },
    MinusOneInDiagonalBlock {
        arm: usize,
        row: usize,
        col: usize,
    },
    UnequalOffDiagonalBlocks {
        first: (usize, usize),
        other: (usize, usize),
        row: usize,
        col: usize,
    },
}

impl std::fmt::Display for NeymanViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NeymanViolation::ContrastNotZeroSum { sum } => {
                write!(f, "the Neyman bound cannot be applied: contrast entries sum to {sum}, not 0")
            }
            NeymanViolation::ZeroContrastEntry { arm } => write!(
                f,
                "the Neyman bound cannot be applied: contrast entry for arm {} is zero",
                arm + 1
            ),
            NeymanViolation::MinusOneInDiagonalBlock { arm, row, col } => write!(
                f,
                "the Neyman bound cannot be applied: diagonal block d_{}{} has a -1 entry at unit pair ({},{})",
                arm + 1,
                arm + 1,
                row + 1,
                col + 1
            ),
            NeymanViolation::UnequalOffDiagonalBlocks { first, other, row, col } => write!(
                f,
                "the Neyman bound cannot be applied: off-diagonal blocks d_{}{} and d_{}{} differ at unit pair ({},{})",
                first.0 + 1,
                first.1 + 1,
                other.0 + 1,
                other.1 + 1,
                row + 1,
                col + 1
            ),
        }
    }
}

impl Error {
    /// True for failures of numerical procedures, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::EstimationInfeasible(_)
                | Error::NonConvergence { .. }
                | Error::NotPositiveSemidefinite { .. }
                | Error::NonFinite(_)
                | Error::BudgetExceeded { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
