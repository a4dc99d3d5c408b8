//! Crate-wide error type.

use std::fmt;

/// Errors produced anywhere in the pipeline.
///
/// `ProjectionFailed` is load-bearing: the solver and the BO driver match on
/// it to mark a cell infeasible and re-solve, so it carries no payload that
/// would obstruct matching.
#[derive(Debug)]
pub enum Error {
    /// A point's length does not match the feature space dimension.
    DimensionMismatch { expected: usize, got: usize },
    /// A point coordinate violates its feature domain.
    InvalidPoint(String),
    /// A polynomial constraint references a categorical feature.
    CategoricalInConstraint { feature: usize },
    /// A configuration value violates its documented invariant.
    InvalidConfig(String),
    /// Dataset is empty or otherwise unusable for training.
    EmptyDataset,
    /// Cholesky factorization failed even after jitter escalation.
    Factorization(String),
    /// A cell's leaf choices have an empty intersection.
    InconsistentCell(String),
    /// Feasibility projection exhausted its multi-start budget.
    ProjectionFailed,
    /// The solver proved that no constraint-feasible cell exists.
    Infeasible(String),
    /// Exhaustive enumeration would exceed its cell budget.
    CellCountOverflow { limit: u64 },
    /// Benchmark name not in the registry.
    UnknownBenchmark(String),
    /// A solve that must run to optimality terminated early.
    SolveIncomplete(String),
    /// Filesystem error while reading or writing run artifacts.
    Io(std::io::Error),
    /// Malformed config, problem file, or CSV input.
    Parse(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::InvalidPoint(msg) => write!(f, "invalid point: {msg}"),
            Error::CategoricalInConstraint { feature } => {
                write!(f, "constraint references categorical feature {feature}")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            Error::EmptyDataset => write!(f, "dataset is empty"),
            Error::Factorization(msg) => write!(f, "factorization failed: {msg}"),
            Error::InconsistentCell(msg) => write!(f, "inconsistent cell: {msg}"),
            Error::ProjectionFailed => write!(f, "projection failed: no feasible point found"),
            Error::Infeasible(msg) => write!(f, "problem infeasible: {msg}"),
            Error::CellCountOverflow { limit } => {
                write!(f, "cell count exceeds enumeration limit {limit}")
            }
            Error::UnknownBenchmark(name) => write!(f, "unknown benchmark: {name}"),
            Error::SolveIncomplete(msg) => write!(f, "solve incomplete: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
