use alloc::string::String;
use core::fmt;

/// Errors produced by this crate.
///
/// Variants split into two families: input validation failures (caller handed
/// us something malformed) and numerical failures (the computation itself
/// broke down). `is_validation` reports which family a value belongs to so
/// front ends can map them to distinct exit codes.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// An argument violates a precondition.
    InvalidParameter(String),
    /// Two tabulations that must share a grid do not.
    GridMismatch(&'static str),
    /// A value lies outside the mathematical domain of the operation.
    Domain(String),
    /// A matrix that must be invertible is numerically singular.
    Singular(&'static str),
    /// Gram matrix is rank deficient; the named basis pair is (nearly) collinear.
    RankDeficient { first: usize, second: usize },
    /// Condition number exceeds the admissible limit.
    IllConditioned { cond: f64, limit: f64 },
    /// A weighted estimator received weights with zero total mass.
    DegenerateWeights,
    /// The computation collapsed to a degenerate configuration.
    Degenerate(String),
    /// Iteration budget exhausted without meeting the convergence criterion.
    NonConvergence { what: &'static str, iters: usize },
    /// No feasible point exists under the given search grid.
    Infeasible(String),
}

impl Error {
    /// True when the error reflects bad input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_) | Error::GridMismatch(_) | Error::Domain(_)
        )
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::GridMismatch(what) => write!(f, "grid mismatch: {what}"),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Singular(what) => write!(f, "singular matrix: {what}"),
            Error::RankDeficient { first, second } => write!(
                f,
                "rank deficient basis: components {first} and {second} are collinear"
            ),
            Error::IllConditioned { cond, limit } => {
                write!(f, "condition number {cond:.3e} exceeds limit {limit:.1e}")
            }
            Error::DegenerateWeights => write!(f, "degenerate weights: total mass is zero"),
            Error::Degenerate(msg) => write!(f, "degenerate result: {msg}"),
            Error::NonConvergence { what, iters } => {
                write!(f, "{what} did not converge within {iters} iterations")
            }
            Error::Infeasible(msg) => write!(f, "infeasible: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
