use alloc::boxed::Box;
use alloc::string::String;

use crate::cone::SymMatrix;

/// Broad classification of an [`Error`], used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// The caller passed inconsistent or malformed arguments.
    Usage,
    /// The inputs are well formed but outside the mathematical domain of the operation.
    Domain,
    /// A numerical routine failed to converge or hit a singular system.
    Numerical,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("{context}: dimension mismatch, expected {expected:?}, found {found:?}")]
    Dimension {
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("matrix is not symmetric (relative asymmetry {relative:.3e})")]
    Asymmetric { relative: f64 },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("{0}")]
    OutOfDomain(String),

    #[error("{what} is not positive definite (smallest eigenvalue {lambda_min:.6e})")]
    NotPositiveDefinite { what: &'static str, lambda_min: f64 },

    #[error("map leaves the cone: P^-1 + C'C - theta D'D has smallest eigenvalue {lambda_min:.6e}")]
    LeavesCone { lambda_min: f64 },

    #[error("validity violated: P^-1 - theta D'D has smallest eigenvalue {lambda_min:.6e}")]
    ValidityViolated { lambda_min: f64 },

    #[error("Q_N^theta not positive definite: theta = {theta:.6e} >= theta_N = {theta_n:.6e}")]
    AboveThetaN { theta: f64, theta_n: f64 },

    #[error("pair (C,A) not observable at block length {block_len} (lambda_min(Omega) = {lambda_min:.6e})")]
    NotObservable { block_len: usize, lambda_min: f64 },

    #[error("rho * r(A-GC) = {product:.6} must be below 1")]
    UnstableObserver { product: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(&'static str),

    #[error("eigensolver did not converge (matrix Frobenius norm {norm:.6e})")]
    EigenFailure { norm: f64 },

    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("no convergence after {iterations} iterations (last step distance {last_distance:.6e})")]
    NoConvergence { iterations: usize, last_distance: f64 },

    #[error("breakdown at step {step}: {cause}")]
    Breakdown {
        step: usize,
        cause: Box<Error>,
        last_valid: Box<SymMatrix>,
    },

    #[error("no feasible candidate: {infeasible_rho} with rho <= 1, {unstable} with rho*r >= 1, {failed} numerical failures")]
    SearchFailed {
        infeasible_rho: usize,
        unstable: usize,
        failed: usize,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Dimension { .. } | Error::Asymmetric { .. } | Error::InvalidArgument(_) => {
                ErrorKind::Usage
            }
            Error::Unsupported(_) => ErrorKind::Usage,
            Error::EigenFailure { .. } | Error::Singular(_) | Error::NoConvergence { .. } => {
                ErrorKind::Numerical
            }
            Error::Breakdown { cause, .. } => cause.kind(),
            _ => ErrorKind::Domain,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::OutOfDomain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = core::result::Result<T, Error>;
