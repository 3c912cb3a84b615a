//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not Hermitian: max elementwise deviation {max_deviation:e}")]
    NonHermitian { max_deviation: f64 },

    #[error("matrix is not unitary: deviation norm {deviation:e}")]
    NonUnitary { deviation: f64 },

    #[error(
        "unitarity constraint residual {residual:e} exceeds tolerance; \
         this indicates an internal inconsistency"
    )]
    ConstraintInconsistency { residual: f64 },

    #[error("singular chart: p[{index}] = {value:e} is at or below the chart tolerance")]
    SingularChart { index: usize, value: f64 },

    #[error("trajectory reached the simplex boundary margin at t = {t_last}")]
    BoundaryProximity { t_last: f64 },

    #[error("implicit solver failed to converge: residual {residual:e} after {iterations} iterations")]
    SolverNonConvergence { residual: f64, iterations: usize },

    #[error("constraint mean {target} lies outside the open spectral range ({min}, {max})")]
    InfeasibleConstraint { target: f64, min: f64, max: f64 },

    #[error("constraint mean {target} equals a spectral endpoint; the multiplier diverges")]
    DivergentBeta { target: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("monte carlo rejected {rejected} of {total} samples (limit 0.1%)")]
    ExcessiveRejections { rejected: usize, total: usize },

    #[error("reconstructed trace {trace} deviates from 1 by more than {sigmas} standard errors")]
    TraceInconsistency { trace: f64, sigmas: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
