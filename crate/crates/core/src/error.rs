use thiserror::Error;

use crate::lmi::ResidualReport;
use crate::solve::AlphaSample;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("switching normal c is zero")]
    ZeroNormal,

    #[error("disturbance shape Rw is not symmetric positive definite (min eigenvalue {min_eig:e})")]
    NotPositiveDefinite { min_eig: f64 },

    #[error(
        "system is not continuous across the switching surface \
         (matrix residual {matrix_residual:e}, offset residual {offset_residual:e})"
    )]
    NotContinuous {
        matrix_residual: f64,
        offset_residual: f64,
    },

    #[error("mode {mode} is not Hurwitz (max real eigenvalue part {max_real_part})")]
    NotHurwitz { mode: usize, max_real_part: f64 },

    #[error("alpha must be positive, got {0}")]
    InvalidAlpha(f64),

    #[error("no alpha in the search grid produced a feasible problem ({} samples)", .0.len())]
    AllInfeasible(Vec<AlphaSample>),

    #[error("certificate audit failed: worst residual {worst:e} in `{constraint}`")]
    AuditFailed {
        constraint: String,
        worst: f64,
        report: ResidualReport,
    },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("unknown solver backend `{0}`")]
    UnknownBackend(String),

    #[error("boundary export needs a 2-D set, got dimension {0}")]
    DimensionUnsupported(usize),

    #[error("empty level set: radius^2 = {0:e}")]
    EmptyLevelSet(f64),

    #[error("matrix is singular")]
    Singular,

    #[error("state became non-finite at t = {0}")]
    NonFiniteState(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
