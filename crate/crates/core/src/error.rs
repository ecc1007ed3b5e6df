use thiserror::Error;

/// Errors raised by the library.
///
/// Variants fall into two families that the CLI maps onto exit codes:
/// configuration / precondition problems (the input is wrong) and numerical
/// failures (the input was accepted but a computation broke down).
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("expression parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("empty probe grid")]
    EmptyProbeGrid,

    #[error("kernel support {support} exceeds half the torus period {half_period}")]
    SupportExceedsHalfPeriod { support: f64, half_period: f64 },

    #[error("grid too coarse: mesh width {h} exceeds {limit}")]
    GridTooCoarse { h: f64, limit: f64 },

    #[error("time step {dt} exceeds stability limit {dt_max}")]
    StepTooLarge { dt: f64, dt_max: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-finite value encountered at t = {t}")]
    NonFinite { t: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("shifted evolution grows at lambda = {lambda}; the integral over the past diverges")]
    Divergent { lambda: f64 },

    #[error("bracket upper end {hi} is infeasible")]
    InfeasibleBracket { hi: f64 },

    #[error("no approximant could be certified")]
    NoCertificate,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by the computation rather than by the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::Divergent { .. }
                | Error::NoConvergence { .. }
                | Error::InfeasibleBracket { .. }
                | Error::NoCertificate
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
