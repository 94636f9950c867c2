use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("missing tail model: {0}")]
    MissingTail(String),
    #[error("tail mismatch at {side} boundary: grid value {grid_value}, tail value {tail_value}")]
    TailMismatch {
        side: &'static str,
        grid_value: f64,
        tail_value: f64,
    },
    #[error("non-integrable tail: {0}")]
    NonIntegrable(String),
    #[error("validation failed ({assumption}): {detail}")]
    Validation {
        assumption: &'static str,
        detail: String,
    },
    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("monotonicity lost at node {node} during relaxation step {step}")]
    MonotonicityLost { step: usize, node: usize },
    #[error("step size underflow at t = {t} (h = {h:e}); state {state:?}")]
    StepUnderflow { t: f64, h: f64, state: Vec<f64> },
    #[error("outside small-gap regime: denominator {0}")]
    SmallGapRegime(f64),
    #[error("no feasible {what} below cap {cap}")]
    Infeasible { what: &'static str, cap: usize },
    #[error("blow-up at t = {t}: |v| reached {value}")]
    BlowUp { t: f64, value: f64 },
    #[error("gap violation: min gap {gap} below threshold {threshold} at t = {t}")]
    GapViolation { t: f64, gap: f64, threshold: f64 },
    #[error("time {t} outside trajectory window [0, {t_end}]")]
    OutsideTrajectory { t: f64, t_end: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
