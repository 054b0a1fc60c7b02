use std::fmt;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalErrorKind {
    DivisionByZero,
    NonPositiveSqrt,
    NonPositiveLog,
    NonPositivePowerBase,
}

impl fmt::Display for EvalErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EvalErrorKind::DivisionByZero => "division by zero",
            EvalErrorKind::NonPositiveSqrt => "sqrt of a non-positive value",
            EvalErrorKind::NonPositiveLog => "log of a non-positive value",
            EvalErrorKind::NonPositivePowerBase => "fractional power of a non-positive value",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
#[error("{kind} in {subexpression}")]
pub struct EvalError {
    pub kind: EvalErrorKind,
    pub subexpression: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("point {x:?} lies outside the chart domain")]
    Domain { x: Vec<f64> },

    #[error("expression evaluation failed: {0}")]
    Eval(#[from] EvalError),

    #[error("fundamental tensor degenerate at x = {x:?}, v = {v:?} (eigenvalue ratio {ratio:e})")]
    Degenerate { x: Vec<f64>, v: Vec<f64>, ratio: f64 },

    #[error("step size collapsed to {step:e} at t = {t}")]
    Stiffness { t: f64, step: f64 },

    #[error("integration budget of {0} steps exhausted")]
    TooManySteps(usize),

    #[error("trajectory left the chart at t = {t}")]
    ChartExit { t: f64 },

    #[error("boundary-value solve did not converge (residual {residual:e} after {iterations} iterations)")]
    Bvp { residual: f64, iterations: usize },

    #[error("point {point:?} is outside the convex neighbourhood {region}")]
    Boundary { point: Vec<f64>, region: String },

    #[error("quadrature did not reach relative accuracy {target:e} (last change {change:e})")]
    Accuracy { target: f64, change: f64 },

    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("osculating extension left the chart margin at t = {t}")]
    Margin { t: f64 },

    #[error("spec schema error at {path}: {message}")]
    Schema { path: String, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Whether the failure comes from caller-supplied data rather than from a
    /// numerical procedure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Input(_) | Error::Domain { .. } | Error::Schema { .. } | Error::Boundary { .. }
        )
    }
}
