use thiserror::Error;

/// Errors raised by model construction, integration, and likelihood evaluation.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite state during integration at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("invalid surveillance series: {0}")]
    InvalidSeries(String),

    #[error("trajectory grid does not match observation bins: {0}")]
    GridMismatch(String),

    #[error("negative transition increment {value:e} in bin {bin}")]
    NegativeIncrement { bin: usize, value: f64 },

    #[error("trajectory carries no sensitivities for {0}")]
    MissingSensitivities(String),

    #[error(
        "beta moment fit infeasible: sample variance {variance:e} >= m(1-m) = {bound:e}; \
         cap the variance below the Bernoulli bound before fitting"
    )]
    MomentInfeasible { variance: f64, bound: f64 },

    #[error("invalid prior specification: {0}")]
    InvalidPrior(String),

    #[error("non-finite log-posterior at initialization: parameter `{name}` has zero prior density")]
    BadInitialPoint { name: String },

    #[error("failed to find a finite initial point after {attempts} prior draws")]
    InitDrawsExhausted { attempts: usize },
}
