use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Validation { name: &'static str, reason: String },

    #[error("lindblad integration failed at step {step} (t = {time:e} s): {reason}")]
    Integration { step: usize, time: f64, reason: String },

    #[error("reference/signal Rabi ratio {ratio:.3} at sample {sample} is below 10; increase the target range or lower the reference antenna gain")]
    Linearization { sample: usize, ratio: f64 },

    #[error("degenerate envelope: {0}")]
    Degenerate(String),

    #[error("non-finite objective at iteration {iteration}: omega = {omega:e}, phi = {phi:e}, history = {history:?}")]
    NonFinite { iteration: usize, omega: f64, phi: f64, history: Vec<f64> },

    #[error("empty record")]
    EmptyRecord,

    #[error("no feasible iterate after {iterations} iterations (last mean power {last_mean:e} W, budget {budget:e} W)")]
    Infeasible { iterations: usize, last_mean: f64, budget: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Validation { name, reason: reason.into() }
}
