//! Minimal differentiable function approximation.
//!
//! Small fully connected networks with hand-written reverse-mode
//! gradients over a fixed computation structure, a diagonal Gaussian head
//! with tanh squashing and exact log-density correction, Adam, and a
//! central-difference gradient checker that every loss in the crate is
//! validated against.

mod adam;
mod gaussian;
mod gradcheck;
mod mlp;

pub use adam::{adam_step, AdamState};
pub use gaussian::{
    atanh, gaussian_log_prob, squashed_log_density, tanh_rsample, DiagGaussian, TanhSample,
    LN_2PI, LOG_STD_MAX, LOG_STD_MIN, SQUASH_EPS,
};
pub use gradcheck::finite_diff_check;
pub use mlp::{Activation, Linear, Mlp, MlpCache, MlpGrads};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("loss is not deterministic: two evaluations at the same point differ ({a} vs {b})")]
    NonDeterministicLoss { a: f64, b: f64 },
}
