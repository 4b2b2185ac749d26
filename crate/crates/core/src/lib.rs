//! Safe offline reinforcement learning with latent safety-prioritized
//! constraints.
//!
//! The crate is organised bottom-up:
//!
//! - [`nn`]: dense networks, Gaussian heads, Adam and gradient checking.
//! - [`env`]: the continuous `point-hazard` task and tabular `grid-hazard`
//!   CMDP with exact solvers.
//! - [`dataset`]: offline transition data, the `LSPC-DS` file format and
//!   normalized metrics.
//! - [`critics`]: IQL reward and cost critics.
//! - [`policy`]: the cost-weighted CVAE (LSPC-S) and the latent safety
//!   encoder (LSPC-O).
//! - [`trainer`]: the training loop and `LSPC-CKPT` checkpoints.
//! - [`eval`]: rollouts, restriction sweeps and tabular bound verification.
//! - [`cli`]: the `lspc` command-line front end.

pub mod cli;
pub mod critics;
pub mod dataset;
pub mod env;
pub mod error;
pub mod eval;
pub mod nn;
pub mod policy;
pub mod rng;
pub mod trainer;

pub use error::{LspcError, Result};

/// Floating-point width used for training.
#[cfg(not(feature = "f64-train"))]
pub type Float = f32;
/// Floating-point width used for training.
#[cfg(feature = "f64-train")]
pub type Float = f64;

/// Floating-point determinism mode, read from `LSPC_FP_MODE`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FpMode {
    /// Sequential, fixed-order arithmetic. Required for bitwise reproducibility.
    #[default]
    Strict,
    /// Batch gradient reductions are split across rayon workers; summation
    /// order then depends on the thread count.
    Fast,
}

impl FpMode {
    pub fn from_env() -> Self {
        match std::env::var("LSPC_FP_MODE").as_deref() {
            Ok("fast") => FpMode::Fast,
            Ok("strict") | Err(_) => FpMode::Strict,
            Ok(other) => {
                log::warn!("unknown LSPC_FP_MODE {other:?}, using strict");
                FpMode::Strict
            }
        }
    }
}
