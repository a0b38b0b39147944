//! Acoustic echo cancellation toolkit: room simulation, echoic data
//! synthesis, a sequence-to-sequence spectral AEC trained with a frozen
//! recognizer-encoder loss, adaptive-filter and ratio-mask baselines, and an
//! evaluation harness.

pub mod asr_proxy;
pub mod autodiff;
pub mod baselines;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod neural;
pub mod room;
pub mod seed;
pub mod signal;

pub use config::RunConfig;
pub use error::{AecError, Result};
