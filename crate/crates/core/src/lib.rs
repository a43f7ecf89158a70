//! Lifelong generative learning with a label-conditioned VAE.
//!
//! A conditional VAE learns a stream of single-class tasks one at a time.
//! Old classes are retained by distilling a frozen copy of the previous
//! decoder into the current one (knowledge reconstruction), and the
//! model's own reconstructions are re-encoded and pulled toward the prior
//! (feedback consolidation). Baseline strategies, evaluation metrics and an
//! experiment driver live alongside.

pub mod autodiff;
pub mod baselines;
pub mod config;
pub mod cvae;
pub mod data;
pub mod error;
pub mod experiment;
pub mod lifelong;
pub mod metrics;
pub mod nn;

pub use error::{Error, Result};
