//! Cross-domain recommendation for cold-start users.
//!
//! Per-domain latent-factor models are pre-trained first. A characteristic
//! encoder then pools each user's source-domain item history into a single
//! vector, and a meta network turns that vector into a personalized `k×k`
//! linear bridge that maps the user's source representation into the target
//! domain. The bridge is trained directly on target-domain ratings of
//! overlapping users.
//!
//! Module layout:
//!
//! - [`data`]: rating ingestion, id maps, overlap users, cold/warm splits.
//! - [`nn`]: dense kernels, two-layer nets, Adam, gradient checking, checkpoints.
//! - [`models`]: MF / GMF / two-tower scorers, pre-training, CMF baseline.
//! - [`bridge`]: attention encoder, meta network, bridge losses and trainers.
//! - [`pipeline`]: end-to-end cold/warm evaluation, synthetic oracle data, suites.
//! - [`cli`]: command implementations behind the `bridgerec` binary.

pub mod bridge;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};
