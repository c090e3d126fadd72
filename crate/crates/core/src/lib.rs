//! Sequential (daisy-chain) uplink estimation for cell-free massive MIMO with
//! dithered uniform fronthaul quantization.
//!
//! Each AP refines the running estimate of the user symbols it receives from
//! its predecessor, quantizes what it has to forward, and passes the estimate
//! and its error covariance down the chain. The crate provides the channel
//! model, the quantizer, the per-AP processing options, bit-rate accounting
//! and a deterministic Monte Carlo harness around them.

pub mod channel;
pub mod config;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod quantization;
pub mod selftest;

pub use config::{CorrelationModel, NetworkConfig, ProcessingOption};
pub use error::{Error, Result};
pub use harness::{run_experiment, run_experiment_with_workers, ExperimentKind, ExperimentPlan, SweepResult};
