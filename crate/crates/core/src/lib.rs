//! Federated learning with volatile clients.
//!
//! The crate simulates a server that, every round, picks `k` of `K` clients
//! whose training may fail before the aggregation deadline. Its centrepiece is
//! E3CS, an Exp3-style stochastic selection policy with multiple plays and a
//! per-client minimum selection probability, alongside the Random, FedCS and
//! pow-d baselines, a hindsight-optimal oracle with regret accounting, and a
//! small softmax-regression training loop.
//!
//! Modules map onto the pipeline:
//!
//! - [`selection`]: probability allocation, exponential weights, policies
//! - [`sampling`]: drawing exactly `k` clients with the allocated marginals
//! - [`volatility`]: client population and Bernoulli dropouts
//! - [`datagen`]: synthetic data with iid / non-iid partitioning
//! - [`flcore`]: model, local updates, aggregation, round loop
//! - [`metrics`]: participation, regret and selection summaries
//! - [`harness`]: experiment configuration, runner, result files and CLI

pub mod datagen;
pub mod error;
pub mod flcore;
pub mod harness;
pub mod metrics;
pub mod rng;
pub mod sampling;
pub mod selection;
pub mod volatility;

pub use error::{Error, Result};
