//! Laboratory for zero-shot learned query cost estimation.
//!
//! The pipeline generates synthetic relational databases, runs random
//! aggregation workloads through a small planner and a deterministic
//! executor, encodes every executed plan as a graph of transferable
//! features and trains a graph cost model on many databases. The model is
//! then evaluated on a database it never saw during training.
//!
//! Module map:
//!
//! * [`relcore`]: data generation, in-memory storage, catalog statistics, indexes
//! * [`workload`]: random queries and random index sets
//! * [`planner`]: physical plans, analytic cost, hypothetical-index plans
//! * [`executor`]: execution with counted work units, brute-force oracle
//! * [`cardest`]: histogram-based cardinality estimation
//! * [`encoding`]: query graphs with transferable features and the one-hot ablation
//! * [`model`]: message-passing cost model, gradients, training, checkpoints
//! * [`eval`]: Q-error metrics, baselines, experiment harness

pub mod cardest;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod executor;
pub mod model;
pub mod planner;
pub mod relcore;
pub mod rng;
pub mod workload;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
