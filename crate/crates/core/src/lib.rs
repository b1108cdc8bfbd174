//! Toxicity classification with identity-bias auditing and training-set rebalancing.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod experiment;
pub mod features;
pub mod metrics;
pub mod models;
pub mod numerics;
pub mod planted;
pub mod rebalance;
pub mod textproc;
