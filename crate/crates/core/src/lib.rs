//! Sequential diversification.
//!
//! A user walks a ranked list, accepting each item with its continuation
//! probability and leaving at the first rejection. This crate computes the
//! expected diversity of what such a user accepts and builds rankings that
//! make it large.

pub mod algorithms;
pub mod baselines;
pub mod data;
pub mod error;
pub mod experiment;
pub mod instance;
pub mod objective;
pub mod oracle;

pub use error::{Error, Result};
pub use instance::{
    check_metric, prefix_products, DistanceMatrix, Instance, MetricReport, Ordering,
    PrefixProducts,
};
