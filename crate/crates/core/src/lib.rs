//! Partition pruning over min/max-annotated micro-partitions.

pub mod bench;
pub mod error;
pub mod exec;
pub mod expr;
pub mod join_pruning;
pub mod limit;
pub mod partition;
pub mod plan;
pub mod pruning_tree;
pub mod sql;
pub mod store;
pub mod stats_report;
pub mod topk;
pub mod value;

pub use error::{Error, Result};
