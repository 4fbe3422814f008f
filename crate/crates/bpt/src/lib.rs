//! Command-line harness around `bpt-core`: corpora, configuration files,
//! checkpoints, graph export, training loops and benchmarks.

pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod export;
pub mod metrics;
pub mod train;

pub use error::{HarnessError, Result};
