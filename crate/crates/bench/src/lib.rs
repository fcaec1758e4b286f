//! Benchmark harness for the webplan agents: episode grids, metrics and
//! report tables.

pub mod metrics;
pub mod report;
pub mod runner;

pub use metrics::{completion_rate, gamma, success_rate, MetricError};
pub use report::{parse_group_by, summarize, Dimension, Report};
pub use runner::{read_records, resolve_site, run_grid, write_records, Backend, RunError, RunSpec};
