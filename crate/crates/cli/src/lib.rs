//! Command implementations behind the `synthfetal` binary.

pub mod bench;
pub mod config;
pub mod error;
pub mod generate;
pub mod tools;

pub use bench::{cmd_bench, BenchReport};
pub use config::{Overrides, RunConfig};
pub use error::{CliError, CliResult};
pub use generate::{cmd_generate, cmd_replay, GenerateSummary};
pub use tools::{cmd_cluster_inspect, cmd_epg, cmd_evaluate, cmd_interpolate};
