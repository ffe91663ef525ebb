//! Pipeline stages, configuration, the review server and the command-line front end
//! behind the `posefuse` binary.

pub mod cli;
pub mod config;
pub mod pipeline;
pub mod server;

pub use config::PipelineConfig;
