//! Command-line front end for the stateplan planner: run sessions from a
//! TOML config, inspect persisted graphs, replay trace logs.

pub mod commands;
pub mod config;
pub mod persist;

pub use commands::{cmd_inspect, cmd_replay, cmd_run};
pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("graph file error: {0}")]
    Format(#[from] stateplan::graph::FormatError),
    #[error("oracle error: {0}")]
    Oracle(#[from] stateplan::oracle::OracleError),
    #[error("environment error: {0}")]
    Env(#[from] stateplan::env::EnvError),
    #[error("{0}")]
    Agent(#[from] stateplan::agent::AgentError),
    /// The run aborted partway; state up to the last completed episode is
    /// on disk.
    #[error("run aborted: {0}")]
    Run(String),
}
