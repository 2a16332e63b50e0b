use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stateplan_cli::{cmd_inspect, cmd_replay, cmd_run, CliError};

#[derive(Parser)]
#[command(name = "stateplan", version, about = "Graph-guided planner for text environments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a planning session from a config file
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Summarize a persisted graph file
    Inspect {
        #[arg(long)]
        graph: PathBuf,
        /// How many states to list, ranked by augmented value
        #[arg(long, default_value_t = 5)]
        top: usize,
        /// Also print the per-episode reward table from a report file
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Render a trace log as readable text
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => cmd_run(&config).map(|_| ()),
        Command::Inspect { graph, top, report } => cmd_inspect(&graph, top, report.as_deref()),
        Command::Replay { log } => cmd_replay(&log),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        // Reader closed the pipe (e.g. `stateplan replay ... | head`); not an error.
        Err(CliError::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
