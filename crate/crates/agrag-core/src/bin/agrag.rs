//! Command-line interface: `agrag index`, `agrag query`, `agrag inspect`.
//!
//! Exit codes: 0 success, 1 completed in degraded mode, 2 fatal error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use agrag_core::{index_command, inspect_command, query_command, PipelineConfig};

#[derive(Parser)]
#[command(name = "agrag", about = "Graph-based retrieval-augmented generation engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a knowledge-graph index from a corpus.
    Index {
        /// TOML pipeline configuration; must set corpus_path and index_path.
        #[arg(long)]
        config: PathBuf,
    },
    /// Answer a query against a saved index.
    Query {
        /// Path to the index file.
        #[arg(long)]
        index: PathBuf,
        /// The query text.
        #[arg(long)]
        query: String,
        /// Optional TOML configuration; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Attach per-stage timings to the output.
        #[arg(long)]
        explain: bool,
    },
    /// Dump index contents as JSON, optionally narrowed by selectors.
    Inspect {
        /// Path to the index file.
        #[arg(long)]
        index: PathBuf,
        /// key=value selector (kind=, surface=, chunk=); repeatable.
        #[arg(long)]
        selector: Vec<String>,
    },
}

/// Prints to stdout, tolerating a closed pipe (e.g. `agrag ... | head`).
fn emit(line: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{line}");
}

fn run(cli: Cli) -> agrag_core::Result<bool> {
    match cli.command {
        Command::Index { config } => {
            let config = PipelineConfig::load(&config)?;
            let report = index_command(&config)?;
            emit(&serde_json::to_string_pretty(&report)?);
            Ok(!report.relation_failures.is_empty())
        }
        Command::Query {
            index,
            query,
            config,
            explain,
        } => {
            let config = match config {
                Some(path) => PipelineConfig::load(&path)?,
                None => {
                    let mut c = PipelineConfig::default();
                    c.apply_env_overrides();
                    c
                }
            };
            let result = query_command(&index, &query, &config, explain)?;
            emit(&serde_json::to_string(&result)?);
            Ok(result.degraded())
        }
        Command::Inspect { index, selector } => {
            let value = inspect_command(&index, &selector)?;
            emit(&serde_json::to_string_pretty(&value)?);
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
