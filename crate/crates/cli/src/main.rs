//! Command-line driver for the specification-to-assertion pipeline.
//!
//! Exit codes: 0 on success, 1 when a stage fails, 2 when the
//! configuration is invalid. Configuration problems are caught before
//! any stage runs.

mod config;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use specsva::llm::LlmClient;

use crate::config::Overrides;
use crate::stages::{Layout, StageName};

#[derive(Parser)]
#[command(name = "spec2sva")]
#[command(about = "Turn hardware specification blocks into checked SystemVerilog assertions")]
struct Cli {
    /// Path to the pipeline configuration file
    #[arg(long, global = true, default_value = "config.toml")]
    config: PathBuf,

    /// Override the output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Never open a network connection; live configs replay their cache
    #[arg(long, global = true)]
    offline: bool,

    /// Disable reference retrieval when building prompts
    #[arg(long, global = true)]
    no_rag: bool,

    /// Use single-step prompts instead of staged reasoning
    #[arg(long, global = true)]
    no_cot: bool,

    /// Override the refinement iteration budget
    #[arg(long, global = true)]
    max_iter: Option<u32>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the input block stream and persist it in canonical form
    Ingest,
    /// Assign modality and semantic category to every block
    Classify,
    /// Run the modality analyzers over classified blocks
    Analyze,
    /// Merge analyzer records into per-signal specifications
    Merge,
    /// Generate assertions from the merged signal specifications
    Generate,
    /// Produce a mutant set from the golden RTL
    Mutate,
    /// Build the assertion-by-mutant detection matrix
    Check,
    /// Compute metrics from the detection matrix and write the report
    Evaluate,
    /// Run the full pipeline with mutation-guided refinement
    Run {
        /// First stage to recompute; earlier artifacts are reused
        #[arg(long, value_enum, default_value_t = StageName::Ingest)]
        from: StageName,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides {
        out: cli.out.clone(),
        offline: cli.offline,
        no_rag: cli.no_rag,
        no_cot: cli.no_cot,
        max_iter: cli.max_iter,
    };
    let cfg = match config::load(&cli.config, &overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: config: {e}");
            return ExitCode::from(2);
        }
    };
    let lay = Layout::new(&cfg.out);
    let client = LlmClient::new(cfg.client_mode.clone());
    let result = match cli.command {
        Command::Ingest => stages::ingest(&cfg, &lay),
        Command::Classify => stages::classify(&cfg, &lay, &client),
        Command::Analyze => stages::analyze(&cfg, &lay, &client),
        Command::Merge => stages::merge(&cfg, &lay),
        Command::Generate => stages::generate(&cfg, &lay, &client),
        Command::Mutate => stages::mutate(&cfg, &lay),
        Command::Check => stages::check(&cfg, &lay),
        Command::Evaluate => stages::evaluate(&cfg, &lay),
        Command::Run { from } => stages::run(&cfg, &lay, &client, from),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
