//! Command-line surface: `run`, `resume`, `report`, `validate`.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod manifest;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use artifacts::{transcript_file_name, FileSink, RunDir};
pub use commands::{build_engine, report, resume, run, validate, CliError, Exit, MetricsSummary, Overrides, RunOptions, Runtime};
pub use config::{ConfigError, RunConfig};
pub use manifest::{RunManifest, RunStatus};

use crate::propagation::PolicyTag;
use crate::protocol::{Mode, Split};

#[derive(Debug, Parser)]
#[command(name = "mmdebate", version, about = "Debate-based hallucination probing for vision-language models")]
pub struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a probe file through the configured pipeline.
    Run(RunArgs),
    /// Finish an interrupted run.
    Resume {
        /// Directory of the interrupted run.
        out_dir: PathBuf,
        /// Debates in flight at once; defaults to the original run's setting.
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Print metrics for a finished run.
    Report {
        /// Directory of a finished run.
        out_dir: PathBuf,
        /// Creativity ratio; needs POPE-C results.
        #[arg(long)]
        creativity: bool,
        /// Classify the causes of remaining errors (cached in causes.json).
        #[arg(long)]
        causes: bool,
    },
    /// Check a probe file and, optionally, a patch against it.
    Validate {
        /// Probe file (JSONL).
        dataset: PathBuf,
        /// Label corrections to check against the probe file.
        #[arg(long)]
        patch: Option<PathBuf>,
        /// Directory that relative image refs resolve against.
        #[arg(long)]
        image_root: Option<PathBuf>,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::parse(s).ok_or_else(|| format!("expected baseline, sro or mad, got {s:?}"))
}

fn parse_split(s: &str) -> Result<Split, String> {
    Split::parse(s).ok_or_else(|| format!("expected random, popular or adversarial, got {s:?}"))
}

fn parse_policy(s: &str) -> Result<PolicyTag, String> {
    PolicyTag::parse(s).ok_or_else(|| format!("expected partial or full, got {s:?}"))
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Probe file (JSONL); overrides dataset.path.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Directory that relative image refs resolve against.
    #[arg(long)]
    pub image_root: Option<PathBuf>,
    /// Label corrections to apply before running.
    #[arg(long)]
    pub patch: Option<PathBuf>,
    /// baseline, sro or mad.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    /// random, popular or adversarial.
    #[arg(long, value_parser = parse_split)]
    pub split: Option<Split>,
    /// Round-2 propagation policy: partial or full.
    #[arg(long = "policy-r2", value_parser = parse_policy)]
    pub policy_r2: Option<PolicyTag>,
    /// Round-3 propagation policy: partial or full.
    #[arg(long = "policy-r3", value_parser = parse_policy)]
    pub policy_r3: Option<PolicyTag>,
    /// Built-in persona set name or a persona JSON file.
    #[arg(long)]
    pub personas: Option<String>,
    /// Leave worked examples out of Round-0 prompts.
    #[arg(long)]
    pub no_exemplars: bool,
    /// Debates in flight at once.
    #[arg(long)]
    pub parallel: Option<usize>,
    /// Run directory to create.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Stop after this many items; `resume` picks up the rest.
    #[arg(long)]
    pub max_items: Option<usize>,
}

impl RunArgs {
    pub fn options(&self) -> RunOptions {
        RunOptions {
            config: self.config.clone(),
            overrides: Overrides {
                dataset: self.dataset.clone(),
                image_root: self.image_root.clone(),
                patch: self.patch.clone(),
                mode: self.mode,
                split: self.split,
                policy_r2: self.policy_r2,
                policy_r3: self.policy_r3,
                personas: self.personas.clone(),
                no_exemplars: self.no_exemplars,
                parallel: self.parallel,
                out: self.out.clone(),
            },
            max_items: self.max_items,
        }
    }
}

/// Run a parsed command; returns the process exit code.
pub fn dispatch(cli: &Cli, rt: &Runtime<'_>, out: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Run(args) => run(&args.options(), rt, out),
        Command::Resume { out_dir, parallel } => resume(out_dir, *parallel, rt, out),
        Command::Report {
            out_dir,
            creativity,
            causes,
        } => report(out_dir, *creativity, *causes, rt, out),
        Command::Validate {
            dataset,
            patch,
            image_root,
        } => validate(dataset, patch.as_deref(), image_root.as_deref(), out),
    };
    match result {
        Ok(exit) => exit.code(),
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn main() -> i32 {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();
    dispatch(&cli, &Runtime::process(), &mut std::io::stdout())
}
