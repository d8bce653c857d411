mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{AggArgs, AnalysisArgs, MergeArgs, RunConfig, SamplingArgs, UsageError};

/// Synthesizes and applies parametric abstract transformers.
#[derive(Debug, Parser)]
#[command(name = "ustad", version)]
struct Cli {
    /// key=value file; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cap on worker threads
    #[arg(long, short = 'j', global = true)]
    jobs: Option<usize>,
    /// Write the result here instead of stdout
    #[arg(long, short = 'o', global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Infer invariants for a program
    Analyze {
        program: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[command(flatten)]
        agg: AggArgs,
    },
    /// Search a single lower bound from a problem file
    Bound {
        problem: PathBuf,
        #[command(flatten)]
        agg: AggArgs,
        /// Write the per-epoch trace as JSON lines
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the parametric map as JSON
        #[arg(long)]
        dump: Option<PathBuf>,
        /// Append exact and sampled reference minima
        #[arg(long)]
        oracle: bool,
        #[command(flatten)]
        sampling: SamplingArgs,
        /// Machine-readable output
        #[arg(long)]
        json: bool,
    },
    /// Show how a program's straight-line code is merged
    Merge {
        program: PathBuf,
        #[command(flatten)]
        merge: MergeArgs,
    },
    /// Check sampled bounds of a problem against ground truth
    Audit {
        problem: PathBuf,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
    /// Compare two analyze outputs of one program
    Compare {
        base: PathBuf,
        new: PathBuf,
        /// Machine-readable output
        #[arg(long)]
        json: bool,
    },
}

fn resolve(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::from_file(cli.config.as_deref())?;
    match &cli.cmd {
        Cmd::Analyze { analysis, agg, .. } => {
            cfg.apply_analysis(analysis);
            cfg.apply_agg(agg);
        }
        Cmd::Bound { agg, sampling, .. } => {
            cfg.apply_agg(agg);
            cfg.apply_sampling(sampling);
        }
        Cmd::Merge { merge, .. } => cfg.apply_merge(merge),
        Cmd::Audit { sampling, .. } => cfg.apply_sampling(sampling),
        Cmd::Compare { .. } => {}
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    if cli.output.is_some() {
        cfg.output_path = cli.output.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = resolve(&cli)?;
    ustad_core::par::with_jobs(cfg.jobs, move || match cli.cmd {
        Cmd::Analyze { program, .. } => commands::analyze(&program, &cfg),
        Cmd::Bound { problem, trace, dump, oracle, json, .. } => {
            commands::bound(&problem, &cfg, &commands::BoundOptions { trace, dump, oracle, json })
        }
        Cmd::Merge { program, .. } => commands::merge(&program, &cfg),
        Cmd::Audit { problem, .. } => commands::audit(&problem, &cfg),
        Cmd::Compare { base, new, json } => commands::compare(&base, &new, &cfg, json),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ustad: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
