//! `stellagen`: synthesize or ingest boundary data, fit PCA, train the
//! conditional diffusion model, sample at reference conditions, and score
//! the samples.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "stellagen", version, about = "Conditional diffusion for stellarator boundaries")]
struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic torus-family dataset.
    SynthData {
        #[arg(long)]
        seed: Option<u64>,
        /// Number of records.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a JSON-Lines dataset and rewrite it in canonical form.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the PCA embedding of the dataset.
    PcaFit {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the explained-variance curve as CSV.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Train the diffusion model and write a checkpoint.
    Train {
        #[arg(long)]
        seed: Option<u64>,
        /// Use this PCA model instead of fitting one.
        #[arg(long)]
        pca: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample boundaries for a set of conditions.
    Sample {
        #[arg(long)]
        seed: Option<u64>,
        /// table1-in, table1-out, table1, or a CSV file of conditions.
        #[arg(long, default_value = "table1-out")]
        conditions: String,
        /// Samples per condition.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score sampled boundaries.
    Evaluate {
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize an evaluation file into per-condition quartiles.
    Report {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stand-in external evaluator: reads a request on stdin, writes a
    /// response with an exactly quasisymmetric field.
    FieldStub {
        /// Rotational transform to report.
        #[arg(long)]
        iota: Option<f64>,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
    },
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("STELLAGEN_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .with_context(|| format!("STELLAGEN_THREADS must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_threads()?;
    let mut config = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::SynthData { seed, n, out } => {
            if let Some(s) = seed {
                config.synth.seed = s;
            }
            if let Some(n) = n {
                config.synth.count = n;
            }
            let out = out.unwrap_or(config.paths.dataset.clone());
            commands::synth_data(&config, &out)
        }
        Command::Ingest { input, out } => {
            let out = out.unwrap_or(config.paths.dataset.clone());
            commands::ingest(&config, &input, &out)
        }
        Command::PcaFit { out, curve } => {
            let out = out.unwrap_or(config.paths.pca.clone());
            commands::pca_fit(&config, &out, curve.as_deref())
        }
        Command::Train { seed, pca, out } => {
            if let Some(s) = seed {
                config.seed = s;
            }
            let out = out.unwrap_or(config.paths.checkpoint.clone());
            commands::train(&config, pca.as_deref(), &out)
        }
        Command::Sample {
            seed,
            conditions,
            n,
            checkpoint,
            out,
        } => {
            if let Some(s) = seed {
                config.seed = s;
            }
            let rows = commands::condition_rows(&conditions)?;
            let n = n.unwrap_or(config.samples_per_condition);
            let checkpoint = checkpoint.unwrap_or(config.paths.checkpoint.clone());
            let out = out.unwrap_or(config.paths.samples.clone());
            commands::sample(&config, &checkpoint, &rows, n, &out)
        }
        Command::Evaluate { samples, out } => {
            let samples = samples.unwrap_or(config.paths.samples.clone());
            let out = out.unwrap_or(config.paths.evaluation.clone());
            commands::evaluate(&config, &samples, &out)
        }
        Command::Report { input, out } => {
            let input = input.unwrap_or(config.paths.evaluation.clone());
            let out = out.unwrap_or(config.paths.summary.clone());
            commands::report(&config, &input, &out)
        }
        Command::FieldStub { iota, epsilon } => commands::field_stub(iota, epsilon),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
