//! Command-line harness for the recommendation engine: dataset provisioning,
//! split preparation, training, evaluation, ablations, and edge export.

mod ablate;
mod evaluate;
mod export;
mod manifest;
mod paths;
mod prepare;
mod rundir;
mod synth;
mod train;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ihgcl", version, about = "Heterogeneous-graph recommendation engine")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the bundled synthetic listening dataset.
    Synth(synth::SynthArgs),
    /// Split a dataset and compose the meta-path subgraphs into a run directory.
    Prepare(prepare::PrepareArgs),
    /// Train one model variant inside a prepared run directory.
    Train(train::TrainArgs),
    /// Score a trained checkpoint on the held-out split.
    Evaluate(evaluate::EvaluateArgs),
    /// Train and score ablation variants, writing a combined metrics table.
    Ablate(ablate::AblateArgs),
    /// Export learned per-edge retention probabilities for one view.
    ExportEdges(export::ExportArgs),
}

fn init_threads() -> Result<()> {
    if let Ok(raw) = std::env::var("IHGCL_THREADS") {
        let n: usize = raw
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .with_context(|| format!("IHGCL_THREADS must be a positive integer, got `{raw}`"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("rayon thread pool was already initialized")?;
    }
    Ok(())
}

fn main() -> Result<()> {
    init_threads()?;
    match Cli::parse().cmd {
        Cmd::Synth(args) => synth::run(&args),
        Cmd::Prepare(args) => prepare::run(&args),
        Cmd::Train(args) => train::run(&args),
        Cmd::Evaluate(args) => evaluate::run(&args),
        Cmd::Ablate(args) => ablate::run(&args),
        Cmd::ExportEdges(args) => export::run(&args),
    }
}
