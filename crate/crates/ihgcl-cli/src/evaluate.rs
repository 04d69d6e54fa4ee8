//! `evaluate`: score a trained checkpoint on the held-out test split.

use crate::manifest::TrainManifest;
use crate::rundir::{carve, load_prepared, parse_variant, report_write};
use anyhow::{ensure, Context, Result};
use clap::Args;
use ihgcl::eval::{evaluate, write_metrics_csv, EvalInputs};
use ihgcl::train::{dataset_fingerprint, Trainer};
use std::path::{Path, PathBuf};

#[derive(Args)]
pub struct EvaluateArgs {
    /// Prepared run directory (from `prepare`).
    #[arg(long)]
    pub run: PathBuf,
    /// Checkpoint to score; its directory must hold the train manifest.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Ranking cutoffs.
    #[arg(long, value_delimiter = ',', default_values_t = [5, 10, 20])]
    pub k: Vec<usize>,
    /// Sparsity bucket count (by observed interaction count per user).
    #[arg(long, default_value_t = 5)]
    pub buckets: usize,
    /// Output CSV; defaults to metrics.csv beside the checkpoint.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
}

pub fn run(args: &EvaluateArgs) -> Result<()> {
    let prepared = load_prepared(&args.run)?;
    let ckpt_dir: &Path = args
        .checkpoint
        .parent()
        .context("checkpoint path has no parent directory")?;
    let tm = TrainManifest::load(ckpt_dir)?;
    let variant = parse_variant(&tm.variant)?;
    tm.config.validate()?;

    let (core, _val) = carve(&prepared, &tm.config)?;
    let fingerprint = dataset_fingerprint(&core);
    ensure!(
        fingerprint == tm.dataset_fingerprint,
        "checkpoint was trained on fingerprint {} but this run carves {fingerprint}",
        tm.dataset_fingerprint
    );

    let mut trainer = Trainer::new(&tm.config, variant, &core, Some(&prepared.subs), &fingerprint)?;
    trainer.resume(&args.checkpoint)?;
    let (user_emb, item_emb) = trainer.inference_embeddings();

    let report = evaluate(
        &EvalInputs {
            user_emb: &user_emb,
            item_emb: &item_emb,
            observed: &prepared.train,
            test: &prepared.test,
        },
        &args.k,
        args.buckets,
    )?;

    let mut csv = Vec::new();
    write_metrics_csv(&mut csv, variant.name(), &report, true).expect("in-memory write");
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| ckpt_dir.join("metrics.csv"));
    report_write(&out, &csv)?;

    for &k in &args.k {
        println!(
            "{} @{k}: recall {:.4}, ndcg {:.4}",
            variant.name(),
            report.recall(k),
            report.ndcg(k)
        );
    }
    Ok(())
}
