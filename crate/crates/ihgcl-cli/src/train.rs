//! `train`: fit one model variant inside a prepared run directory.

use crate::manifest::{hex, TrainManifest};
use crate::rundir::{carve, load_prepared, load_train_config, parse_variant};
use anyhow::{bail, Context, Result};
use clap::Args;
use ihgcl::train::{dataset_fingerprint, Checkpoint, Trainer};
use std::path::PathBuf;

#[derive(Args)]
pub struct TrainArgs {
    /// Prepared run directory (from `prepare`).
    #[arg(long)]
    pub run: PathBuf,
    /// Training config JSON; defaults apply without one.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model variant: full, wo_dcl, wo_bae, wo_ib, wo_icl, wo_iicl, baseline.
    #[arg(long, default_value = "full")]
    pub variant: String,
    /// Continue from this run's latest checkpoint instead of refusing.
    #[arg(long)]
    pub resume: bool,
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let prepared = load_prepared(&args.run)?;
    let variant = parse_variant(&args.variant)?;
    let cfg = load_train_config(args.config.as_deref())?;
    let (core, val) = carve(&prepared, &cfg)?;
    let fingerprint = dataset_fingerprint(&core);
    println!(
        "data: {} ({} users, {} items, {} train edges, {} held out for validation)",
        prepared.manifest.dataset_dir,
        prepared.manifest.users,
        prepared.manifest.items,
        core.pairs().len(),
        val.len()
    );

    let mut trainer = Trainer::new(&cfg, variant, &core, Some(&prepared.subs), &fingerprint)?;
    let out_dir = args
        .run
        .join("train")
        .join(format!("{}-{:016x}", variant.name(), trainer.run_hash()));
    let latest = out_dir.join("latest.ckpt");

    if latest.exists() {
        if args.resume {
            trainer.resume(&latest)?;
            println!(
                "resuming {} from epoch {}",
                out_dir.display(),
                trainer.completed_epochs()
            );
        } else {
            let done = Checkpoint::load(&latest)?.epoch;
            if (done as usize) >= cfg.epochs {
                println!(
                    "{} is up to date ({done} epochs trained)",
                    out_dir.display()
                );
                return Ok(());
            }
            bail!(
                "{} holds an unfinished run ({done}/{} epochs); pass --resume to continue",
                out_dir.display(),
                cfg.epochs
            );
        }
    }

    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    TrainManifest {
        variant: variant.name().to_string(),
        run_hash: hex(&trainer.run_hash().to_le_bytes()),
        dataset_fingerprint: fingerprint.clone(),
        config: cfg.clone(),
    }
    .save(&out_dir)?;

    let summary = trainer.run(&out_dir, (!val.is_empty()).then_some(val.as_slice()))?;
    println!(
        "trained {} `{}` for {} epochs{}",
        out_dir.display(),
        variant.name(),
        summary.epochs_completed,
        if summary.stopped_early {
            " (stopped early)"
        } else {
            ""
        }
    );
    match (summary.best_val_recall, summary.best_epoch) {
        (Some(r), Some(e)) => println!("best validation recall@20 {r:.4} at epoch {e}"),
        _ => println!("no validation fold; kept the final parameters"),
    }
    Ok(())
}
