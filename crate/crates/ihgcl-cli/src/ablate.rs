//! `ablate`: train and score ablation variants, collecting one metrics table.

use crate::rundir::{carve, load_prepared, load_train_config, parse_variant};
use anyhow::Result;
use clap::Args;
use ihgcl::eval::{run_ablation, AblationSpec};
use ihgcl::train::{Variant, ABLATION_VARIANTS};
use std::path::PathBuf;

#[derive(Args)]
pub struct AblateArgs {
    /// Prepared run directory (from `prepare`).
    #[arg(long)]
    pub run: PathBuf,
    /// Training config JSON; defaults apply without one.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Variants to run, comma-separated; all six ablations by default.
    #[arg(long = "variant", value_delimiter = ',')]
    pub variants: Vec<String>,
    /// Ranking cutoffs.
    #[arg(long, value_delimiter = ',', default_values_t = [5, 10, 20])]
    pub k: Vec<usize>,
    /// Sparsity bucket count (by observed interaction count per user).
    #[arg(long, default_value_t = 5)]
    pub buckets: usize,
    /// Output directory; defaults to `ablation` inside the run directory.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
}

pub fn run(args: &AblateArgs) -> Result<()> {
    let prepared = load_prepared(&args.run)?;
    let cfg = load_train_config(args.config.as_deref())?;
    let variants: Vec<Variant> = if args.variants.is_empty() {
        ABLATION_VARIANTS.to_vec()
    } else {
        args.variants
            .iter()
            .map(|v| parse_variant(v))
            .collect::<Result<_>>()?
    };
    let (core, val) = carve(&prepared, &cfg)?;
    let out_dir = args.out.clone().unwrap_or_else(|| prepared.dir.join("ablation"));

    let outcomes = run_ablation(&AblationSpec {
        cfg: &cfg,
        variants: &variants,
        train: &core,
        val: (!val.is_empty()).then_some(val.as_slice()),
        test: &prepared.test,
        subs: Some(&prepared.subs),
        ks: &args.k,
        buckets: args.buckets,
        out_dir: &out_dir,
    })?;

    println!("wrote {}", out_dir.join("metrics.csv").display());
    for o in &outcomes {
        let k = *args.k.iter().max().expect("at least one cutoff");
        println!(
            "{:>8}: recall@{k} {:.4}, ndcg@{k} {:.4} ({} epochs{})",
            o.variant.name(),
            o.report.recall(k),
            o.report.ndcg(k),
            o.summary.epochs_completed,
            if o.summary.stopped_early {
                ", stopped early"
            } else {
                ""
            }
        );
    }
    Ok(())
}
