//! Train-and-score sweeps over model variants on a shared data split.

use super::{evaluate, write_metrics_csv, EvalInputs, EvalReport};
use crate::error::Result;
use crate::graph::{InteractionMatrix, ModelSubgraphs};
use crate::train::{dataset_fingerprint, TrainConfig, TrainSummary, Trainer, Variant};
use std::fs;
use std::path::Path;

/// One sweep: which variants to train, on what split, scored at which Ks.
pub struct AblationSpec<'a> {
    pub cfg: &'a TrainConfig,
    pub variants: &'a [Variant],
    /// Interactions the models train on.
    pub train: &'a InteractionMatrix,
    /// Held-out pairs for early stopping and best-state selection.
    pub val: Option<&'a [(u32, u32)]>,
    /// Held-out pairs the final metrics are computed on.
    pub test: &'a [(u32, u32)],
    /// Meta-path views; required unless every variant is the baseline.
    pub subs: Option<&'a ModelSubgraphs>,
    pub ks: &'a [usize],
    /// Sparsity bucket count for the per-bucket metric rows.
    pub buckets: usize,
    /// Each variant trains in `<out_dir>/<variant>/`; the combined
    /// `metrics.csv` lands in `out_dir` itself.
    pub out_dir: &'a Path,
}

/// One variant's training summary and test-set report.
#[derive(Debug, Clone)]
pub struct AblationOutcome {
    pub variant: Variant,
    pub summary: TrainSummary,
    pub report: EvalReport,
}

/// Train and score each variant in order, all from the same config and
/// seed. When validation pairs are given, each variant is scored at its
/// best-validation state (reloaded from `best.ckpt`), otherwise at its
/// final state. Ranked candidates exclude everything the model could have
/// seen: training and validation interactions both.
pub fn run_ablation(spec: &AblationSpec<'_>) -> Result<Vec<AblationOutcome>> {
    let fingerprint = dataset_fingerprint(spec.train);
    let observed = exclusion_matrix(spec.train, spec.val)?;
    let mut outcomes = Vec::new();
    for &variant in spec.variants {
        let dir = spec.out_dir.join(variant.name());
        let mut trainer = Trainer::new(spec.cfg, variant, spec.train, spec.subs, &fingerprint)?;
        let summary = trainer.run(&dir, spec.val)?;
        if summary.best_epoch.is_some() {
            trainer.resume(&dir.join("best.ckpt"))?;
        }
        let (user_emb, item_emb) = trainer.inference_embeddings();
        let report = evaluate(
            &EvalInputs {
                user_emb: &user_emb,
                item_emb: &item_emb,
                observed: &observed,
                test: spec.test,
            },
            spec.ks,
            spec.buckets,
        )?;
        outcomes.push(AblationOutcome {
            variant,
            summary,
            report,
        });
    }

    let mut csv = Vec::new();
    for (i, outcome) in outcomes.iter().enumerate() {
        write_metrics_csv(&mut csv, outcome.variant.name(), &outcome.report, i == 0)
            .expect("in-memory write");
    }
    let csv_path = spec.out_dir.join("metrics.csv");
    fs::write(&csv_path, csv).map_err(|e| crate::error::Error::io(&csv_path, e))?;
    Ok(outcomes)
}

/// Training plus validation pairs, as the candidate-exclusion set.
fn exclusion_matrix(
    train: &InteractionMatrix,
    val: Option<&[(u32, u32)]>,
) -> Result<InteractionMatrix> {
    let mut pairs = train.pairs().to_vec();
    if let Some(val) = val {
        pairs.extend_from_slice(val);
    }
    InteractionMatrix::new(train.users(), train.items(), pairs)
}
