//! Dual contrastive alignment across propagation views.
//!
//! Two InfoNCE terms act on each training batch: one aligns the two
//! meta-path autoencoder views against each other, the other aligns the
//! interaction-graph view with the autoencoder views. Both treat the same
//! node under two views as the positive pair and every other batch node as
//! a negative, with cosine similarity sharpened by a temperature.

use crate::error::{Error, Result};
use crate::tensor::{Tape, Var};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Temperatures and weights for the two contrastive terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DCLConfig {
    pub tau_icl: f64,
    pub tau_iicl: f64,
    pub lambda_icl: f64,
    pub lambda_iicl: f64,
}

impl Default for DCLConfig {
    fn default() -> Self {
        DCLConfig {
            tau_icl: 0.2,
            tau_iicl: 0.2,
            lambda_icl: 0.01,
            lambda_iicl: 0.05,
        }
    }
}

impl DCLConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, tau) in [("tau_icl", self.tau_icl), ("tau_iicl", self.tau_iicl)] {
            if tau <= 0.0 {
                return Err(Error::Config(format!("{name} {tau} must be positive")));
            }
        }
        for (name, l) in [
            ("lambda_icl", self.lambda_icl),
            ("lambda_iicl", self.lambda_iicl),
        ] {
            if l < 0.0 {
                return Err(Error::Config(format!("{name} {l} must be ≥ 0")));
            }
        }
        Ok(())
    }
}

/// The distinct users and items of one training batch, in first-occurrence
/// order; contrastive terms run over these rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastBatch {
    pub users: Vec<u32>,
    pub items: Vec<u32>,
}

fn unique_in_order(xs: &[u32]) -> Vec<u32> {
    let mut seen = HashSet::new();
    xs.iter().copied().filter(|x| seen.insert(*x)).collect()
}

impl ContrastBatch {
    /// Deduplicate a batch's users and positive items.
    pub fn from_triplets(users: &[u32], positives: &[u32]) -> Self {
        ContrastBatch {
            users: unique_in_order(users),
            items: unique_in_order(positives),
        }
    }
}

/// Batch-summed InfoNCE between row-aligned views.
///
/// Rows are L2-normalized (zero rows keep similarity 0 to everything),
/// pairwise cosines are divided by `tau`, and each row contributes
/// −log softmax weight of its own counterpart row.
pub fn info_nce(tape: &mut Tape<'_>, a: Var, b: Var, tau: f64) -> Var {
    assert!(tau > 0.0, "temperature must be positive");
    let dim = tape.value(a).dim();
    assert_eq!(dim, tape.value(b).dim(), "views must be row-aligned");
    let rows = dim.0;
    assert!(rows > 0, "contrastive batch must be non-empty");

    let an = tape.rowwise_l2_normalize(a);
    let bn = tape.rowwise_l2_normalize(b);
    let sims = tape.matmul_nt(an, bn);
    let scaled = tape.scale(sims, 1.0 / tau);
    let lse = tape.row_logsumexp(scaled);
    let pos = tape.diag(scaled);
    let per_row = tape.sub(lse, pos);
    let loss = tape.sum_all(per_row);

    let value = tape.scalar(loss);
    assert!(value.is_finite(), "contrastive loss diverged");
    assert!(
        value >= -(rows as f64) * 2.0 / tau,
        "contrastive loss {value} below its analytic floor"
    );
    loss
}

fn alignment<'g>(
    tape: &mut Tape<'g>,
    user_views: (Var, Var),
    item_views: (Var, Var),
    batch: &'g ContrastBatch,
    tau: f64,
) -> Var {
    assert!(
        !batch.users.is_empty() && !batch.items.is_empty(),
        "contrastive batch must cover both sides"
    );
    let ua = tape.gather_rows(user_views.0, &batch.users);
    let ub = tape.gather_rows(user_views.1, &batch.users);
    let ia = tape.gather_rows(item_views.0, &batch.items);
    let ib = tape.gather_rows(item_views.1, &batch.items);
    let user_term = info_nce(tape, ua, ub, tau);
    let item_term = info_nce(tape, ia, ib, tau);
    tape.add(user_term, item_term)
}

/// Contrast the two meta-path views against each other, user side plus
/// item side, over the batch's distinct nodes.
pub fn icl_loss<'g>(
    tape: &mut Tape<'g>,
    user_views: (Var, Var),
    item_views: (Var, Var),
    batch: &'g ContrastBatch,
    cfg: &DCLConfig,
) -> Var {
    alignment(tape, user_views, item_views, batch, cfg.tau_icl)
}

/// Contrast the interaction-graph view against the autoencoder views,
/// user side plus item side, over the batch's distinct nodes.
pub fn iicl_loss<'g>(
    tape: &mut Tape<'g>,
    user_views: (Var, Var),
    item_views: (Var, Var),
    batch: &'g ContrastBatch,
    cfg: &DCLConfig,
) -> Var {
    alignment(tape, user_views, item_views, batch, cfg.tau_iicl)
}
