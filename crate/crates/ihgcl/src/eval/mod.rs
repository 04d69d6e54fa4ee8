//! Top-K ranking evaluation: full-candidate scoring, Recall/NDCG, and
//! sparsity-bucket reports.
//!
//! Scoring is a full ranking over every item the user has not already
//! interacted with — no sampled negatives — with ties broken by ascending
//! item index so results are deterministic. Buckets partition users by
//! training-interaction mass (each bucket holds roughly the same total
//! number of interactions), which isolates how the model serves sparse
//! versus dense users.

use crate::error::{Error, Result};
use crate::graph::InteractionMatrix;
use crate::tensor::Dense;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::Write;

mod ablation;

pub use ablation::{run_ablation, AblationOutcome, AblationSpec};

/// Top-`k` items for one user: highest dᵀd score first, observed items
/// excluded, ties broken by ascending item index.
pub fn rank_and_score(
    user_emb: &Dense,
    item_emb: &Dense,
    user: u32,
    observed: &[u32],
    k: usize,
) -> Vec<u32> {
    let n_items = item_emb.nrows();
    let mut excluded = vec![false; n_items];
    for &i in observed {
        excluded[i as usize] = true;
    }
    let d_user = user_emb.row(user as usize);
    let mut scored: Vec<(u32, f64)> = (0..n_items as u32)
        .filter(|&i| !excluded[i as usize])
        .map(|i| (i, d_user.dot(&item_emb.row(i as usize))))
        .collect();
    scored.sort_unstable_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("scores must be finite")
            .then(a.0.cmp(&b.0))
    });
    scored.truncate(k);
    scored.into_iter().map(|(i, _)| i).collect()
}

/// Fraction of the user's test items retrieved in the first `k` positions.
pub fn recall_at_k(topk: &[u32], test: &[u32], k: usize) -> f64 {
    assert!(k >= 1, "K must be ≥ 1");
    assert!(!test.is_empty(), "recall of an empty test set");
    let hits = topk
        .iter()
        .take(k)
        .filter(|i| test.contains(i))
        .count();
    hits as f64 / test.len() as f64
}

/// Binary-gain NDCG with 1-based 1/log₂(rank+1) discounting.
pub fn ndcg_at_k(topk: &[u32], test: &[u32], k: usize) -> f64 {
    assert!(k >= 1, "K must be ≥ 1");
    assert!(!test.is_empty(), "NDCG of an empty test set");
    let discount = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg: f64 = topk
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| test.contains(i))
        .map(|(r, _)| discount(r + 1))
        .sum();
    let ideal: f64 = (1..=k.min(test.len())).map(discount).sum();
    dcg / ideal
}

/// Macro-averaged metrics for one group of users.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketReport {
    pub label: String,
    pub users: usize,
    /// Recall@K aligned with the report's `ks`.
    pub recall: Vec<f64>,
    /// NDCG@K aligned with the report's `ks`.
    pub ndcg: Vec<f64>,
}

/// Overall and per-sparsity-bucket ranking quality.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub ks: Vec<usize>,
    /// `buckets[0]` is the "all" row; sparsity buckets follow, sparsest
    /// users first.
    pub buckets: Vec<BucketReport>,
}

impl EvalReport {
    /// The "all" row's Recall at the given K.
    pub fn recall(&self, k: usize) -> f64 {
        let at = self.ks.iter().position(|&x| x == k).expect("K not evaluated");
        self.buckets[0].recall[at]
    }

    /// The "all" row's NDCG at the given K.
    pub fn ndcg(&self, k: usize) -> f64 {
        let at = self.ks.iter().position(|&x| x == k).expect("K not evaluated");
        self.buckets[0].ndcg[at]
    }
}

/// Everything a ranking evaluation reads.
pub struct EvalInputs<'a> {
    pub user_emb: &'a Dense,
    pub item_emb: &'a Dense,
    /// Interactions to exclude from candidates (and the degrees that define
    /// sparsity buckets).
    pub observed: &'a InteractionMatrix,
    /// Held-out positives as (user, item) pairs.
    pub test: &'a [(u32, u32)],
}

/// Assign each evaluated user (sorted ascending by observed degree, ties by
/// id) to one of `buckets` groups of roughly equal total interaction mass.
fn bucket_assignment(
    users: &[u32],
    observed: &InteractionMatrix,
    buckets: usize,
) -> Vec<usize> {
    let mut order: Vec<u32> = users.to_vec();
    order.sort_unstable_by_key(|&u| (observed.degree(u as usize), u));
    let total: u64 = order.iter().map(|&u| observed.degree(u as usize) as u64).sum();
    let mut assignment = vec![0usize; users.len()];
    let position: BTreeMap<u32, usize> = users.iter().enumerate().map(|(p, &u)| (u, p)).collect();
    let mut prefix = 0u64;
    for &u in &order {
        prefix += observed.degree(u as usize) as u64;
        let b = ((prefix.saturating_sub(1) * buckets as u64) / total.max(1)) as usize;
        assignment[position[&u]] = b.min(buckets - 1);
    }
    assignment
}

/// Rank every test user and aggregate Recall/NDCG overall and per bucket.
///
/// Users without test items are skipped; users with test items but no
/// observed interactions still rank over the full catalog.
pub fn evaluate(inp: &EvalInputs<'_>, ks: &[usize], buckets: usize) -> Result<EvalReport> {
    assert!(!ks.is_empty(), "at least one K");
    assert!(ks.iter().all(|&k| k >= 1), "K must be ≥ 1");
    let mut by_user: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for &(u, i) in inp.test {
        by_user.entry(u).or_default().push(i);
    }
    if by_user.is_empty() {
        return Err(Error::Config("empty test set".to_string()));
    }
    let users: Vec<u32> = by_user.keys().copied().collect();
    if users.len() < buckets {
        return Err(Error::Config(format!(
            "{} test users cannot fill {buckets} sparsity buckets",
            users.len()
        )));
    }
    let k_max = ks.iter().copied().max().unwrap();

    let per_user: Vec<(Vec<f64>, Vec<f64>)> = users
        .par_iter()
        .map(|&u| {
            let test = &by_user[&u];
            let topk = rank_and_score(
                inp.user_emb,
                inp.item_emb,
                u,
                inp.observed.items_of(u as usize),
                k_max,
            );
            let recalls = ks.iter().map(|&k| recall_at_k(&topk, test, k)).collect();
            let ndcgs = ks.iter().map(|&k| ndcg_at_k(&topk, test, k)).collect();
            (recalls, ndcgs)
        })
        .collect();

    let assignment = bucket_assignment(&users, inp.observed, buckets);
    let mut rows: Vec<BucketReport> = std::iter::once("all".to_string())
        .chain((1..=buckets).map(|b| format!("b{b}")))
        .map(|label| BucketReport {
            label,
            users: 0,
            recall: vec![0.0; ks.len()],
            ndcg: vec![0.0; ks.len()],
        })
        .collect();
    for (at, (recalls, ndcgs)) in per_user.iter().enumerate() {
        for row in [0, assignment[at] + 1] {
            rows[row].users += 1;
            for (j, (&r, &n)) in recalls.iter().zip(ndcgs).enumerate() {
                rows[row].recall[j] += r;
                rows[row].ndcg[j] += n;
            }
        }
    }
    for row in &mut rows {
        if row.users > 0 {
            let count = row.users as f64;
            for v in row.recall.iter_mut().chain(row.ndcg.iter_mut()) {
                *v /= count;
            }
        }
    }
    Ok(EvalReport {
        ks: ks.to_vec(),
        buckets: rows,
    })
}

/// Append one report to a `variant,bucket,K,recall,ndcg,users` table with
/// 6-decimal fixed-point metric values.
pub fn write_metrics_csv(
    w: &mut impl Write,
    variant: &str,
    report: &EvalReport,
    header: bool,
) -> std::io::Result<()> {
    if header {
        writeln!(w, "variant,bucket,K,recall,ndcg,users")?;
    }
    for bucket in &report.buckets {
        for (j, &k) in report.ks.iter().enumerate() {
            writeln!(
                w,
                "{variant},{},{k},{:.6},{:.6},{}",
                bucket.label, bucket.recall[j], bucket.ndcg[j], bucket.users
            )?;
        }
    }
    Ok(())
}
