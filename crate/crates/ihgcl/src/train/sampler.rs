//! Uniform triplet sampling for the ranking loss.

use crate::error::{Error, Result};
use crate::graph::InteractionMatrix;
use rand::Rng;

const USER_RETRIES: usize = 32;
const NEG_RETRIES: usize = 64;

/// One batch of (user, observed item, unobserved item) triplets, column-wise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BPRBatch {
    pub users: Vec<u32>,
    pub positives: Vec<u32>,
    pub negatives: Vec<u32>,
}

impl BPRBatch {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }
}

/// Draws `batch_size` triplets: a user uniform over users with at least one
/// interaction, one of their items uniform, and an unobserved item uniform
/// by rejection. A user whose negative cannot be found within a bounded
/// number of rejections is redrawn; when that bound is also exhausted the
/// sampler reports failure rather than spinning.
pub fn sample_bpr_batch(
    inter: &InteractionMatrix,
    batch_size: usize,
    rng: &mut impl Rng,
) -> Result<BPRBatch> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be ≥ 1".to_string()));
    }
    let eligible: Vec<u32> = (0..inter.users())
        .filter(|&u| inter.degree(u) > 0)
        .map(|u| u as u32)
        .collect();
    if eligible.is_empty() {
        return Err(Error::Config(
            "cannot sample triplets from a graph with no interactions".to_string(),
        ));
    }
    let n_items = inter.items() as u32;
    let mut users = Vec::with_capacity(batch_size);
    let mut positives = Vec::with_capacity(batch_size);
    let mut negatives = Vec::with_capacity(batch_size);
    'triplet: for _ in 0..batch_size {
        for _ in 0..USER_RETRIES {
            let u = eligible[rng.gen_range(0..eligible.len())];
            let items = inter.items_of(u as usize);
            let pos = items[rng.gen_range(0..items.len())];
            for _ in 0..NEG_RETRIES {
                let neg = rng.gen_range(0..n_items);
                if !inter.has(u as usize, neg) {
                    users.push(u);
                    positives.push(pos);
                    negatives.push(neg);
                    continue 'triplet;
                }
            }
        }
        return Err(Error::NegativeSamplingExhausted);
    }
    Ok(BPRBatch {
        users,
        positives,
        negatives,
    })
}
