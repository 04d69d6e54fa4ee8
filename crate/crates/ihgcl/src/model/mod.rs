//! Model parameters and the three forward components: main-view
//! propagation, the masked autoencoder per meta-path view, and the
//! contrastive losses.

pub mod bae;
pub mod dcl;
pub mod mainview;

pub use bae::{
    bae_forward, export_edge_weights, ib_loss, sample_edges, BAEConfig, BAEDraws, BAEOutput,
    EdgeMode, IBDistribution, TripletRows,
};
pub use dcl::{icl_loss, iicl_loss, info_nce, ContrastBatch, DCLConfig};
pub use mainview::{propagate_main, propagate_main_t, MainViewOutput};

use crate::error::{Error, Result};
use crate::graph::ModelSubgraphs;
use crate::rng;
use crate::tensor::Dense;
use rand::Rng;

/// Initial embeddings: user rows, item rows, and the shared mask token.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub users: Dense,
    pub items: Dense,
    pub mask_token: Dense,
    pub d: usize,
}

fn xavier_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Dense {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Dense::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
}

impl EmbeddingTable {
    /// Xavier-uniform init with per-matrix ±√(6/(fan_in+fan_out)) bounds,
    /// drawn from the run seed's `init` stream.
    pub fn xavier(users: usize, items: usize, d: usize, seed: u64) -> Self {
        let mut rng = rng::stream(seed, "init");
        EmbeddingTable {
            users: xavier_uniform(users, d, &mut rng),
            items: xavier_uniform(items, d, &mut rng),
            mask_token: xavier_uniform(1, d, &mut rng),
            d,
        }
    }

    pub fn user_count(&self) -> usize {
        self.users.nrows()
    }

    pub fn item_count(&self) -> usize {
        self.items.nrows()
    }
}

/// Everything the optimizer updates: the embedding table plus one retention
/// logit column per meta-path view, ordered (user₁, user₂, item₁, item₂).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub table: EmbeddingTable,
    pub edge_logits: [Dense; 4],
}

/// Stable parameter names used by checkpoints and optimizer state.
pub const PARAM_NAMES: [&str; 7] = [
    "user_emb",
    "item_emb",
    "mask_token",
    "edge_logits_user1",
    "edge_logits_user2",
    "edge_logits_item1",
    "edge_logits_item2",
];

impl ModelParams {
    /// Fresh parameters: Xavier embeddings, zero logits (keep-probability ½
    /// everywhere, as composed).
    pub fn init(users: usize, items: usize, d: usize, subs: &ModelSubgraphs, seed: u64) -> Self {
        let logits = |xs: &[f64]| Dense::from_shape_vec((xs.len(), 1), xs.to_vec()).unwrap();
        ModelParams {
            table: EmbeddingTable::xavier(users, items, d, seed),
            edge_logits: [
                logits(subs.user[0].edge_logits()),
                logits(subs.user[1].edge_logits()),
                logits(subs.item[0].edge_logits()),
                logits(subs.item[1].edge_logits()),
            ],
        }
    }

    /// Parameters without meta-path views (interaction-graph-only model):
    /// same embedding draws as [`ModelParams::init`], empty logit columns.
    pub fn init_plain(users: usize, items: usize, d: usize, seed: u64) -> Self {
        ModelParams {
            table: EmbeddingTable::xavier(users, items, d, seed),
            edge_logits: std::array::from_fn(|_| Dense::zeros((0, 1))),
        }
    }

    /// Parameters in checkpoint order, paired with their stable names.
    pub fn named(&self) -> [(&'static str, &Dense); 7] {
        [
            (PARAM_NAMES[0], &self.table.users),
            (PARAM_NAMES[1], &self.table.items),
            (PARAM_NAMES[2], &self.table.mask_token),
            (PARAM_NAMES[3], &self.edge_logits[0]),
            (PARAM_NAMES[4], &self.edge_logits[1]),
            (PARAM_NAMES[5], &self.edge_logits[2]),
            (PARAM_NAMES[6], &self.edge_logits[3]),
        ]
    }

    /// Mutable views in the same order as [`ModelParams::named`].
    pub fn named_mut(&mut self) -> [(&'static str, &mut Dense); 7] {
        let [l0, l1, l2, l3] = &mut self.edge_logits;
        [
            (PARAM_NAMES[0], &mut self.table.users),
            (PARAM_NAMES[1], &mut self.table.items),
            (PARAM_NAMES[2], &mut self.table.mask_token),
            (PARAM_NAMES[3], l0),
            (PARAM_NAMES[4], l1),
            (PARAM_NAMES[5], l2),
            (PARAM_NAMES[6], l3),
        ]
    }

    /// Replace parameters from (name, matrix) pairs, e.g. a checkpoint.
    pub fn assign(&mut self, matrices: &[(String, Dense)]) -> Result<()> {
        for (name, slot) in self.named_mut() {
            let found = matrices
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| Error::Config(format!("missing parameter matrix `{name}`")))?;
            if found.1.dim() != slot.dim() {
                return Err(Error::Config(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    found.1.dim(),
                    slot.dim()
                )));
            }
            slot.assign(&found.1);
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.named()
            .iter()
            .all(|(_, m)| m.iter().all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xavier_respects_per_matrix_bounds() {
        let t = EmbeddingTable::xavier(50, 80, 16, 3);
        let ub = (6.0 / (50 + 16) as f64).sqrt();
        assert!(t.users.iter().all(|v| v.abs() < ub));
        let ib = (6.0 / (80 + 16) as f64).sqrt();
        assert!(t.items.iter().all(|v| v.abs() < ib));
        // Draws actually fill the range rather than collapsing near zero.
        let max = t.users.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max > 0.5 * ub);
        assert_eq!(t.mask_token.dim(), (1, 16));
    }

    #[test]
    fn xavier_is_seed_deterministic() {
        let a = EmbeddingTable::xavier(10, 12, 8, 7);
        let b = EmbeddingTable::xavier(10, 12, 8, 7);
        assert_eq!(a, b);
        let c = EmbeddingTable::xavier(10, 12, 8, 8);
        assert_ne!(a, c);
    }
}
