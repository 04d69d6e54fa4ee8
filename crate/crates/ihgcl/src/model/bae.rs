//! Masked autoencoder over one meta-path view, with learned edge retention
//! under an information bottleneck.
//!
//! Forward pipeline per view: mask a fixed fraction of rows (replaced by
//! the shared token), propagate through the view's operator to get the
//! bottleneck H, re-mask H with an independent draw, propagate again to get
//! the reconstruction E, and keep S = E + H. During training the operator's
//! edges are softened by a concrete relaxation of per-edge Bernoulli
//! retention; at inference edges are kept iff their retention probability
//! clears a threshold and the surviving structure is renormalized.

use crate::error::{Error, Result};
use crate::graph::{MetaPathSubgraph, SparseAdjacency};
use crate::tensor::{sample_mask, Dense, RowMask, Tape, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Per-view autoencoder settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BAEConfig {
    /// Fraction of rows masked before encoding (and again before decoding).
    pub mask_ratio: f64,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    /// Weight of the KL term inside the bottleneck loss.
    pub beta: f64,
    /// Concrete-relaxation temperature.
    pub temperature: f64,
    /// Keep-probability threshold for hard edge selection.
    pub edge_threshold: f64,
    /// Monte-Carlo draws for the bottleneck loss estimate.
    pub sample_count: usize,
}

impl Default for BAEConfig {
    fn default() -> Self {
        BAEConfig {
            mask_ratio: 0.3,
            encoder_layers: 2,
            decoder_layers: 1,
            beta: 0.01,
            temperature: 1.0,
            edge_threshold: 0.3,
            sample_count: 1,
        }
    }
}

impl BAEConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mask_ratio) {
            return Err(Error::Config(format!(
                "mask_ratio {} outside [0, 1]",
                self.mask_ratio
            )));
        }
        if self.temperature <= 0.0 {
            return Err(Error::Config(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        if !(0.0..1.0).contains(&self.edge_threshold) || self.edge_threshold == 0.0 {
            return Err(Error::Config(format!(
                "edge_threshold {} outside (0, 1)",
                self.edge_threshold
            )));
        }
        if self.beta < 0.0 {
            return Err(Error::Config(format!("beta {} must be ≥ 0", self.beta)));
        }
        if self.sample_count == 0 {
            return Err(Error::Config("sample_count must be ≥ 1".to_string()));
        }
        Ok(())
    }
}

/// The random draws one view consumes in one step: which rows to mask
/// before encoding, which to re-mask before decoding, and the concrete
/// noise per edge (stored as logit(ε), clamped away from ±∞).
#[derive(Debug, Clone)]
pub struct BAEDraws {
    pub mask: RowMask,
    pub remask: RowMask,
    pub eps_logit: Dense,
}

fn clamp_unit(eps: f64) -> f64 {
    eps.clamp(1e-12, 1.0 - 1e-12)
}

impl BAEDraws {
    /// Training draws: masks at the configured ratio from `mask_rng`, fresh
    /// ε per edge from `eps_rng` (separate streams keep the two decisions
    /// independent of each other's consumption).
    pub fn sample(
        rows: usize,
        edge_count: usize,
        ratio: f64,
        mask_rng: &mut impl Rng,
        eps_rng: &mut impl Rng,
    ) -> Self {
        let mask = sample_mask(rows, ratio, mask_rng);
        let remask = sample_mask(rows, ratio, mask_rng);
        let eps_logit = Dense::from_shape_fn((edge_count, 1), |_| {
            let e = clamp_unit(eps_rng.gen::<f64>());
            (e / (1.0 - e)).ln()
        });
        BAEDraws {
            mask,
            remask,
            eps_logit,
        }
    }

    /// Deterministic draws for evaluation: nothing masked, ε = ½ (which
    /// leaves the relaxed weight at the plain keep-probability).
    pub fn inference(rows: usize, edge_count: usize) -> Self {
        BAEDraws {
            mask: RowMask::none(rows),
            remask: RowMask::none(rows),
            eps_logit: Dense::zeros((edge_count, 1)),
        }
    }
}

/// How the view's operator treats its edges during a forward pass.
pub enum EdgeMode<'g> {
    /// Concrete-relaxed soft weights from the logits and ε draws
    /// (training; differentiable w.r.t. the logits).
    Relaxed,
    /// A pre-filtered, renormalized operator (inference; see
    /// [`sample_edges`] with `hard = true`).
    Hard(&'g SparseAdjacency),
}

/// One view's forward products.
pub struct BAEOutput {
    /// Bottleneck embeddings H after encoding.
    pub encoder_emb: Var,
    /// Reconstruction E after re-mask and decoding.
    pub decoder_emb: Var,
    /// S = decoder_emb + encoder_emb.
    pub s: Var,
}

/// Relaxed Bernoulli weight: sigmoid((logit(π) + logit(ε)) / t).
pub fn relaxed_weight(pi_logit: f64, eps: f64, t: f64) -> f64 {
    assert!(t > 0.0, "temperature must be positive");
    let e = clamp_unit(eps);
    let z = (pi_logit + (e / (1.0 - e)).ln()) / t;
    1.0 / (1.0 + (-z).exp())
}

/// Run one view's mask → encode → re-mask → decode pipeline.
///
/// `input` must have one row per subgraph node; `logits` is the view's
/// edge-retention column (ignored in hard mode, where the pre-filtered
/// operator already encodes the decisions).
#[allow(clippy::too_many_arguments)]
pub fn bae_forward<'g>(
    tape: &mut Tape<'g>,
    adj: &'g SparseAdjacency,
    input: Var,
    token: Var,
    logits: Var,
    draws: &'g BAEDraws,
    cfg: &BAEConfig,
    mode: EdgeMode<'g>,
) -> BAEOutput {
    assert_eq!(
        tape.value(input).nrows(),
        adj.n(),
        "one input row per subgraph node"
    );

    #[derive(Clone, Copy)]
    enum Operator<'g> {
        Scaled(&'g SparseAdjacency, Var),
        Plain(&'g SparseAdjacency),
    }

    let operator = match mode {
        EdgeMode::Relaxed => {
            assert_eq!(
                tape.value(logits).dim(),
                (adj.edge_count(), 1),
                "one logit per undirected edge"
            );
            assert_eq!(draws.eps_logit.dim(), (adj.edge_count(), 1));
            let noise = tape.leaf(draws.eps_logit.clone());
            let pre = tape.add(logits, noise);
            let scaled = tape.scale(pre, 1.0 / cfg.temperature);
            let w = tape.sigmoid(scaled);
            let entry_scale = tape.gather_rows(w, adj.entry_edges());
            Operator::Scaled(adj, entry_scale)
        }
        EdgeMode::Hard(hard_adj) => Operator::Plain(hard_adj),
    };

    let propagate = |tape: &mut Tape<'g>, x: Var, layers: usize| -> Var {
        let mut h = x;
        for _ in 0..layers {
            h = match operator {
                Operator::Scaled(a, scale) => tape.spmm_scaled(a, scale, h),
                Operator::Plain(a) => tape.spmm(a, h),
            };
        }
        h
    };

    let masked = tape.mask_rows(input, &draws.mask, token);
    let encoder_emb = propagate(tape, masked, cfg.encoder_layers);
    let remasked = tape.mask_rows(encoder_emb, &draws.remask, token);
    let decoder_emb = propagate(tape, remasked, cfg.decoder_layers);
    let s = tape.add(decoder_emb, encoder_emb);
    BAEOutput {
        encoder_emb,
        decoder_emb,
        s,
    }
}

/// Materialize the effective operator for one view.
///
/// Soft mode scales every structural weight by a fresh concrete-relaxed
/// draw (one ε per undirected edge, shared by both directions). Hard mode
/// keeps an edge iff its keep-probability σ(logit) reaches the threshold
/// and renormalizes the surviving degrees; it never adds edges.
pub fn sample_edges(
    adj: &SparseAdjacency,
    logits: &Dense,
    cfg: &BAEConfig,
    rng: &mut impl Rng,
    hard: bool,
) -> SparseAdjacency {
    assert_eq!(logits.dim(), (adj.edge_count(), 1), "one logit per edge");
    if hard {
        adj.filter_edges(|e| {
            let pi = 1.0 / (1.0 + (-logits[[e as usize, 0]]).exp());
            pi >= cfg.edge_threshold
        })
    } else {
        let per_edge: Vec<f64> = (0..adj.edge_count())
            .map(|e| relaxed_weight(logits[[e, 0]], rng.gen::<f64>(), cfg.temperature))
            .collect();
        let scale: Vec<f64> = adj
            .entry_edges()
            .iter()
            .map(|&e| per_edge[e as usize])
            .collect();
        adj.with_entry_scale(&scale)
    }
}

/// Mean-pooled Gaussian over a side's views: the pooled d-vector is split
/// into halves, the first half is μ and the second maps through
/// softplus (+1e-6 floor) to the standard deviation η.
pub fn pooled_distribution(tape: &mut Tape<'_>, views: [Var; 3]) -> (Var, Var) {
    let pooled = tape.mean_pool_rows(&views);
    let (mu, eta_raw) = tape.split_cols_halves(pooled);
    let sp = tape.softplus(eta_raw);
    let eta = tape.affine(sp, 1.0, 1e-6);
    (mu, eta)
}

/// KL(𝒩(μ, diag(η²)) ‖ 𝒩(0, I)) summed over dimensions, averaged over
/// rows: mean_i Σ_k ½(μ² + η² − 1 − 2 ln η).
pub fn gaussian_kl(tape: &mut Tape<'_>, mu: Var, eta: Var) -> Var {
    let rows = tape.value(mu).nrows();
    let mu2 = tape.mul(mu, mu);
    let eta2 = tape.mul(eta, eta);
    let sum = tape.add(mu2, eta2);
    let half = tape.scale(sum, 0.5);
    let shifted = tape.affine(half, 1.0, -0.5);
    let ln_eta = tape.log(eta);
    let per_element = tape.sub(shifted, ln_eta);
    let total = tape.sum_all(per_element);
    tape.scale(total, 1.0 / rows as f64)
}

/// Supervision rows for the bottleneck likelihood: one row triple per
/// ranking triplet, already gathered from the appropriate embeddings.
pub struct TripletRows {
    pub anchors: Var,
    pub positives: Var,
    pub negatives: Var,
}

/// Snapshot of the pooled distribution, for inspection and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct IBDistribution {
    pub mu: Dense,
    pub eta: Dense,
}

impl IBDistribution {
    /// η must be strictly positive everywhere.
    pub fn validate(&self) -> Result<()> {
        if self.eta.iter().all(|&v| v > 0.0) {
            Ok(())
        } else {
            Err(Error::Config("η must be strictly positive".to_string()))
        }
    }
}

/// Bottleneck loss for one side: expected negative log ranking likelihood
/// on the S-enhanced embeddings plus β times the pooled-Gaussian KL.
///
/// `views` is (S¹, S², S_combined) for the side; the likelihood scores
/// σ(aᵀp − aᵀn) over the pre-gathered triplet rows.
pub fn ib_loss(tape: &mut Tape<'_>, views: [Var; 3], truth: &TripletRows, beta: f64) -> Var {
    assert!(
        tape.value(truth.anchors).nrows() > 0,
        "bottleneck likelihood needs a non-empty batch"
    );
    let pos = tape.row_dot(truth.anchors, truth.positives);
    let neg = tape.row_dot(truth.anchors, truth.negatives);
    let diff = tape.sub(pos, neg);
    let ls = tape.log_sigmoid(diff);
    let nll = {
        let mean = tape.mean_all(ls);
        tape.scale(mean, -1.0)
    };
    if beta == 0.0 {
        return nll;
    }
    let (mu, eta) = pooled_distribution(tape, views);
    let kl = gaussian_kl(tape, mu, eta);
    let weighted = tape.scale(kl, beta);
    tape.add(nll, weighted)
}

/// A trained view's retention decisions around one node.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeight {
    pub neighbor: u32,
    pub pi: f64,
    pub kept: bool,
}

/// All structural neighbors of `node` with their keep-probabilities and
/// threshold verdicts, in ascending neighbor order.
pub fn export_edge_weights(
    sub: &MetaPathSubgraph,
    logits: &Dense,
    edge_threshold: f64,
    node: u32,
) -> Result<Vec<EdgeWeight>> {
    if node as usize >= sub.n() {
        return Err(Error::NodeOutOfRange {
            node: node as usize,
            size: sub.n(),
        });
    }
    assert_eq!(logits.dim(), (sub.edge_count(), 1), "one logit per edge");
    let mut out: Vec<EdgeWeight> = sub
        .neighbors(node)
        .into_iter()
        .map(|(neighbor, e)| {
            let pi = 1.0 / (1.0 + (-logits[[e as usize, 0]]).exp());
            EdgeWeight {
                neighbor,
                pi,
                kept: pi >= edge_threshold,
            }
        })
        .collect();
    out.sort_by_key(|w| w.neighbor);
    Ok(out)
}
