//! The training loop: triplet sampling, the combined objective, Adam
//! updates, loss telemetry, validation-based early stopping, and exact
//! checkpoint resume.
//!
//! Per batch the trainer runs interaction-graph propagation plus the four
//! masked-autoencoder views on one gradient tape, assembles the weighted
//! objective (ranking + bottleneck + two contrastive terms + L2) in a fixed
//! order, and applies one Adam step. All randomness comes from named
//! streams keyed by (seed, purpose, view, epoch), so a resumed run replays
//! the exact batches and draws the original would have seen.

mod adam;
mod checkpoint;
mod config;
mod sampler;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, MAGIC, VERSION};
pub use config::{config_hash, TrainConfig, Variant, ABLATION_VARIANTS};
pub use sampler::{sample_bpr_batch, BPRBatch};

use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalInputs};
use crate::graph::{
    bipartite_adjacency, subgraph_adjacency, InteractionMatrix, ModelSubgraphs, SparseAdjacency,
};
use crate::model::{
    bae_forward, ib_loss, icl_loss, iicl_loss, propagate_main, propagate_main_t, sample_edges,
    BAEDraws, ContrastBatch, EdgeMode, ModelParams, TripletRows,
};
use crate::rng::{stream, stream_n, ChaCha12Rng};
use crate::tensor::{Dense, Tape, Var};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::Path;

/// Ranking loss: mean −ln σ(aᵀp − aᵀn) over row-aligned triplets.
pub fn bpr_loss(tape: &mut Tape<'_>, anchors: Var, positives: Var, negatives: Var) -> Var {
    let pos = tape.row_dot(anchors, positives);
    let neg = tape.row_dot(anchors, negatives);
    let diff = tape.sub(pos, neg);
    let ls = tape.log_sigmoid(diff);
    let mean = tape.mean_all(ls);
    tape.scale(mean, -1.0)
}

/// Normalized operators for the four meta-path views, in parameter order
/// (user view 1, user view 2, item view 1, item view 2).
#[derive(Debug, Clone)]
pub struct ViewGraphs {
    pub user: [SparseAdjacency; 2],
    pub item: [SparseAdjacency; 2],
}

impl ViewGraphs {
    pub fn build(subs: &ModelSubgraphs) -> ViewGraphs {
        ViewGraphs {
            user: [
                subgraph_adjacency(&subs.user[0]),
                subgraph_adjacency(&subs.user[1]),
            ],
            item: [
                subgraph_adjacency(&subs.item[0]),
                subgraph_adjacency(&subs.item[1]),
            ],
        }
    }

    fn all(&self) -> [&SparseAdjacency; 4] {
        [&self.user[0], &self.user[1], &self.item[0], &self.item[1]]
    }
}

/// Carve the validation fold out of `train`, returning the core matrix the
/// model trains on plus the held-out validation pairs.
pub fn carve_validation_matrix(
    train: &InteractionMatrix,
    ratio: f64,
    seed: u64,
) -> Result<(InteractionMatrix, Vec<(u32, u32)>)> {
    let (core, val) = crate::graph::carve_validation(train.pairs(), ratio, seed);
    let core = InteractionMatrix::new(train.users(), train.items(), core)?;
    Ok((core, val))
}

/// Stable identifier for a training interaction set; folded into the
/// checkpoint compatibility key.
pub fn dataset_fingerprint(inter: &InteractionMatrix) -> String {
    let mut h = Sha256::new();
    h.update((inter.users() as u64).to_le_bytes());
    h.update((inter.items() as u64).to_le_bytes());
    for &(u, i) in inter.pairs() {
        h.update(u.to_le_bytes());
        h.update(i.to_le_bytes());
    }
    let digest = h.finalize();
    let head = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    format!("{}x{}:{head:016x}", inter.users(), inter.items())
}

/// Weighted per-epoch mean loss contributions, in telemetry column order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpochRow {
    pub bpr: f64,
    pub ib: f64,
    pub icl: f64,
    pub iicl: f64,
    pub l2: f64,
}

impl EpochRow {
    /// The total column: the five contributions summed in column order.
    pub fn total(&self) -> f64 {
        self.bpr + self.ib + self.icl + self.iicl + self.l2
    }
}

/// Header of `train_log.csv`.
pub const LOG_HEADER: &str = "epoch,loss_total,loss_bpr,loss_ib,loss_icl,loss_iicl,loss_l2";

fn log_line(epoch: u32, row: &EpochRow) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        epoch,
        row.total(),
        row.bpr,
        row.ib,
        row.icl,
        row.iicl,
        row.l2
    )
}

/// What a completed (or early-stopped) run reports back.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub epochs_completed: u32,
    pub best_val_recall: Option<f64>,
    pub best_epoch: Option<u32>,
    pub stopped_early: bool,
}

struct BatchTerms {
    bpr: f64,
    ib: f64,
    icl: f64,
    iicl: f64,
    l2: f64,
    total: f64,
    grads: Vec<Dense>,
}

/// One forward/backward pass. Loss terms with zero weight are not built at
/// all, so disabling a component leaves no trace in the objective; the L2
/// term always covers all seven parameter leaves.
fn batch_step(
    cfg: &TrainConfig,
    adj_main: &SparseAdjacency,
    views: Option<&ViewGraphs>,
    params: &ModelParams,
    batch: &BPRBatch,
    contrast: &ContrastBatch,
    draws: &[BAEDraws],
) -> BatchTerms {
    let mut tape = Tape::new();
    let u_leaf = tape.leaf(params.table.users.clone());
    let i_leaf = tape.leaf(params.table.items.clone());
    let token = tape.leaf(params.table.mask_token.clone());
    let logit_leaves: [Var; 4] = std::array::from_fn(|k| tape.leaf(params.edge_logits[k].clone()));

    let (eu, ei) = propagate_main_t(&mut tape, adj_main, u_leaf, i_leaf, cfg.main_layers);

    let mut d_u = eu;
    let mut d_i = ei;
    let mut ib_term = None;
    let mut icl_term = None;
    let mut iicl_term = None;

    if let Some(v) = views {
        let adjs = v.all();
        let inputs = [u_leaf, u_leaf, i_leaf, i_leaf];
        let relaxed = cfg.ib_weight > 0.0;
        let mut outs = Vec::with_capacity(4);
        for k in 0..4 {
            let mode = if relaxed {
                EdgeMode::Relaxed
            } else {
                EdgeMode::Hard(adjs[k])
            };
            outs.push(bae_forward(
                &mut tape,
                adjs[k],
                inputs[k],
                token,
                logit_leaves[k],
                &draws[k],
                &cfg.bae,
                mode,
            ));
        }
        let (u1, u2, i1, i2) = (&outs[0], &outs[1], &outs[2], &outs[3]);

        let zu1 = tape.add(eu, u1.decoder_emb);
        let zu2 = tape.add(eu, u2.decoder_emb);
        let zi1 = tape.add(ei, i1.decoder_emb);
        let zi2 = tape.add(ei, i2.decoder_emb);
        d_u = tape.add(zu1, u2.decoder_emb);
        d_i = tape.add(zi1, i2.decoder_emb);

        if cfg.ib_weight > 0.0 {
            let su_part = tape.add(eu, u1.s);
            let s_comb_u = tape.add(su_part, u2.s);
            let si_part = tape.add(ei, i1.s);
            let s_comb_i = tape.add(si_part, i2.s);

            let user_truth = TripletRows {
                anchors: tape.gather_rows(s_comb_u, &batch.users),
                positives: tape.gather_rows(d_i, &batch.positives),
                negatives: tape.gather_rows(d_i, &batch.negatives),
            };
            let uib = ib_loss(&mut tape, [u1.s, u2.s, s_comb_u], &user_truth, cfg.bae.beta);

            let item_truth = TripletRows {
                anchors: tape.gather_rows(d_u, &batch.users),
                positives: tape.gather_rows(s_comb_i, &batch.positives),
                negatives: tape.gather_rows(s_comb_i, &batch.negatives),
            };
            let iib = ib_loss(&mut tape, [i1.s, i2.s, s_comb_i], &item_truth, cfg.bae.beta);

            let both = tape.add(uib, iib);
            ib_term = Some(tape.scale(both, cfg.ib_weight));
        }
        if cfg.dcl.lambda_icl > 0.0 {
            let raw = icl_loss(
                &mut tape,
                (u1.decoder_emb, u2.decoder_emb),
                (i1.decoder_emb, i2.decoder_emb),
                contrast,
                &cfg.dcl,
            );
            icl_term = Some(tape.scale(raw, cfg.dcl.lambda_icl));
        }
        if cfg.dcl.lambda_iicl > 0.0 {
            let raw = iicl_loss(&mut tape, (zu1, zu2), (zi1, zi2), contrast, &cfg.dcl);
            iicl_term = Some(tape.scale(raw, cfg.dcl.lambda_iicl));
        }
    }

    let anchors = tape.gather_rows(d_u, &batch.users);
    let positives = tape.gather_rows(d_i, &batch.positives);
    let negatives = tape.gather_rows(d_i, &batch.negatives);
    let bpr = bpr_loss(&mut tape, anchors, positives, negatives);

    let leaves = [
        u_leaf,
        i_leaf,
        token,
        logit_leaves[0],
        logit_leaves[1],
        logit_leaves[2],
        logit_leaves[3],
    ];
    let mut l2_sum = None;
    for &leaf in &leaves {
        let sq = tape.mul(leaf, leaf);
        let s = tape.sum_all(sq);
        l2_sum = Some(match l2_sum {
            Some(acc) => tape.add(acc, s),
            None => s,
        });
    }
    let l2_term = tape.scale(l2_sum.expect("seven leaves"), cfg.l2_weight);

    let mut total = bpr;
    for term in [ib_term, icl_term, iicl_term].into_iter().flatten() {
        total = tape.add(total, term);
    }
    total = tape.add(total, l2_term);

    let scalar = |t: &Tape, v: Var| t.value(v)[(0, 0)];
    let opt_scalar = |t: &Tape, v: Option<Var>| v.map(|v| scalar(t, v)).unwrap_or(0.0);
    let terms = (
        scalar(&tape, bpr),
        opt_scalar(&tape, ib_term),
        opt_scalar(&tape, icl_term),
        opt_scalar(&tape, iicl_term),
        scalar(&tape, l2_term),
        scalar(&tape, total),
    );

    let mut grads = tape.backward(total);
    let grad_list: Vec<Dense> = leaves
        .iter()
        .map(|&v| grads.take_or_zeros(&tape, v))
        .collect();

    BatchTerms {
        bpr: terms.0,
        ib: terms.1,
        icl: terms.2,
        iicl: terms.3,
        l2: terms.4,
        total: terms.5,
        grads: grad_list,
    }
}

/// Owns one run's state: effective config, graph operators, parameters,
/// and optimizer.
pub struct Trainer<'a> {
    cfg: TrainConfig,
    variant: Variant,
    inter: &'a InteractionMatrix,
    adj_main: SparseAdjacency,
    views: Option<ViewGraphs>,
    params: ModelParams,
    adam: Adam,
    completed_epochs: u32,
    run_hash: u64,
}

impl<'a> Trainer<'a> {
    /// Build a run. `subs` supplies the meta-path views and is required for
    /// every variant except the interaction-graph baseline.
    pub fn new(
        cfg: &TrainConfig,
        variant: Variant,
        inter: &'a InteractionMatrix,
        subs: Option<&ModelSubgraphs>,
        fingerprint: &str,
    ) -> Result<Trainer<'a>> {
        cfg.validate()?;
        let cfg = variant.effective(cfg);
        if inter.pairs().is_empty() {
            return Err(Error::Config(
                "training graph has no interactions".to_string(),
            ));
        }
        let (m, n) = (inter.users(), inter.items());
        let (views, params) = if variant.uses_subgraphs() {
            let subs = subs.ok_or_else(|| {
                Error::Config(format!("variant `{variant}` needs meta-path views"))
            })?;
            for (sub, expect, side) in [
                (&subs.user[0], m, "user"),
                (&subs.user[1], m, "user"),
                (&subs.item[0], n, "item"),
                (&subs.item[1], n, "item"),
            ] {
                if sub.n() != expect {
                    return Err(Error::Config(format!(
                        "{side}-side view `{}` covers {} nodes, expected {expect}",
                        sub.name(),
                        sub.n()
                    )));
                }
            }
            (
                Some(ViewGraphs::build(subs)),
                ModelParams::init(m, n, cfg.embedding_dim, subs, cfg.seed),
            )
        } else {
            (None, ModelParams::init_plain(m, n, cfg.embedding_dim, cfg.seed))
        };
        let shapes: Vec<(usize, usize)> = params.named().iter().map(|(_, p)| p.dim()).collect();
        let adam = Adam::new(cfg.learning_rate, &shapes);
        let run_hash = config_hash(&cfg, variant, fingerprint);
        Ok(Trainer {
            cfg,
            variant,
            inter,
            adj_main: bipartite_adjacency(inter),
            views,
            params,
            adam,
            completed_epochs: 0,
            run_hash,
        })
    }

    /// The effective (variant-adjusted) config this run trains with.
    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn completed_epochs(&self) -> u32 {
        self.completed_epochs
    }

    /// The checkpoint compatibility key of this run.
    pub fn run_hash(&self) -> u64 {
        self.run_hash
    }

    /// One pass over the training pairs: `ceil(pairs / batch_size)` Adam
    /// steps. Epochs are numbered from 1; the epoch number keys the random
    /// streams, so an epoch's batches do not depend on how the process got
    /// there.
    pub fn train_epoch(&mut self, epoch: u32) -> Result<EpochRow> {
        let n_batches = self
            .inter
            .pairs()
            .len()
            .div_ceil(self.cfg.batch_size)
            .max(1);
        let mut neg_rng = stream_n(self.cfg.seed, "negatives", &[epoch as u64]);
        let mut mask_rngs: Vec<ChaCha12Rng> = (0..4)
            .map(|k| stream_n(self.cfg.seed, "mask", &[k, epoch as u64]))
            .collect();
        let mut eps_rngs: Vec<ChaCha12Rng> = (0..4)
            .map(|k| stream_n(self.cfg.seed, "concrete-eps", &[k, epoch as u64]))
            .collect();

        let mut acc = EpochRow::default();
        for _ in 0..n_batches {
            let batch = sample_bpr_batch(self.inter, self.cfg.batch_size, &mut neg_rng)?;
            let contrast = ContrastBatch::from_triplets(&batch.users, &batch.positives);
            let draws: Vec<BAEDraws> = match &self.views {
                Some(v) => {
                    let adjs = v.all();
                    (0..4)
                        .map(|k| {
                            BAEDraws::sample(
                                adjs[k].n(),
                                adjs[k].edge_count(),
                                self.cfg.bae.mask_ratio,
                                &mut mask_rngs[k],
                                &mut eps_rngs[k],
                            )
                        })
                        .collect()
                }
                None => Vec::new(),
            };

            let terms = batch_step(
                &self.cfg,
                &self.adj_main,
                self.views.as_ref(),
                &self.params,
                &batch,
                &contrast,
                &draws,
            );
            if !terms.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch as usize,
                    components: format!(
                        "bpr={} ib={} icl={} iicl={} l2={}",
                        terms.bpr, terms.ib, terms.icl, terms.iicl, terms.l2
                    ),
                });
            }
            let mut named = self.params.named_mut();
            let mut refs: Vec<&mut Dense> = named.iter_mut().map(|(_, p)| &mut **p).collect();
            self.adam.step(&mut refs, &terms.grads);

            acc.bpr += terms.bpr;
            acc.ib += terms.ib;
            acc.icl += terms.icl;
            acc.iicl += terms.iicl;
            acc.l2 += terms.l2;
        }
        let nb = n_batches as f64;
        Ok(EpochRow {
            bpr: acc.bpr / nb,
            ib: acc.ib / nb,
            icl: acc.icl / nb,
            iicl: acc.iicl / nb,
            l2: acc.l2 / nb,
        })
    }

    /// Train until the epoch budget or early stopping, appending one
    /// telemetry row per epoch to `train_log.csv` in `out_dir`. When `val`
    /// holds held-out pairs, every `eval_every`-th epoch scores Recall@20
    /// on them; the best state is checkpointed to `best.ckpt` and the run
    /// stops after `patience` validations without improvement. The current
    /// state is checkpointed to `latest.ckpt` at each validation and at
    /// the end.
    pub fn run(&mut self, out_dir: &Path, val: Option<&[(u32, u32)]>) -> Result<TrainSummary> {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let log_path = out_dir.join("train_log.csv");
        let mut log = self.open_log(&log_path)?;

        let mut summary = TrainSummary {
            epochs_completed: self.completed_epochs,
            best_val_recall: None,
            best_epoch: None,
            stopped_early: false,
        };
        let mut bad_rounds = 0usize;
        let held = val.filter(|v| !v.is_empty());

        let start = self.completed_epochs + 1;
        for epoch in start..=self.cfg.epochs as u32 {
            let row = self.train_epoch(epoch)?;
            writeln!(log, "{}", log_line(epoch, &row)).map_err(|e| Error::io(&log_path, e))?;
            log.flush().map_err(|e| Error::io(&log_path, e))?;
            self.completed_epochs = epoch;
            summary.epochs_completed = epoch;

            if let Some(held) = held {
                if epoch % self.cfg.eval_every as u32 == 0 {
                    let (user_emb, item_emb) = self.inference_embeddings();
                    let report = evaluate(
                        &EvalInputs {
                            user_emb: &user_emb,
                            item_emb: &item_emb,
                            observed: self.inter,
                            test: held,
                        },
                        &[20],
                        1,
                    )?;
                    let recall = report.recall(20);
                    let improved = summary.best_val_recall.is_none_or(|b| recall > b);
                    if improved {
                        summary.best_val_recall = Some(recall);
                        summary.best_epoch = Some(epoch);
                        bad_rounds = 0;
                        self.to_checkpoint().save(&out_dir.join("best.ckpt"))?;
                    } else {
                        bad_rounds += 1;
                    }
                    self.to_checkpoint().save(&out_dir.join("latest.ckpt"))?;
                    if bad_rounds >= self.cfg.patience {
                        summary.stopped_early = true;
                        break;
                    }
                }
            }
        }
        self.to_checkpoint().save(&out_dir.join("latest.ckpt"))?;
        Ok(summary)
    }

    /// Fresh runs start a new log; resumed runs keep the rows for epochs
    /// already completed and drop anything later (those epochs are about to
    /// be retrained).
    fn open_log(&self, path: &Path) -> Result<fs::File> {
        let io_err = |e| Error::io(path, e);
        if self.completed_epochs == 0 {
            let mut f = fs::File::create(path).map_err(io_err)?;
            writeln!(f, "{LOG_HEADER}").map_err(io_err)?;
            return Ok(f);
        }
        let mut keep = vec![LOG_HEADER.to_string()];
        if path.exists() {
            let text = fs::read_to_string(path).map_err(io_err)?;
            for line in text.lines().skip(1) {
                if line.trim().is_empty() {
                    continue;
                }
                let epoch: u32 = line
                    .split(',')
                    .next()
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| Error::Config(format!("malformed train log line `{line}`")))?;
                if epoch <= self.completed_epochs {
                    keep.push(line.to_string());
                }
            }
        }
        let mut f = fs::File::create(path).map_err(io_err)?;
        for line in &keep {
            writeln!(f, "{line}").map_err(io_err)?;
        }
        Ok(f)
    }

    /// Deterministic embeddings for ranking: no masks, ε pinned to ½, and
    /// where edge retention is learned the operator keeps exactly the edges
    /// whose keep-probability reaches the threshold (renormalized).
    pub fn inference_embeddings(&self) -> (Dense, Dense) {
        let Some(views) = &self.views else {
            let out = propagate_main(&self.adj_main, &self.params.table, self.cfg.main_layers);
            return (out.user_emb, out.item_emb);
        };
        let originals = views.all();
        let hard: Vec<Option<SparseAdjacency>> = if self.cfg.ib_weight > 0.0 {
            let mut rng = stream(self.cfg.seed, "inference");
            (0..4)
                .map(|k| {
                    Some(sample_edges(
                        originals[k],
                        &self.params.edge_logits[k],
                        &self.cfg.bae,
                        &mut rng,
                        true,
                    ))
                })
                .collect()
        } else {
            (0..4).map(|_| None).collect()
        };
        let draws: Vec<BAEDraws> = (0..4)
            .map(|k| BAEDraws::inference(originals[k].n(), originals[k].edge_count()))
            .collect();

        let mut tape = Tape::new();
        let u_leaf = tape.leaf(self.params.table.users.clone());
        let i_leaf = tape.leaf(self.params.table.items.clone());
        let token = tape.leaf(self.params.table.mask_token.clone());
        let (eu, ei) = propagate_main_t(&mut tape, &self.adj_main, u_leaf, i_leaf, self.cfg.main_layers);
        let inputs = [u_leaf, u_leaf, i_leaf, i_leaf];
        let mut dec = Vec::with_capacity(4);
        for k in 0..4 {
            let logits = tape.leaf(self.params.edge_logits[k].clone());
            let op = hard[k].as_ref().unwrap_or(originals[k]);
            let out = bae_forward(
                &mut tape,
                op,
                inputs[k],
                token,
                logits,
                &draws[k],
                &self.cfg.bae,
                EdgeMode::Hard(op),
            );
            dec.push(out.decoder_emb);
        }
        let du_part = tape.add(eu, dec[0]);
        let d_u = tape.add(du_part, dec[1]);
        let di_part = tape.add(ei, dec[2]);
        let d_i = tape.add(di_part, dec[3]);
        (tape.value(d_u).clone(), tape.value(d_i).clone())
    }

    /// Snapshot parameters, both optimizer moments, the step counter, and
    /// progress into the checkpoint layout.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut matrices = Vec::with_capacity(3 * 7 + 1);
        for (name, p) in self.params.named() {
            matrices.push((name.to_string(), p.clone()));
        }
        let (m, v) = self.adam.moments();
        for (i, (name, _)) in self.params.named().iter().enumerate() {
            matrices.push((format!("m.{name}"), m[i].clone()));
        }
        for (i, (name, _)) in self.params.named().iter().enumerate() {
            matrices.push((format!("v.{name}"), v[i].clone()));
        }
        matrices.push((
            "adam_t".to_string(),
            Dense::from_elem((1, 1), self.adam.t() as f64),
        ));
        Checkpoint {
            config_hash: self.run_hash,
            epoch: self.completed_epochs,
            matrices,
        }
    }

    /// Restore a run from a checkpoint file. The checkpoint must carry this
    /// run's compatibility key — same effective config, variant, and
    /// dataset — or it is rejected.
    pub fn resume(&mut self, path: &Path) -> Result<()> {
        let ckpt = Checkpoint::load(path)?;
        if ckpt.config_hash != self.run_hash {
            return Err(Error::Checkpoint {
                path: path.to_path_buf(),
                reason: format!(
                    "config hash {:#018x} does not match this run's {:#018x}",
                    ckpt.config_hash, self.run_hash
                ),
            });
        }
        self.params.assign(&ckpt.matrices)?;
        let missing = |name: String| Error::Checkpoint {
            path: path.to_path_buf(),
            reason: format!("missing matrix `{name}`"),
        };
        let mut m = Vec::with_capacity(7);
        let mut v = Vec::with_capacity(7);
        for (name, p) in self.params.named() {
            for (prefix, out) in [("m", &mut m), ("v", &mut v)] {
                let full = format!("{prefix}.{name}");
                let got = ckpt.matrix(&full).ok_or_else(|| missing(full.clone()))?;
                if got.dim() != p.dim() {
                    return Err(Error::Checkpoint {
                        path: path.to_path_buf(),
                        reason: format!(
                            "matrix `{full}` has shape {:?}, expected {:?}",
                            got.dim(),
                            p.dim()
                        ),
                    });
                }
                out.push(got.clone());
            }
        }
        let t = ckpt
            .matrix("adam_t")
            .ok_or_else(|| missing("adam_t".to_string()))?[(0, 0)] as u64;
        self.adam.restore(m, v, t);
        self.completed_epochs = ckpt.epoch;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{
        carve_validation, select_model_subgraphs, HeteroGraph, MetaPathSpec, Relation,
    };
    use crate::rng::stream;
    use crate::tensor::dense;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use std::collections::BTreeSet;

    /// Small three-type graph: users rate items, items carry one tag each,
    /// users follow each other.
    fn fixture(users: u32, items: u32, tags: u32, seed: u64) -> (InteractionMatrix, ModelSubgraphs) {
        let mut rng = stream(seed, "fixture");
        let mut rates = Vec::new();
        for u in 0..users {
            let want = rng.gen_range(3..=6).min(items as usize);
            let mut got = BTreeSet::new();
            while got.len() < want {
                got.insert(rng.gen_range(0..items));
            }
            rates.extend(got.into_iter().map(|i| (u, i)));
        }
        let tagged: Vec<(u32, u32)> = (0..items).map(|i| (i, rng.gen_range(0..tags))).collect();
        let mut follows = Vec::new();
        for u in 0..users {
            let v = rng.gen_range(0..users);
            if v != u {
                follows.push((u, v));
            }
        }
        let g = HeteroGraph::new(
            vec![
                ("user".to_string(), users as usize),
                ("item".to_string(), items as usize),
                ("tag".to_string(), tags as usize),
            ],
            vec![
                Relation {
                    name: "rates".to_string(),
                    src: "user".to_string(),
                    dst: "item".to_string(),
                    edges: rates,
                },
                Relation {
                    name: "tagged".to_string(),
                    src: "item".to_string(),
                    dst: "tag".to_string(),
                    edges: tagged,
                },
                Relation {
                    name: "follows".to_string(),
                    src: "user".to_string(),
                    dst: "user".to_string(),
                    edges: follows,
                },
            ],
        )
        .unwrap();
        let inter = InteractionMatrix::from_graph(&g, "rates", "user", "item").unwrap();
        let user_specs = vec![
            MetaPathSpec::from_relation_chain(&g, &["rates", "~rates"]).unwrap(),
            MetaPathSpec::from_relation_chain(&g, &["follows"]).unwrap(),
        ];
        let item_specs = vec![
            MetaPathSpec::from_relation_chain(&g, &["~rates", "rates"]).unwrap(),
            MetaPathSpec::from_relation_chain(&g, &["tagged", "~tagged"]).unwrap(),
        ];
        let subs = select_model_subgraphs(&g, &user_specs, &item_specs, "user", "item").unwrap();
        (inter, subs)
    }

    fn small_cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            embedding_dim: 8,
            learning_rate: 0.01,
            batch_size: 32,
            epochs: 3,
            eval_every: 1,
            patience: 2,
            ..TrainConfig::default()
        }
    }

    fn bits_equal(a: &Dense, b: &Dense) -> bool {
        a.dim() == b.dim() && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
    }

    #[test]
    fn bpr_tie_is_ln_two() {
        let mut tape = Tape::new();
        let a = tape.leaf(dense(&[&[1.0, 0.0]]));
        let p = tape.leaf(dense(&[&[0.5, 0.5]]));
        let n = tape.leaf(dense(&[&[0.5, -0.5]]));
        let loss = bpr_loss(&mut tape, a, p, n);
        assert_abs_diff_eq!(
            tape.value(loss)[(0, 0)],
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn bpr_matches_scalar_reference_on_three_triplets() {
        let anchors = [[0.6, -0.2], [1.1, 0.4], [-0.3, 0.9]];
        let pos = [[0.5, 0.1], [-0.2, 0.8], [0.7, 0.2]];
        let neg = [[-0.1, 0.9], [0.3, 0.3], [0.4, -0.6]];
        let expected = -(0..3)
            .map(|r| {
                let dp: f64 = (0..2).map(|c| anchors[r][c] * pos[r][c]).sum();
                let dn: f64 = (0..2).map(|c| anchors[r][c] * neg[r][c]).sum();
                let x: f64 = dp - dn;
                (1.0 / (1.0 + (-x).exp())).ln()
            })
            .sum::<f64>()
            / 3.0;

        let mut tape = Tape::new();
        let a = tape.leaf(dense(&[&anchors[0], &anchors[1], &anchors[2]]));
        let p = tape.leaf(dense(&[&pos[0], &pos[1], &pos[2]]));
        let n = tape.leaf(dense(&[&neg[0], &neg[1], &neg[2]]));
        let loss = bpr_loss(&mut tape, a, p, n);
        assert_abs_diff_eq!(tape.value(loss)[(0, 0)], expected, epsilon = 1e-12);
    }

    #[test]
    fn loss_decreases_in_trailing_averages_over_fifty_epochs() {
        let (inter, subs) = fixture(20, 30, 6, 7);
        let mut cfg = small_cfg(0);
        cfg.epochs = 50;
        let mut trainer = Trainer::new(&cfg, Variant::Full, &inter, Some(&subs), "smoke").unwrap();
        let mut rows = Vec::new();
        for epoch in 1..=50 {
            rows.push(trainer.train_epoch(epoch).unwrap());
        }
        let window = 10;
        let head_total: f64 = rows[..window].iter().map(EpochRow::total).sum::<f64>() / window as f64;
        let tail_total: f64 = rows[rows.len() - window..].iter().map(EpochRow::total).sum::<f64>()
            / window as f64;
        assert!(
            tail_total < 0.95 * head_total,
            "total barely moved: {head_total} -> {tail_total}"
        );
        let head_bpr: f64 = rows[..window].iter().map(|r| r.bpr).sum::<f64>() / window as f64;
        let tail_bpr: f64 = rows[rows.len() - window..].iter().map(|r| r.bpr).sum::<f64>()
            / window as f64;
        assert!(
            tail_bpr < 0.9 * head_bpr,
            "ranking loss barely moved: {head_bpr} -> {tail_bpr}"
        );
    }

    #[test]
    fn disabling_a_component_zeroes_exactly_its_column() {
        let (inter, subs) = fixture(12, 18, 5, 3);
        let cfg = small_cfg(1);
        let run = |variant: Variant| -> EpochRow {
            let mut t = Trainer::new(&cfg, variant, &inter, Some(&subs), "cols").unwrap();
            t.train_epoch(1).unwrap()
        };

        let full = run(Variant::Full);
        assert!(full.bpr > 0.0 && full.l2 > 0.0);
        assert!(full.ib != 0.0 && full.icl != 0.0 && full.iicl != 0.0);

        let wo_ib = run(Variant::WoIb);
        assert_eq!(wo_ib.ib, 0.0);
        assert!(wo_ib.icl != 0.0 && wo_ib.iicl != 0.0);

        let wo_bae = run(Variant::WoBae);
        assert_eq!(wo_bae.ib, 0.0);
        assert!(wo_bae.icl != 0.0 && wo_bae.iicl != 0.0);

        let wo_icl = run(Variant::WoIcl);
        assert_eq!(wo_icl.icl, 0.0);
        assert!(wo_icl.ib != 0.0 && wo_icl.iicl != 0.0);

        let wo_iicl = run(Variant::WoIicl);
        assert_eq!(wo_iicl.iicl, 0.0);
        assert!(wo_iicl.ib != 0.0 && wo_iicl.icl != 0.0);

        let wo_dcl = run(Variant::WoDcl);
        assert_eq!(wo_dcl.icl, 0.0);
        assert_eq!(wo_dcl.iicl, 0.0);
        assert!(wo_dcl.ib != 0.0);

        let baseline = run(Variant::Baseline);
        assert!(baseline.bpr > 0.0);
        assert_eq!(baseline.ib, 0.0);
        assert_eq!(baseline.icl, 0.0);
        assert_eq!(baseline.iicl, 0.0);
    }

    #[test]
    fn vanishing_weights_match_plain_view_propagation_exactly() {
        let (inter, subs) = fixture(10, 14, 4, 11);
        let mut zeroed = small_cfg(5);
        zeroed.ib_weight = 0.0;
        zeroed.dcl.lambda_icl = 0.0;
        zeroed.dcl.lambda_iicl = 0.0;
        zeroed.bae.mask_ratio = 0.0;
        let mut masked = small_cfg(5);
        masked.dcl.lambda_icl = 0.0;
        masked.dcl.lambda_iicl = 0.0;

        let dir = tempfile::tempdir().unwrap();
        let run = |cfg: &TrainConfig, variant: Variant, name: &str| -> String {
            let mut t = Trainer::new(cfg, variant, &inter, Some(&subs), "traj").unwrap();
            let out = dir.path().join(name);
            t.run(&out, None).unwrap();
            fs::read_to_string(out.join("train_log.csv")).unwrap()
        };
        let log_full = run(&zeroed, Variant::Full, "full-zeroed");
        let log_wo_bae = run(&masked, Variant::WoBae, "wo-bae");
        assert_eq!(log_full, log_wo_bae);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let (inter, subs) = fixture(12, 16, 5, 2);
        let cfg = small_cfg(9);
        let dir = tempfile::tempdir().unwrap();
        let run = |name: &str| -> (String, Dense, Dense) {
            let mut t = Trainer::new(&cfg, Variant::Full, &inter, Some(&subs), "det").unwrap();
            let out = dir.path().join(name);
            t.run(&out, None).unwrap();
            let (u, i) = t.inference_embeddings();
            (
                fs::read_to_string(out.join("train_log.csv")).unwrap(),
                u,
                i,
            )
        };
        let (log_a, user_a, item_a) = run("a");
        let (log_b, user_b, item_b) = run("b");
        assert_eq!(log_a, log_b);
        assert!(bits_equal(&user_a, &user_b));
        assert!(bits_equal(&item_a, &item_b));
    }

    #[test]
    fn resume_replays_the_uninterrupted_run_exactly() {
        let (inter, subs) = fixture(14, 20, 5, 4);
        let mut cfg5 = small_cfg(3);
        cfg5.epochs = 5;
        let dir = tempfile::tempdir().unwrap();

        let mut straight = Trainer::new(&cfg5, Variant::Full, &inter, Some(&subs), "rs").unwrap();
        let out_a = dir.path().join("straight");
        straight.run(&out_a, None).unwrap();
        let (user_a, item_a) = straight.inference_embeddings();

        let mut cfg3 = cfg5.clone();
        cfg3.epochs = 3;
        let out_b = dir.path().join("resumed");
        let mut first = Trainer::new(&cfg3, Variant::Full, &inter, Some(&subs), "rs").unwrap();
        first.run(&out_b, None).unwrap();
        assert_eq!(first.completed_epochs(), 3);

        let mut second = Trainer::new(&cfg5, Variant::Full, &inter, Some(&subs), "rs").unwrap();
        second.resume(&out_b.join("latest.ckpt")).unwrap();
        assert_eq!(second.completed_epochs(), 3);
        second.run(&out_b, None).unwrap();
        let (user_b, item_b) = second.inference_embeddings();

        assert_eq!(
            fs::read_to_string(out_a.join("train_log.csv")).unwrap(),
            fs::read_to_string(out_b.join("train_log.csv")).unwrap()
        );
        assert!(bits_equal(&user_a, &user_b));
        assert!(bits_equal(&item_a, &item_b));
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_bit_identical() {
        let (inter, subs) = fixture(8, 12, 4, 6);
        let mut cfg = small_cfg(2);
        cfg.learning_rate = 0.0;
        let mut t = Trainer::new(&cfg, Variant::Full, &inter, Some(&subs), "frozen").unwrap();
        let before: Vec<Dense> = t.params().named().iter().map(|(_, p)| (*p).clone()).collect();
        for epoch in 1..=2 {
            t.train_epoch(epoch).unwrap();
        }
        for ((_, after), initial) in t.params().named().iter().zip(&before) {
            assert!(bits_equal(after, initial));
        }
    }

    #[test]
    fn validation_early_stopping_saves_best_and_stops() {
        let (inter, subs) = fixture(16, 20, 5, 8);
        let (train_pairs, val_pairs) = carve_validation(inter.pairs(), 0.2, 13);
        let train = InteractionMatrix::new(inter.users(), inter.items(), train_pairs).unwrap();
        assert!(!val_pairs.is_empty());

        let mut cfg = small_cfg(1);
        cfg.epochs = 60;
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let mut t = Trainer::new(&cfg, Variant::Full, &train, Some(&subs), "es").unwrap();
        let summary = t.run(&out, Some(&val_pairs)).unwrap();

        assert!(summary.stopped_early, "expected an early stop: {summary:?}");
        assert!(summary.epochs_completed < 60);
        assert!(out.join("best.ckpt").exists());
        assert!(out.join("latest.ckpt").exists());
        let best_epoch = summary.best_epoch.unwrap();
        assert!(best_epoch <= summary.epochs_completed);
        assert!(summary.best_val_recall.unwrap() >= 0.0);
        assert_eq!(Checkpoint::load(&out.join("best.ckpt")).unwrap().epoch, best_epoch);
    }

    #[test]
    fn exploding_loss_reports_components_and_epoch() {
        let (inter, _subs) = fixture(8, 10, 3, 5);
        let mut cfg = small_cfg(0);
        cfg.learning_rate = 1e160;
        let mut t = Trainer::new(&cfg, Variant::Baseline, &inter, None, "boom").unwrap();
        let mut seen = None;
        for epoch in 1..=4 {
            if let Err(e) = t.train_epoch(epoch) {
                seen = Some((epoch, e));
                break;
            }
        }
        let (epoch, err) = seen.expect("loss should explode");
        match err {
            Error::NonFiniteLoss {
                epoch: reported,
                components,
            } => {
                assert_eq!(reported, epoch as usize);
                assert!(components.contains("bpr="));
                assert!(components.contains("l2="));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn resume_rejects_foreign_checkpoints() {
        let (inter, subs) = fixture(8, 10, 3, 1);
        let cfg = small_cfg(0);
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("a");
        let mut a = Trainer::new(&cfg, Variant::Full, &inter, Some(&subs), "ds1").unwrap();
        a.run(&out, None).unwrap();
        let ckpt = out.join("latest.ckpt");

        let mut wider = cfg.clone();
        wider.embedding_dim = 16;
        let mut b = Trainer::new(&wider, Variant::Full, &inter, Some(&subs), "ds1").unwrap();
        assert!(matches!(
            b.resume(&ckpt).unwrap_err(),
            Error::Checkpoint { .. }
        ));

        let mut c = Trainer::new(&cfg, Variant::Full, &inter, Some(&subs), "ds2").unwrap();
        assert!(c.resume(&ckpt).is_err());

        let mut same = Trainer::new(&cfg, Variant::Full, &inter, Some(&subs), "ds1").unwrap();
        same.resume(&ckpt).unwrap();
        assert_eq!(same.completed_epochs(), 3);
    }

    #[test]
    fn baseline_trains_without_views_and_others_require_them() {
        let (inter, _subs) = fixture(8, 10, 3, 0);
        let cfg = small_cfg(4);
        let mut t = Trainer::new(&cfg, Variant::Baseline, &inter, None, "b").unwrap();
        let row = t.train_epoch(1).unwrap();
        assert!(row.bpr > 0.0);
        assert_eq!(row.ib, 0.0);
        assert_eq!(row.icl, 0.0);
        assert_eq!(row.iicl, 0.0);
        assert!(row.l2 > 0.0);

        assert!(matches!(
            Trainer::new(&cfg, Variant::Full, &inter, None, "b"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn train_log_has_header_and_exact_totals() {
        let (inter, subs) = fixture(8, 12, 4, 10);
        let mut cfg = small_cfg(6);
        cfg.epochs = 2;
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("log");
        let mut t = Trainer::new(&cfg, Variant::Full, &inter, Some(&subs), "log").unwrap();
        t.run(&out, None).unwrap();

        let text = fs::read_to_string(out.join("train_log.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], LOG_HEADER);
        assert_eq!(lines.len(), 3);
        for (i, line) in lines[1..].iter().enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells.len(), 7);
            assert_eq!(cells[0], (i + 1).to_string());
            let vals: Vec<f64> = cells[1..].iter().map(|c| c.parse().unwrap()).collect();
            let recomputed: f64 = vals[1..].iter().sum();
            assert_eq!(
                vals[0].to_bits(),
                recomputed.to_bits(),
                "total must be the component sum in column order"
            );
            for (cell, v) in cells[1..].iter().zip(&vals) {
                assert_eq!(&format!("{v}"), cell, "floats must print shortest-roundtrip");
            }
        }
    }

    #[test]
    fn inference_is_deterministic_and_ignores_mask_ratio() {
        let (inter, subs) = fixture(10, 12, 4, 12);
        let cfg = small_cfg(7);
        let mut t = Trainer::new(&cfg, Variant::Full, &inter, Some(&subs), "inf").unwrap();
        t.train_epoch(1).unwrap();
        let (u1, i1) = t.inference_embeddings();
        let (u2, i2) = t.inference_embeddings();
        assert!(bits_equal(&u1, &u2));
        assert!(bits_equal(&i1, &i2));
        assert!(u1.iter().all(|v| v.is_finite()));
        assert_eq!(u1.dim(), (10, 8));
        assert_eq!(i1.dim(), (12, 8));
    }
}
