//! Run configuration, ablation variants, and the config hash that guards
//! checkpoints.

use crate::error::{Error, Result};
use crate::model::{BAEConfig, DCLConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::str::FromStr;

/// Every knob of one training run. Mirrors the JSON config file one to one;
/// unknown keys are rejected so sweep typos fail loudly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Root of every random stream in the run.
    pub seed: u64,
    /// Embedding width d; must be even (the bottleneck splits it in half).
    pub embedding_dim: usize,
    /// Interaction-graph propagation depth L.
    pub main_layers: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Upper bound on epochs; early stopping may end the run sooner.
    pub epochs: usize,
    /// λ2 on ‖Θ‖².
    pub l2_weight: f64,
    /// λ1 on the two bottleneck losses.
    pub ib_weight: f64,
    /// Fraction of each user's training items held out for early stopping.
    pub val_ratio: f64,
    /// Validate every this many epochs.
    pub eval_every: usize,
    /// Stop after this many validations without improvement.
    pub patience: usize,
    pub dcl: DCLConfig,
    pub bae: BAEConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            embedding_dim: 64,
            main_layers: 2,
            learning_rate: 0.001,
            batch_size: 4096,
            epochs: 200,
            l2_weight: 1e-4,
            ib_weight: 0.1,
            val_ratio: 0.1,
            eval_every: 5,
            patience: 20,
            dcl: DCLConfig::default(),
            bae: BAEConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || !self.embedding_dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "embedding_dim {} must be even and positive",
                self.embedding_dim
            )));
        }
        if self.learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "learning_rate {} must be ≥ 0",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be ≥ 1".to_string()));
        }
        if self.l2_weight < 0.0 || self.ib_weight < 0.0 {
            return Err(Error::Config("loss weights must be ≥ 0".to_string()));
        }
        if !(0.0..1.0).contains(&self.val_ratio) {
            return Err(Error::Config(format!(
                "val_ratio {} outside [0, 1)",
                self.val_ratio
            )));
        }
        if self.eval_every == 0 || self.patience == 0 {
            return Err(Error::Config(
                "eval_every and patience must be ≥ 1".to_string(),
            ));
        }
        self.dcl.validate()?;
        self.bae.validate()?;
        Ok(())
    }
}

/// Which components of the model a run trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Everything on.
    Full,
    /// Both contrastive terms off (λ_ICL = λ_IICL = 0).
    WoDcl,
    /// Masked autoencoding replaced by plain propagation over the
    /// subgraphs (no masks, all edges kept, no bottleneck loss).
    WoBae,
    /// Bottleneck loss off and retention fixed (λ1 = 0, π ≡ 1); masking
    /// stays on.
    WoIb,
    /// View-view contrast off (λ_ICL = 0).
    WoIcl,
    /// Interaction-view contrast off (λ_IICL = 0).
    WoIicl,
    /// Interaction-graph model only: no subgraphs, no auxiliary losses.
    Baseline,
}

/// The six ablation rows, full model first.
pub const ABLATION_VARIANTS: [Variant; 6] = [
    Variant::Full,
    Variant::WoDcl,
    Variant::WoBae,
    Variant::WoIb,
    Variant::WoIcl,
    Variant::WoIicl,
];

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WoDcl => "wo_dcl",
            Variant::WoBae => "wo_bae",
            Variant::WoIb => "wo_ib",
            Variant::WoIcl => "wo_icl",
            Variant::WoIicl => "wo_iicl",
            Variant::Baseline => "baseline",
        }
    }

    /// Whether this variant builds meta-path views at all.
    pub fn uses_subgraphs(&self) -> bool {
        !matches!(self, Variant::Baseline)
    }

    /// The config this variant actually trains with: the requested config
    /// with the ablated weights forced to zero (and masking disabled where
    /// the autoencoder itself is ablated).
    pub fn effective(&self, cfg: &TrainConfig) -> TrainConfig {
        let mut out = cfg.clone();
        match self {
            Variant::Full => {}
            Variant::WoDcl => {
                out.dcl.lambda_icl = 0.0;
                out.dcl.lambda_iicl = 0.0;
            }
            Variant::WoBae => {
                out.ib_weight = 0.0;
                out.bae.mask_ratio = 0.0;
            }
            Variant::WoIb => {
                out.ib_weight = 0.0;
            }
            Variant::WoIcl => {
                out.dcl.lambda_icl = 0.0;
            }
            Variant::WoIicl => {
                out.dcl.lambda_iicl = 0.0;
            }
            Variant::Baseline => {
                out.ib_weight = 0.0;
                out.bae.mask_ratio = 0.0;
                out.dcl.lambda_icl = 0.0;
                out.dcl.lambda_iicl = 0.0;
            }
        }
        out
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "wo_dcl" => Ok(Variant::WoDcl),
            "wo_bae" => Ok(Variant::WoBae),
            "wo_ib" => Ok(Variant::WoIb),
            "wo_icl" => Ok(Variant::WoIcl),
            "wo_iicl" => Ok(Variant::WoIicl),
            "baseline" => Ok(Variant::Baseline),
            other => Err(Error::Config(format!(
                "unknown variant `{other}` (expected full, wo_dcl, wo_bae, wo_ib, wo_icl, wo_iicl, or baseline)"
            ))),
        }
    }
}

/// 64-bit digest of (effective config, variant, dataset fingerprint): the
/// checkpoint compatibility key. Schedule fields (`epochs`, `eval_every`,
/// `patience`, `val_ratio`) are excluded — extending a run or changing its
/// validation cadence is a legitimate resume, and the data actually trained
/// on is already covered by the dataset fingerprint.
pub fn config_hash(cfg: &TrainConfig, variant: Variant, dataset_fingerprint: &str) -> u64 {
    let mut cfg = cfg.clone();
    cfg.epochs = 0;
    cfg.eval_every = 1;
    cfg.patience = 1;
    cfg.val_ratio = 0.0;
    let json = serde_json::to_string(&cfg).expect("config serializes");
    let mut h = Sha256::new();
    h.update(json.as_bytes());
    h.update(b"\n");
    h.update(variant.name().as_bytes());
    h.update(b"\n");
    h.update(dataset_fingerprint.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}
