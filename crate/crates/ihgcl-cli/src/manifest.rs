//! On-disk manifests recording what a run directory was built from.

use anyhow::{Context, Result};
use ihgcl::train::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

/// One composed meta-path view and the file its edges live in.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewEntry {
    pub name: String,
    pub node_type: String,
    pub file: String,
    pub edges: usize,
}

/// What `prepare` wrote and from which inputs; the run directory's identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub dataset_dir: String,
    /// Content hash of the source dataset directory.
    pub dataset_hash: String,
    pub meta_paths: String,
    pub interaction: String,
    pub user_type: String,
    pub item_type: String,
    pub split_seed: u64,
    pub users: usize,
    pub items: usize,
    pub train_edges: usize,
    pub test_edges: usize,
    /// Hash over dataset content, meta-paths, interaction, and split seed;
    /// two prepares agree on it iff they were built from identical inputs.
    pub content_hash: String,
    /// Exactly four views: user view 1, user view 2, item view 1, item view 2.
    pub views: Vec<ViewEntry>,
}

/// What `train` ran: the variant, resolved config, and data identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainManifest {
    pub variant: String,
    /// Hex form of the config/dataset hash embedded in checkpoints.
    pub run_hash: String,
    pub dataset_fingerprint: String,
    pub config: TrainConfig,
}

pub const RUN_MANIFEST: &str = "manifest.json";
pub const TRAIN_MANIFEST: &str = "train_manifest.json";

fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("manifest serializes");
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        load_json(&dir.join(RUN_MANIFEST))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        save_json(self, &dir.join(RUN_MANIFEST))
    }
}

impl TrainManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        load_json(&dir.join(TRAIN_MANIFEST))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        save_json(self, &dir.join(TRAIN_MANIFEST))
    }
}

/// Identity of a prepare invocation over its complete inputs.
pub fn content_hash(
    dataset_hash: &str,
    meta_paths: &str,
    interaction: &str,
    split_seed: u64,
) -> String {
    let mut h = Sha256::new();
    for part in [dataset_hash, meta_paths, interaction] {
        h.update(part.as_bytes());
        h.update(b"\n");
    }
    h.update(split_seed.to_le_bytes());
    hex(&h.finalize())
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
