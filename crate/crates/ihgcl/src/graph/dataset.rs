//! Dataset directory loading, canonical re-serialization, and splits.
//!
//! A dataset directory holds `manifest.json` plus one TSV edge file per
//! relation. The manifest schema is
//! `{"node_types": {name: count}, "relations": [{name, src, dst, file}]}`;
//! each edge file has one `src<TAB>dst` pair of 0-based indices per line,
//! UTF-8 with LF endings. The writer is canonical (sorted node types,
//! sorted edges, stable JSON layout), so save → load → save is a fixed
//! point byte for byte.

use super::{HeteroGraph, InteractionMatrix, Relation};
use crate::error::{Error, Result};
use crate::rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Ordered (source id, destination id) pairs; for interactions this reads
/// as (user, item).
pub type Pairs = Vec<(u32, u32)>;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    node_types: BTreeMap<String, usize>,
    relations: Vec<ManifestRelation>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestRelation {
    name: String,
    src: String,
    dst: String,
    file: String,
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Load and validate a dataset directory.
pub fn load_hetero_graph(dir: impl AsRef<Path>) -> Result<HeteroGraph> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.json");
    let manifest: ManifestFile =
        serde_json::from_str(&read_to_string(&manifest_path)?).map_err(|e| Error::Manifest {
            path: manifest_path.clone(),
            reason: e.to_string(),
        })?;

    let node_types: Vec<(String, usize)> = manifest.node_types.into_iter().collect();
    let count_of = |ty: &str| -> Result<usize> {
        node_types
            .iter()
            .find(|(name, _)| name == ty)
            .map(|&(_, n)| n)
            .ok_or_else(|| Error::UnknownNodeType(ty.to_string()))
    };

    let mut relations = Vec::with_capacity(manifest.relations.len());
    for rel in &manifest.relations {
        let path = dir.join(&rel.file);
        let src_n = count_of(&rel.src)?;
        let dst_n = count_of(&rel.dst)?;
        let edges = load_edge_file(&path, src_n, dst_n)?;
        relations.push(Relation {
            name: rel.name.clone(),
            src: rel.src.clone(),
            dst: rel.dst.clone(),
            edges,
        });
    }
    HeteroGraph::new(node_types, relations)
}

fn load_edge_file(path: &Path, src_n: usize, dst_n: usize) -> Result<Pairs> {
    let text = read_to_string(path)?;
    let mut edges = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (ix, line) in text.lines().enumerate() {
        let lineno = ix + 1;
        if line.is_empty() {
            continue;
        }
        let bad = |reason: String| Error::EdgeFile {
            file: path.to_path_buf(),
            line: lineno,
            reason,
        };
        let (s, d) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected `src<TAB>dst`".to_string()))?;
        let s: u32 = s
            .parse()
            .map_err(|_| bad(format!("bad source index `{s}`")))?;
        let d: u32 = d
            .parse()
            .map_err(|_| bad(format!("bad destination index `{d}`")))?;
        if s as usize >= src_n {
            return Err(bad(format!("source index {s} out of range ({src_n} nodes)")));
        }
        if d as usize >= dst_n {
            return Err(bad(format!(
                "destination index {d} out of range ({dst_n} nodes)"
            )));
        }
        if !seen.insert((s, d)) {
            return Err(bad(format!("duplicate edge ({s}, {d})")));
        }
        edges.push((s, d));
    }
    Ok(edges)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Canonical file name for a relation's edge list.
fn relation_file_name(name: &str) -> String {
    format!("{name}.tsv")
}

/// Serialize a graph into a dataset directory in canonical form.
pub fn save_hetero_graph(g: &HeteroGraph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let manifest = ManifestFile {
        node_types: g
            .node_types()
            .iter()
            .map(|(name, n)| (name.clone(), *n))
            .collect(),
        relations: g
            .relations()
            .iter()
            .map(|r| ManifestRelation {
                name: r.name.clone(),
                src: r.src.clone(),
                dst: r.dst.clone(),
                file: relation_file_name(&r.name),
            })
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    write_file(&dir.join("manifest.json"), json.as_bytes())?;

    for rel in g.relations() {
        let mut edges = rel.edges.clone();
        edges.sort_unstable();
        write_pairs(dir.join(relation_file_name(&rel.name)), &edges)?;
    }
    Ok(())
}

/// Write (a, b) pairs as a TSV edge file.
pub fn write_pairs(path: impl AsRef<Path>, pairs: &[(u32, u32)]) -> Result<()> {
    let mut out = String::with_capacity(pairs.len() * 12);
    for &(a, b) in pairs {
        out.push_str(&format!("{a}\t{b}\n"));
    }
    write_file(path.as_ref(), out.as_bytes())
}

/// Read a TSV pair file without range validation (for split files whose
/// bounds are checked by the caller against its interaction matrix).
pub fn read_pairs(path: impl AsRef<Path>) -> Result<Pairs> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut pairs = Vec::new();
    for (ix, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = || Error::EdgeFile {
            file: path.to_path_buf(),
            line: ix + 1,
            reason: "expected `src<TAB>dst`".to_string(),
        };
        let (a, b) = line.split_once('\t').ok_or_else(bad)?;
        let a: u32 = a.parse().map_err(|_| bad())?;
        let b: u32 = b.parse().map_err(|_| bad())?;
        pairs.push((a, b));
    }
    Ok(pairs)
}

/// SHA-256 over the manifest and every relation file, hex-encoded. Keyed by
/// content, not by file paths, so a copied dataset fingerprints identically.
pub fn dataset_fingerprint(dir: impl AsRef<Path>) -> Result<String> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.json");
    let manifest_text = read_to_string(&manifest_path)?;
    let manifest: ManifestFile =
        serde_json::from_str(&manifest_text).map_err(|e| Error::Manifest {
            path: manifest_path.clone(),
            reason: e.to_string(),
        })?;
    let mut hasher = Sha256::new();
    hasher.update(manifest_text.as_bytes());
    for rel in &manifest.relations {
        let path = dir.join(&rel.file);
        hasher.update(rel.file.as_bytes());
        hasher.update([0u8]);
        hasher.update(read_to_string(&path)?.as_bytes());
    }
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Per-user random holdout: for each user, `round_ties_even(ratio · n)`
/// interactions (clamped to at least one) go to train and the rest to test.
/// Users with few interactions may end up with an empty test set; evaluation
/// skips them. The shuffle is keyed by the seed and the user index, so the
/// split is independent of interaction file order.
pub fn split_interactions(
    inter: &InteractionMatrix,
    ratio: f64,
    seed: u64,
) -> (Pairs, Pairs) {
    assert!((0.0..=1.0).contains(&ratio), "split ratio outside [0, 1]");
    let mut train = Vec::new();
    let mut test = Vec::new();
    for u in 0..inter.users() {
        let mut items: Vec<u32> = inter.items_of(u).to_vec();
        if items.is_empty() {
            continue;
        }
        let mut rng = rng::stream_n(seed, "split", &[u as u64]);
        items.shuffle(&mut rng);
        let n = items.len();
        let n_train = ((ratio * n as f64).round_ties_even() as usize).clamp(1, n);
        for (ix, item) in items.into_iter().enumerate() {
            if ix < n_train {
                train.push((u as u32, item));
            } else {
                test.push((u as u32, item));
            }
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Carve a deterministic validation subset out of a training pair list:
/// `round_ties_even(ratio · n)` of each user's training items, at most
/// `n - 1` so every user keeps at least one training interaction.
pub fn carve_validation(
    train: &[(u32, u32)],
    ratio: f64,
    seed: u64,
) -> (Pairs, Pairs) {
    assert!((0.0..1.0).contains(&ratio), "validation ratio outside [0, 1)");
    let mut by_user: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for &(u, i) in train {
        by_user.entry(u).or_default().push(i);
    }
    let mut remaining = Vec::new();
    let mut val = Vec::new();
    for (u, mut items) in by_user {
        items.sort_unstable();
        let mut rng = rng::stream_n(seed, "val", &[u as u64]);
        items.shuffle(&mut rng);
        let n = items.len();
        let n_val = ((ratio * n as f64).round_ties_even() as usize).min(n - 1);
        for (ix, item) in items.into_iter().enumerate() {
            if ix < n_val {
                val.push((u, item));
            } else {
                remaining.push((u, item));
            }
        }
    }
    remaining.sort_unstable();
    val.sort_unstable();
    (remaining, val)
}
