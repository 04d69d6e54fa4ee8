//! Loading prepared run directories back into model inputs, plus the small
//! filesystem conventions every subcommand shares.

use crate::manifest::RunManifest;
use anyhow::{ensure, Context, Result};
use ihgcl::graph::dataset::read_pairs;
use ihgcl::graph::{InteractionMatrix, MetaPathSubgraph, ModelSubgraphs, Pairs};
use ihgcl::train::{carve_validation_matrix, TrainConfig, Variant};
use std::path::{Path, PathBuf};

/// Everything `prepare` wrote, loaded and validated.
pub struct PreparedRun {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    /// All training interactions (before the validation carve).
    pub train: InteractionMatrix,
    pub test: Pairs,
    pub subs: ModelSubgraphs,
}

pub fn load_prepared(dir: &Path) -> Result<PreparedRun> {
    let manifest = RunManifest::load(dir)
        .with_context(|| format!("`{}` is not a prepared run directory", dir.display()))?;
    ensure!(
        manifest.views.len() == 4,
        "manifest lists {} views, expected 4",
        manifest.views.len()
    );
    let train_pairs = read_pairs(dir.join("train.tsv"))?;
    let test = read_pairs(dir.join("test.tsv"))?;
    let train = InteractionMatrix::new(manifest.users, manifest.items, train_pairs)?;

    let mut views = Vec::with_capacity(4);
    for (ix, entry) in manifest.views.iter().enumerate() {
        let (n, expected_ty) = if ix < 2 {
            (manifest.users, &manifest.user_type)
        } else {
            (manifest.items, &manifest.item_type)
        };
        ensure!(
            &entry.node_type == expected_ty,
            "view `{}` is over `{}`, expected `{expected_ty}`",
            entry.name,
            entry.node_type
        );
        let edges = read_pairs(dir.join(&entry.file))?;
        views.push(MetaPathSubgraph::from_edges(
            &entry.name,
            &entry.node_type,
            n,
            edges,
        )?);
    }
    let mut it = views.into_iter();
    let subs = ModelSubgraphs {
        user: [it.next().expect("4 views"), it.next().expect("4 views")],
        item: [it.next().expect("4 views"), it.next().expect("4 views")],
        warnings: Vec::new(),
    };

    Ok(PreparedRun {
        dir: dir.to_path_buf(),
        manifest,
        train,
        test,
        subs,
    })
}

/// Split the prepared training interactions into the core matrix the model
/// trains on and the held-out validation pairs.
pub fn carve(run: &PreparedRun, cfg: &TrainConfig) -> Result<(InteractionMatrix, Pairs)> {
    Ok(carve_validation_matrix(&run.train, cfg.val_ratio, cfg.seed)?)
}

/// Read the training config: the given JSON file, or defaults without one.
pub fn load_train_config(path: Option<&Path>) -> Result<TrainConfig> {
    let cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => TrainConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_variant(name: &str) -> Result<Variant> {
    name.parse()
        .with_context(|| format!("unknown variant `{name}`"))
}

/// Write a derived report, replacing any stale copy.
pub fn report_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Ok(old) = std::fs::read(path) {
        if old == bytes {
            println!("{} is up to date", path.display());
            return Ok(());
        }
        std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
        println!("updated {}", path.display());
        return Ok(());
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

