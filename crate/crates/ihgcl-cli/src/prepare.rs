//! `prepare`: split a dataset and compose its meta-path subgraphs into a
//! self-contained run directory.
//!
//! Subgraphs are composed against the training split only, so no held-out
//! interaction can reach the model through an interaction-bearing meta-path.

use crate::manifest::{content_hash, RunManifest, ViewEntry, RUN_MANIFEST};
use crate::paths::parse_meta_paths;
use anyhow::{bail, Context, Result};
use clap::Args;
use ihgcl::graph::dataset::{dataset_fingerprint, write_pairs};
use ihgcl::graph::{
    load_hetero_graph, select_model_subgraphs, split_interactions, InteractionMatrix,
    MetaPathSpec, MetaPathSubgraph, Pairs,
};
use std::path::PathBuf;

/// Fraction of each user's interactions kept for training; the rest is the
/// held-out test set.
const TRAIN_RATIO: f64 = 0.8;

const VIEW_FILES: [&str; 4] = [
    "user_view_1.tsv",
    "user_view_2.tsv",
    "item_view_1.tsv",
    "item_view_2.tsv",
];

#[derive(Args)]
pub struct PrepareArgs {
    /// Dataset directory (manifest.json plus one TSV per relation).
    #[arg(long = "data-dir")]
    pub data_dir: PathBuf,
    /// Meta-paths as `user1,user2;item1,item2`, e.g. `UU,UATAU;AA,ATA`.
    #[arg(long = "meta-paths")]
    pub meta_paths: String,
    /// Seed for the per-user 80/20 train/test split.
    #[arg(long = "split-seed", default_value_t = 0)]
    pub split_seed: u64,
    /// Interaction relation, when several connect the endpoint types.
    #[arg(long)]
    pub interaction: Option<String>,
    /// Run directory to create.
    #[arg(long, short = 'o')]
    pub out: PathBuf,
}

pub fn run(args: &PrepareArgs) -> Result<()> {
    let g = load_hetero_graph(&args.data_dir)
        .with_context(|| format!("loading dataset from {}", args.data_dir.display()))?;
    let parsed = parse_meta_paths(&g, &args.meta_paths, args.interaction.as_deref())?;

    let inter = InteractionMatrix::from_graph(
        &g,
        &parsed.interaction,
        &parsed.user_type,
        &parsed.item_type,
    )?;
    let (train_pairs, test_pairs) = split_interactions(&inter, TRAIN_RATIO, args.split_seed);

    let rel = g.relation(&parsed.interaction)?;
    let train_as_stored: Pairs = if rel.src == parsed.user_type {
        train_pairs.clone()
    } else {
        train_pairs.iter().map(|&(u, i)| (i, u)).collect()
    };
    let g_train = g.with_relation_edges(&parsed.interaction, train_as_stored)?;

    let spec_of = |chain: &[String]| -> Result<MetaPathSpec> {
        let refs: Vec<&str> = chain.iter().map(String::as_str).collect();
        Ok(MetaPathSpec::from_relation_chain(&g_train, &refs)?)
    };
    let user_specs = [spec_of(&parsed.user_chains[0])?, spec_of(&parsed.user_chains[1])?];
    let item_specs = [spec_of(&parsed.item_chains[0])?, spec_of(&parsed.item_chains[1])?];
    let subs = select_model_subgraphs(
        &g_train,
        &user_specs,
        &item_specs,
        &parsed.user_type,
        &parsed.item_type,
    )?;
    for w in &subs.warnings {
        eprintln!("warning: {w}");
    }

    let dataset_hash = dataset_fingerprint(&args.data_dir)?;
    let views: Vec<&MetaPathSubgraph> = subs.user.iter().chain(subs.item.iter()).collect();
    let manifest = RunManifest {
        dataset_dir: args.data_dir.display().to_string(),
        dataset_hash: dataset_hash.clone(),
        meta_paths: args.meta_paths.clone(),
        interaction: parsed.interaction.clone(),
        user_type: parsed.user_type.clone(),
        item_type: parsed.item_type.clone(),
        split_seed: args.split_seed,
        users: inter.users(),
        items: inter.items(),
        train_edges: train_pairs.len(),
        test_edges: test_pairs.len(),
        content_hash: content_hash(
            &dataset_hash,
            &args.meta_paths,
            &parsed.interaction,
            args.split_seed,
        ),
        views: views
            .iter()
            .zip(VIEW_FILES)
            .map(|(sub, file)| ViewEntry {
                name: sub.name().to_string(),
                node_type: sub.node_type().to_string(),
                file: file.to_string(),
                edges: sub.edge_count(),
            })
            .collect(),
    };

    if args.out.join(RUN_MANIFEST).exists() {
        let old = RunManifest::load(&args.out)?;
        if old.content_hash == manifest.content_hash {
            println!("{} is up to date", args.out.display());
            return Ok(());
        }
        bail!(
            "{} exists and was prepared from different inputs; pick another --out",
            args.out.display()
        );
    }

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_pairs(args.out.join("train.tsv"), &train_pairs)?;
    write_pairs(args.out.join("test.tsv"), &test_pairs)?;
    for (sub, file) in views.iter().zip(VIEW_FILES) {
        write_pairs(args.out.join(file), sub.edges())?;
    }
    manifest.save(&args.out)?;

    println!(
        "prepared {}: {} users x {} items, {} train / {} test interactions",
        args.out.display(),
        manifest.users,
        manifest.items,
        manifest.train_edges,
        manifest.test_edges,
    );
    for entry in &manifest.views {
        println!("  view {} over `{}`: {} edges", entry.name, entry.node_type, entry.edges);
    }
    Ok(())
}
