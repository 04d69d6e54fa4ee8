//! `export-edges`: dump learned per-edge retention probabilities for one
//! meta-path view as `node_id,neighbor_id,pi,kept` CSV.

use crate::manifest::TrainManifest;
use crate::rundir::{load_prepared, report_write};
use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use ihgcl::model::PARAM_NAMES;
use ihgcl::train::Checkpoint;
use std::fmt::Write as _;
use std::path::PathBuf;

const VIEWS: [&str; 4] = ["user1", "user2", "item1", "item2"];

#[derive(Args)]
pub struct ExportArgs {
    /// Prepared run directory (from `prepare`).
    #[arg(long)]
    pub run: PathBuf,
    /// Checkpoint to read logits from; its directory must hold the train manifest.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Which view to export: user1, user2, item1, or item2.
    #[arg(long)]
    pub view: String,
    /// Restrict to edges touching this node, oriented around it.
    #[arg(long)]
    pub node: Option<u32>,
    /// Output CSV; defaults to edges-<view>.csv beside the checkpoint.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn run(args: &ExportArgs) -> Result<()> {
    let prepared = load_prepared(&args.run)?;
    let ckpt_dir = args
        .checkpoint
        .parent()
        .context("checkpoint path has no parent directory")?;
    let tm = TrainManifest::load(ckpt_dir)?;
    let threshold = tm.config.bae.edge_threshold;

    let Some(view_ix) = VIEWS.iter().position(|v| v == &args.view) else {
        bail!("unknown view `{}`; expected one of {}", args.view, VIEWS.join(", "));
    };
    let sub = if view_ix < 2 {
        &prepared.subs.user[view_ix]
    } else {
        &prepared.subs.item[view_ix - 2]
    };

    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let param = PARAM_NAMES[3 + view_ix];
    let logits = ckpt
        .matrix(param)
        .with_context(|| format!("checkpoint lacks `{param}`"))?;
    ensure!(
        logits.nrows() == sub.edge_count() && logits.ncols() == 1,
        "`{param}` holds {}x{} values but the view has {} edges",
        logits.nrows(),
        logits.ncols(),
        sub.edge_count()
    );
    if let Some(node) = args.node {
        ensure!(
            (node as usize) < sub.n(),
            "node {node} is out of range; the view has {} nodes",
            sub.n()
        );
    }

    let mut csv = String::from("node_id,neighbor_id,pi,kept\n");
    let mut rows = 0usize;
    let mut kept_rows = 0usize;
    for (e, &(a, b)) in sub.edges().iter().enumerate() {
        let pi = sigmoid(logits[(e, 0)]);
        let kept = pi >= threshold;
        let oriented: &[(u32, u32)] = match args.node {
            None => &[(a, b)],
            Some(n) if n == a => &[(a, b)],
            Some(n) if n == b => &[(b, a)],
            Some(_) => &[],
        };
        for &(x, y) in oriented {
            writeln!(csv, "{x},{y},{pi:.6},{}", u8::from(kept)).expect("in-memory write");
            rows += 1;
            kept_rows += usize::from(kept);
        }
    }

    let out = args.out.clone().unwrap_or_else(|| {
        let stem = match args.node {
            Some(n) => format!("edges-{}-node{n}.csv", args.view),
            None => format!("edges-{}.csv", args.view),
        };
        ckpt_dir.join(stem)
    });
    report_write(&out, csv.as_bytes())?;
    println!(
        "{rows} edges, {kept_rows} kept at threshold {threshold} (view {})",
        sub.name()
    );
    Ok(())
}
