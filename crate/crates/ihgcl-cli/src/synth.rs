//! `synth`: materialize the bundled synthetic listening dataset.

use anyhow::{bail, Context, Result};
use clap::Args;
use ihgcl::graph::{generate_synth, load_hetero_graph, save_hetero_graph, SynthConfig};
use std::path::PathBuf;

#[derive(Args)]
pub struct SynthArgs {
    /// Dataset directory to create.
    #[arg(long, short = 'o')]
    pub out: PathBuf,
    /// Generator seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Generator config JSON; calibrated defaults apply without one.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn run(args: &SynthArgs) -> Result<()> {
    let mut cfg: SynthConfig = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let g = generate_synth(&cfg)?;

    if args.out.join("manifest.json").exists() {
        let old = load_hetero_graph(&args.out)?;
        if old == g {
            println!("{} is up to date", args.out.display());
            return Ok(());
        }
        bail!(
            "{} exists with a different dataset; pick another --out",
            args.out.display()
        );
    }
    save_hetero_graph(&g, &args.out)?;

    println!("wrote {}", args.out.display());
    for (name, n) in g.node_types() {
        println!("  {n} {name} nodes");
    }
    for rel in g.relations() {
        println!("  {} `{}` edges ({} -> {})", rel.edges.len(), rel.name, rel.src, rel.dst);
    }
    println!("suggested meta-paths: UU,UATAU;AA,ATA");
    Ok(())
}
