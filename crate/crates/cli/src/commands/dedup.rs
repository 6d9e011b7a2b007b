use std::path::PathBuf;

use anyhow::{Context, Result, bail};
use clap::Args;
use serde_json::json;

use super::{Global, write_json};
use evk_core::dedup::{EmbeddingSet, assemble_pairs, greedy_prune};
use evk_core::geom::read_tensor;

#[derive(Args)]
pub struct DedupArgs {
    /// Embedding matrix as an [N, D] "EVK0" tensor
    #[arg(long)]
    pub embeddings: PathBuf,
    /// JSON array of N item ids, row-aligned with the tensor
    #[arg(long)]
    pub ids: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    pub threshold: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_dedup(args: DedupArgs) -> Result<()> {
    let blob = read_tensor(&args.embeddings)
        .with_context(|| args.embeddings.display().to_string())?;
    let dims = blob.dims();
    if dims.len() != 2 {
        bail!("embeddings tensor must be [N, D], got {dims:?}");
    }
    let (n, d) = (dims[0], dims[1]);
    let ids: Vec<String> = serde_json::from_str(
        &std::fs::read_to_string(&args.ids).with_context(|| args.ids.display().to_string())?,
    )?;
    if ids.len() != n {
        bail!("{} ids for {} embedding rows", ids.len(), n);
    }
    let vectors: Vec<Vec<f32>> = (0..n).map(|i| blob.data()[i * d..(i + 1) * d].to_vec()).collect();
    let set = EmbeddingSet::new(ids, vectors)?;
    let kept = greedy_prune(&set, args.threshold);
    let report = json!({
        "threshold": args.threshold,
        "input_count": n,
        "kept_count": kept.len(),
        "kept": kept,
    });
    write_json(args.out.as_deref(), &report)
}

#[derive(Args)]
pub struct AssembleArgs {
    /// JSON array of character ids
    #[arg(long)]
    pub characters: PathBuf,
    /// JSON array of candidate pose ids
    #[arg(long)]
    pub poses: PathBuf,
    /// Poses sampled per character, without replacement
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_assemble(args: AssembleArgs, global: &Global) -> Result<()> {
    let characters: Vec<String> = serde_json::from_str(
        &std::fs::read_to_string(&args.characters)
            .with_context(|| args.characters.display().to_string())?,
    )?;
    let poses: Vec<String> = serde_json::from_str(
        &std::fs::read_to_string(&args.poses).with_context(|| args.poses.display().to_string())?,
    )?;
    let manifest = assemble_pairs(&characters, &poses, args.k, global.effective_seed(args.seed))?;
    eprintln!(
        "assembled {} asset entries and {} edit pairs",
        manifest.assets.len(),
        manifest.pairs.len()
    );
    write_json(args.out.as_deref(), &manifest)
}
