use std::path::PathBuf;

use anyhow::{Context, Result, bail};
use clap::Args;
use serde_json::json;

use super::{Global, write_json};
use evk_core::geom::load_mesh;
use evk_core::metrics3d::{EVAL_SAMPLE_COUNT, eval_3d_with_samples};
use evk_core::render2d::{
    EmbedderPort, FileEmbedder, PROXY_EMBED_DIM, ProxyEmbedder, eval_2d_with_views,
};

#[derive(Args)]
pub struct Metrics3dArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Surface samples per mesh
    #[arg(long, default_value_t = EVAL_SAMPLE_COUNT)]
    pub samples: usize,
    /// Method label carried into aggregate tables
    #[arg(long, default_value = "default")]
    pub method: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_3d(args: Metrics3dArgs, global: &Global) -> Result<()> {
    let (pred, pred_stats) =
        load_mesh(&args.pred).with_context(|| args.pred.display().to_string())?;
    let (gt, gt_stats) = load_mesh(&args.gt).with_context(|| args.gt.display().to_string())?;
    if pred_stats.dropped_degenerate + gt_stats.dropped_degenerate > 0 {
        eprintln!(
            "dropped degenerate faces: pred {}, gt {}",
            pred_stats.dropped_degenerate, gt_stats.dropped_degenerate
        );
    }
    let seed = global.effective_seed(args.seed);
    let report = eval_3d_with_samples(&pred, &gt, seed, args.samples)?;
    let flat = json!({
        "method": args.method,
        "cd_x1000": report.cd_x1000,
        "cd_raw": report.cd_raw,
        "nc": report.nc,
        "f1_at_001": report.f1_at_001,
        "precision": report.precision,
        "recall": report.recall,
        "sample_count": report.sample_count,
        "seed": report.seed,
    });
    write_json(args.out.as_deref(), &flat)
}

#[derive(Args)]
pub struct Metrics2dArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub views: usize,
    #[arg(long, default_value_t = 256)]
    pub image_size: u32,
    /// "proxy" or "file:<dir>" with precomputed embeddings
    #[arg(long, default_value = "proxy")]
    pub embedder: String,
    #[arg(long, default_value = "default")]
    pub method: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_2d(args: Metrics2dArgs) -> Result<()> {
    let (pred, _) = load_mesh(&args.pred).with_context(|| args.pred.display().to_string())?;
    let (gt, _) = load_mesh(&args.gt).with_context(|| args.gt.display().to_string())?;
    let embedder: Box<dyn EmbedderPort> = if args.embedder == "proxy" {
        Box::new(ProxyEmbedder::new())
    } else if let Some(dir) = args.embedder.strip_prefix("file:") {
        Box::new(FileEmbedder::new(dir.into(), PROXY_EMBED_DIM))
    } else {
        bail!("unknown embedder {:?}", args.embedder);
    };
    let report = eval_2d_with_views(&pred, &gt, embedder.as_ref(), args.views, args.image_size)?;
    let flat = json!({
        "method": args.method,
        "psnr": report.psnr,
        "ssim": report.ssim,
        "embed_i": report.embed_i,
        "lpips": report.lpips,
        "view_count": report.view_count,
        "per_view_psnr": report.per_view_psnr,
        "per_view_ssim": report.per_view_ssim,
        "per_view_embed": report.per_view_embed,
    });
    write_json(args.out.as_deref(), &flat)
}
