use std::path::PathBuf;

use anyhow::{Context, Result, bail};
use clap::Args;

use evk_core::geom::voxel::Bounds;
use evk_core::geom::{Mask2D, VoxelGrid, load_views, read_tensor, write_tensor};
use evk_core::maskvote::{VoteConfig, threshold_mask, vote};

#[derive(Args)]
pub struct MaskvoteArgs {
    /// Voting-domain occupancy grid ([R,R,R] "EVK0" tensor)
    #[arg(long)]
    pub grid: PathBuf,
    /// Camera list JSON: [{fx,fy,cx,cy,width,height,R:[9],t:[3]}, ...]
    #[arg(long)]
    pub views: PathBuf,
    /// Directory of per-view PNG masks, matched to views by sorted filename
    #[arg(long)]
    pub masks: PathBuf,
    /// Fraction-of-views threshold in (0, 1]
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Output 3D mask tensor
    #[arg(long)]
    pub out: PathBuf,
    /// Optional output for the raw vote counts
    #[arg(long)]
    pub counts_out: Option<PathBuf>,
}

pub fn run(args: MaskvoteArgs) -> Result<()> {
    let domain_blob = read_tensor(&args.grid)
        .with_context(|| format!("reading grid {}", args.grid.display()))?;
    let domain = VoxelGrid::from_tensor(&domain_blob, Bounds::UNIT)?;
    let views = load_views(&args.views)?;
    if views.is_empty() {
        bail!("views file {} holds no cameras", args.views.display());
    }

    let mut mask_files: Vec<PathBuf> = std::fs::read_dir(&args.masks)
        .with_context(|| format!("reading mask dir {}", args.masks.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e.eq_ignore_ascii_case("png")).unwrap_or(false))
        .collect();
    mask_files.sort();
    if mask_files.len() != views.len() {
        bail!(
            "{} masks found for {} views",
            mask_files.len(),
            views.len()
        );
    }
    let masks: Vec<Mask2D> = mask_files
        .iter()
        .map(|p| Mask2D::load_png(p).with_context(|| p.display().to_string()))
        .collect::<Result<_>>()?;

    let counts = vote(&domain, &views, &masks)?;
    let config = VoteConfig::new(args.tau, views.len());
    let mask3d = threshold_mask(&counts, &config);
    write_tensor(&args.out, &mask3d.to_tensor())?;
    if let Some(counts_out) = &args.counts_out {
        write_tensor(counts_out, &counts.to_tensor())?;
    }
    eprintln!(
        "voted {} views over {} occupied cells; kept {} voxels at tau {}",
        views.len(),
        domain.occupied_count(),
        mask3d.occupied_count(),
        args.tau
    );
    Ok(())
}
