use std::path::PathBuf;

use anyhow::Result;
use clap::Args;

use super::write_json;
use evk_core::geom::voxel::Bounds;
use evk_core::geom::{VoxelGrid, read_tensor};
use evk_pipeline::robustness_study;

#[derive(Args)]
pub struct RobustnessArgs {
    /// 3D mask tensor ([R,R,R], nonzero = occupied)
    #[arg(long)]
    pub mask: PathBuf,
    /// Dilation percents of the bounding-sphere radius
    #[arg(long, value_delimiter = ',', default_values_t = vec![9.0, 18.0, 27.0])]
    pub percents: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: RobustnessArgs) -> Result<()> {
    let blob = read_tensor(&args.mask)?;
    let mask = VoxelGrid::from_tensor(&blob, Bounds::UNIT)?;
    let rows = robustness_study(&mask, &args.percents)?;
    eprintln!("{:>8} {:>12} {:>16}", "percent", "voxel_count", "iou_vs_original");
    for row in &rows {
        eprintln!(
            "{:>8.1} {:>12} {:>16.6}",
            row.percent, row.voxel_count, row.iou_vs_original
        );
    }
    write_json(args.out.as_deref(), &rows)
}
