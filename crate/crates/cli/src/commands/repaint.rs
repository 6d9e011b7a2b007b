use std::path::PathBuf;

use anyhow::{Result, bail};
use clap::Args;

use super::Global;
use evk_core::geom::voxel::Bounds;
use evk_core::geom::{VoxelGrid, read_tensor, write_tensor};
use evk_core::repaint::{
    DenoiserPort, IdentityDenoiser, Latent, LinearDenoiser, NoiseMode, Schedule, ZeroDenoiser,
    repaint_run,
};

#[derive(Args)]
pub struct RepaintArgs {
    /// Source latent ([C,R,R,R] "EVK0" tensor)
    #[arg(long)]
    pub src: PathBuf,
    /// 3D edit mask ([R,R,R] tensor; nonzero = editable)
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long, default_value_t = 25)]
    pub steps: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// "zero", "identity", or "linear:<tensor path>"
    #[arg(long, default_value = "zero")]
    pub denoiser: String,
    /// Redraw source noise each step instead of sharing one draw per run
    #[arg(long, default_value_t = false)]
    pub fresh_noise: bool,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: RepaintArgs, global: &Global) -> Result<()> {
    let src = Latent::new(read_tensor(&args.src)?)?;
    let mask_blob = read_tensor(&args.mask)?;
    let mask = VoxelGrid::from_tensor(&mask_blob, Bounds::UNIT)?;

    let denoiser: Box<dyn DenoiserPort> = if args.denoiser == "zero" {
        Box::new(ZeroDenoiser)
    } else if args.denoiser == "identity" {
        Box::new(IdentityDenoiser)
    } else if let Some(path) = args.denoiser.strip_prefix("linear:") {
        let target = Latent::new(read_tensor(std::path::Path::new(path))?)?;
        Box::new(LinearDenoiser::new(target))
    } else {
        bail!("unknown denoiser {:?}", args.denoiser);
    };

    let schedule = Schedule::linear(args.steps);
    let noise_mode = if args.fresh_noise {
        NoiseMode::FreshPerStep
    } else {
        NoiseMode::SharedInterpolation
    };
    let seed = global.effective_seed(args.seed);
    let edited = repaint_run(
        denoiser.as_ref(),
        &src,
        &mask,
        &schedule,
        &[],
        seed,
        noise_mode,
    )?;
    write_tensor(&args.out, edited.blob())?;
    eprintln!(
        "repainted {} steps at resolution {} (seed {seed}) -> {}",
        args.steps,
        src.resolution(),
        args.out.display()
    );
    Ok(())
}
