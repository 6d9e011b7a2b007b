//! `evk`: voxel mask voting, latent repainting, mesh evaluation metrics,
//! dataset assembly, and the file-drop pipeline, from the command line.

mod commands;

use anyhow::Result;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "evk", version, about = "3D editing dataset factory toolkit")]
struct Cli {
    /// Pipeline config JSON (used by `pipeline run`; flag-level overrides win)
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,
    /// Worker threads (0 = automatic)
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Default seed for seeded subcommands that do not set their own
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lift per-view 2D masks into a 3D voxel mask by voting
    Maskvote(commands::maskvote::MaskvoteArgs),
    /// Mask-guided latent repainting with a built-in denoiser
    Repaint(commands::repaint::RepaintArgs),
    /// Chamfer / normal-consistency / F1 mesh evaluation
    Metrics3d(commands::metrics::Metrics3dArgs),
    /// PSNR / SSIM / embedding-cosine evaluation over ring renders
    Metrics2d(commands::metrics::Metrics2dArgs),
    /// Prune near-duplicate embeddings by cosine similarity
    Dedup(commands::dedup::DedupArgs),
    /// Assemble character-pose asset entries and edit pairs
    Assemble(commands::dedup::AssembleArgs),
    /// Toy editing-transformer verification suite
    Editformer(commands::editformer::EditformerCmd),
    /// File-drop pipeline orchestration
    Pipeline(commands::pipeline::PipelineCmd),
    /// Mask dilation robustness table
    Robustness(commands::robustness::RobustnessArgs),
}

fn main() {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        // a failure here means a pool already exists, which is fine
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global();
    }
    let global = commands::Global {
        config: cli.config.clone(),
        jobs: cli.jobs,
        seed: cli.seed,
    };
    let result: Result<i32> = match cli.command {
        Command::Maskvote(args) => commands::maskvote::run(args).map(|_| 0),
        Command::Repaint(args) => commands::repaint::run(args, &global).map(|_| 0),
        Command::Metrics3d(args) => commands::metrics::run_3d(args, &global).map(|_| 0),
        Command::Metrics2d(args) => commands::metrics::run_2d(args).map(|_| 0),
        Command::Dedup(args) => commands::dedup::run_dedup(args).map(|_| 0),
        Command::Assemble(args) => commands::dedup::run_assemble(args, &global).map(|_| 0),
        Command::Editformer(cmd) => commands::editformer::run(cmd, &global),
        Command::Pipeline(cmd) => commands::pipeline::run(cmd, &global),
        Command::Robustness(args) => commands::robustness::run(args).map(|_| 0),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(2);
        }
    }
}
