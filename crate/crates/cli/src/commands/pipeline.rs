use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Subcommand};

use super::{Global, write_json};
use evk_pipeline::{RunConfig, aggregate_tables, load_report_dir, render_text_table, run_pipeline};

#[derive(Args)]
pub struct PipelineCmd {
    #[command(subcommand)]
    pub command: PipelineSub,
}

#[derive(Subcommand)]
pub enum PipelineSub {
    /// Execute maskvote -> repaint -> consistency for every sample
    Run(RunArgs),
    /// Aggregate per-sample metric reports into per-method tables
    Tables(TablesArgs),
}

#[derive(Args)]
pub struct RunArgs {
    /// Run directory holding samples/<id>/...
    #[arg(long)]
    pub dir: PathBuf,
    /// Write the state report here (default: <dir>/report.json)
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct TablesArgs {
    /// Directory of per-sample report JSON files
    #[arg(long)]
    pub reports: PathBuf,
    /// Method name the improvement column compares against
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cmd: PipelineCmd, global: &Global) -> Result<i32> {
    match cmd.command {
        PipelineSub::Run(args) => run_run(args, global),
        PipelineSub::Tables(args) => run_tables(args).map(|_| 0),
    }
}

fn run_run(args: RunArgs, global: &Global) -> Result<i32> {
    let mut config = match &global.config {
        Some(path) => RunConfig::load(path)
            .map_err(|e| anyhow::anyhow!("config {}: {e}", path.display()))?,
        None => {
            let default_path = args.dir.join("config.json");
            if default_path.exists() {
                RunConfig::load(&default_path)
                    .map_err(|e| anyhow::anyhow!("config {}: {e}", default_path.display()))?
            } else {
                RunConfig::default()
            }
        }
    };
    if global.jobs > 0 {
        config.jobs = global.jobs;
    }
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    let report = run_pipeline(&config, &args.dir)?;

    // the persisted report carries only state-derived facts, so reruns
    // reproduce it byte for byte; execution/cache detail goes to stdout
    let state_report = serde_json::json!({
        "processed": report.processed,
        "kept": report.kept,
        "discarded": report.discarded,
        "failed": report.failed,
        "samples": report.samples.iter().map(|s| serde_json::json!({
            "id": s.id,
            "outcome": s.outcome,
        })).collect::<Vec<_>>(),
    });
    let report_path = args
        .report
        .unwrap_or_else(|| args.dir.join("report.json"));
    let text = serde_json::to_string_pretty(&state_report)?;
    if std::fs::read_to_string(&report_path).ok().as_deref() != Some(&text) {
        std::fs::write(&report_path, &text).with_context(|| report_path.display().to_string())?;
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(if report.failed == 0 { 0 } else { 1 })
}

fn run_tables(args: TablesArgs) -> Result<()> {
    let samples = load_report_dir(&args.reports)?;
    let rows = aggregate_tables(&samples, args.baseline.as_deref())?;
    eprint!("{}", render_text_table(&rows));
    write_json(args.out.as_deref(), &rows)
}
