pub mod dedup;
pub mod editformer;
pub mod maskvote;
pub mod metrics;
pub mod pipeline;
pub mod repaint;
pub mod robustness;

/// Global flags threaded to subcommands.
pub struct Global {
    pub config: Option<std::path::PathBuf>,
    pub jobs: usize,
    pub seed: Option<u64>,
}

impl Global {
    /// Subcommand-level seed wins; then the global `--seed`; then 0.
    pub fn effective_seed(&self, sub: Option<u64>) -> u64 {
        sub.or(self.seed).unwrap_or(0)
    }
}

pub fn write_json<T: serde::Serialize>(
    out: Option<&std::path::Path>,
    value: &T,
) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(())
}
