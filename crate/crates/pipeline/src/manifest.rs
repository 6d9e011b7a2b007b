//! Per-sample manifests: the resolved file layout of one sample plus its
//! persisted stage status.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Everything one sample references, resolved against the run directory.
/// Optional entries are `None` when the artifact is absent; which artifacts a
/// stage actually requires is that stage's contract.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleManifest {
    pub id: String,
    pub sample_dir: PathBuf,
    pub views: Option<PathBuf>,
    /// Per-view mask PNGs, sorted by filename.
    pub masks: Vec<PathBuf>,
    pub grid: Option<PathBuf>,
    pub src_latent: Option<PathBuf>,
    pub target_latent: Option<PathBuf>,
    pub edit_prompt: Option<PathBuf>,
    pub boxes: Option<PathBuf>,
    pub edited_images: Vec<PathBuf>,
    pub target_images: Vec<PathBuf>,
    /// Persisted stage states from out/<id>/status.json.
    pub status: BTreeMap<String, String>,
}

fn existing(path: PathBuf) -> Option<PathBuf> {
    path.exists().then_some(path)
}

fn sorted_pngs(dir: &Path) -> Vec<PathBuf> {
    let Ok(entries) = std::fs::read_dir(dir) else {
        return Vec::new();
    };
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .map(|e| e.eq_ignore_ascii_case("png"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    files
}

impl SampleManifest {
    /// Resolves the conventional layout under `sample_dir`, reading the stage
    /// status from `out_dir` when present.
    pub fn discover(id: &str, sample_dir: &Path, out_dir: &Path) -> Self {
        let status = std::fs::read_to_string(out_dir.join("status.json"))
            .ok()
            .and_then(|text| serde_json::from_str(&text).ok())
            .unwrap_or_default();
        Self {
            id: id.to_string(),
            sample_dir: sample_dir.to_path_buf(),
            views: existing(sample_dir.join("views.json")),
            masks: sorted_pngs(&sample_dir.join("masks")),
            grid: existing(sample_dir.join("grid.evk")),
            src_latent: existing(sample_dir.join("latents/src.evk")),
            target_latent: existing(sample_dir.join("latents/target.evk")),
            edit_prompt: existing(sample_dir.join("prompt.txt")),
            boxes: existing(sample_dir.join("boxes.json")),
            edited_images: sorted_pngs(&sample_dir.join("images/edited")),
            target_images: sorted_pngs(&sample_dir.join("images/target")),
            status,
        }
    }

    /// A stage marked done must still be backed by its output files;
    /// returns the names of stages whose artifacts went missing.
    pub fn stale_done_stages(&self, out_dir: &Path) -> Vec<String> {
        let mut stale = Vec::new();
        for (stage, state) in &self.status {
            if state != "done" && state != "kept" && !state.starts_with("discarded") {
                continue;
            }
            let outputs: &[&str] = match stage.as_str() {
                "maskvote" => &["mask.evk", "counts.evk"],
                "repaint" => &["edited.evk"],
                _ => &[],
            };
            if outputs.iter().any(|f| !out_dir.join(f).exists()) {
                stale.push(stage.clone());
            }
        }
        stale
    }
}
