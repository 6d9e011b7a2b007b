//! Resumable per-sample stage execution over the file-drop directory layout:
//!
//! ```text
//! run_dir/
//!   samples/<id>/
//!     views.json            camera list
//!     masks/*.png           per-view 2D masks, sorted by filename
//!     grid.evk              optional voting domain (defaults to a full grid)
//!     latents/src.evk       source latent [C, R, R, R]
//!     latents/target.evk    optional denoiser target
//!     images/edited/*.png   consistency-filter set A
//!     images/target/*.png   consistency-filter set B
//!   out/<id>/               mask.evk, counts.evk, edited.evk, status.json
//!   rejected/<id>/          reason.json for discarded samples
//! ```
//!
//! Stages already marked done (with their outputs present) are skipped, so a
//! rerun over a completed directory writes nothing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use evk_core::geom::voxel::Bounds;
use evk_core::geom::{
    Mask2D, VoxelGrid, load_views, read_tensor, write_tensor,
};
use evk_core::maskvote::{VoteConfig, threshold_mask, vote};
use evk_core::render2d::{
    EmbedderPort, FileEmbedder, Image, PROXY_EMBED_DIM, ProxyEmbedder, mean_set_cosine,
};
use evk_core::repaint::{
    DenoiserPort, IdentityDenoiser, Latent, LinearDenoiser, NoiseMode, Schedule, ZeroDenoiser,
    repaint_run,
};

use crate::config::RunConfig;
use crate::manifest::SampleManifest;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("sample {sample}, stage {stage}: missing artifact {path}")]
    MissingArtifact {
        sample: String,
        stage: &'static str,
        path: String,
    },
    #[error("sample {sample}, stage {stage}: {message}")]
    StageFailure {
        sample: String,
        stage: &'static str,
        message: String,
    },
    #[error("run directory error: {0}")]
    RunDir(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageState {
    Done,
    Cached,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub id: String,
    pub stages: BTreeMap<String, StageState>,
    /// `kept`, `discarded:<reason>`, or `failed:<stage>`.
    pub outcome: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub samples: Vec<SampleOutcome>,
    pub processed: usize,
    pub kept: usize,
    pub discarded: usize,
    pub failed: usize,
}

impl RunReport {
    pub fn all_cached(&self) -> bool {
        self.samples
            .iter()
            .all(|s| s.stages.values().all(|&st| st == StageState::Cached))
    }
}

/// Persisted per-sample stage map: stage name -> "done" / "kept" /
/// "discarded:<reason>". Deliberately free of timestamps or run ids so a
/// rerun reproduces the file byte for byte.
type StatusMap = BTreeMap<String, String>;

fn store_status(path: &Path, status: &StatusMap) -> Result<(), String> {
    let text = serde_json::to_string_pretty(status).expect("status serializes");
    // leave identical bytes untouched to keep reruns write-free
    if let Ok(existing) = std::fs::read_to_string(path)
        && existing == text
    {
        return Ok(());
    }
    std::fs::write(path, text).map_err(|e| e.to_string())
}

fn fnv1a(text: &str) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for b in text.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

struct SamplePaths {
    id: String,
    sample_dir: PathBuf,
    out_dir: PathBuf,
    rejected_dir: PathBuf,
}

impl SamplePaths {
    fn status_path(&self) -> PathBuf {
        self.out_dir.join("status.json")
    }
}

fn build_denoiser(
    spec: &str,
    sample_dir: &Path,
    sample: &str,
) -> Result<Box<dyn DenoiserPort>, PipelineError> {
    if spec == "zero" {
        return Ok(Box::new(ZeroDenoiser));
    }
    if spec == "identity" {
        return Ok(Box::new(IdentityDenoiser));
    }
    if let Some(rel) = spec.strip_prefix("linear:") {
        let path = sample_dir.join(rel);
        let blob = read_tensor(&path).map_err(|_| PipelineError::MissingArtifact {
            sample: sample.into(),
            stage: "repaint",
            path: path.display().to_string(),
        })?;
        let target = Latent::new(blob).map_err(|e| PipelineError::StageFailure {
            sample: sample.into(),
            stage: "repaint",
            message: e.to_string(),
        })?;
        return Ok(Box::new(LinearDenoiser::new(target)));
    }
    Err(PipelineError::StageFailure {
        sample: sample.into(),
        stage: "repaint",
        message: format!("unknown denoiser {spec:?}"),
    })
}

fn build_embedder(spec: &str) -> Result<Box<dyn EmbedderPort>, PipelineError> {
    if spec == "proxy" {
        return Ok(Box::new(ProxyEmbedder::new()));
    }
    if let Some(dir) = spec.strip_prefix("file:") {
        return Ok(Box::new(FileEmbedder::new(dir.into(), PROXY_EMBED_DIM)));
    }
    Err(PipelineError::RunDir(format!("unknown embedder {spec:?}")))
}

fn stage_maskvote(
    paths: &SamplePaths,
    manifest: &SampleManifest,
    config: &RunConfig,
) -> Result<(), PipelineError> {
    let sample = &paths.id;
    let missing = |path: &Path| PipelineError::MissingArtifact {
        sample: sample.clone(),
        stage: "maskvote",
        path: path.display().to_string(),
    };
    let failure = |message: String| PipelineError::StageFailure {
        sample: sample.clone(),
        stage: "maskvote",
        message,
    };

    let views_path = manifest
        .views
        .as_ref()
        .ok_or_else(|| missing(&paths.sample_dir.join("views.json")))?;
    let views = load_views(views_path).map_err(|e| failure(e.to_string()))?;
    if views.len() != config.n_views {
        return Err(failure(format!(
            "views.json has {} views, config expects {}",
            views.len(),
            config.n_views
        )));
    }

    if manifest.masks.is_empty() {
        return Err(missing(&paths.sample_dir.join("masks")));
    }
    if manifest.masks.len() != views.len() {
        return Err(failure(format!(
            "{} masks for {} views",
            manifest.masks.len(),
            views.len()
        )));
    }
    let masks: Vec<Mask2D> = manifest
        .masks
        .iter()
        .map(|p| Mask2D::load_png(p).map_err(|e| failure(format!("{}: {e}", p.display()))))
        .collect::<Result<_, _>>()?;

    let domain = if let Some(grid_path) = &manifest.grid {
        let blob = read_tensor(grid_path).map_err(|e| failure(e.to_string()))?;
        VoxelGrid::from_tensor(&blob, Bounds::UNIT).map_err(|e| failure(e.to_string()))?
    } else {
        let mut grid =
            VoxelGrid::new(config.resolution, Bounds::UNIT).map_err(|e| failure(e.to_string()))?;
        for z in 0..config.resolution {
            for y in 0..config.resolution {
                for x in 0..config.resolution {
                    grid.set(x, y, z, true);
                }
            }
        }
        grid
    };

    let counts = vote(&domain, &views, &masks).map_err(|e| failure(e.to_string()))?;
    let vote_config = VoteConfig::new(config.tau, views.len());
    let mask3d = threshold_mask(&counts, &vote_config);

    std::fs::create_dir_all(&paths.out_dir).map_err(|e| failure(e.to_string()))?;
    write_tensor(&paths.out_dir.join("counts.evk"), &counts.to_tensor())
        .map_err(|e| failure(e.to_string()))?;
    write_tensor(&paths.out_dir.join("mask.evk"), &mask3d.to_tensor())
        .map_err(|e| failure(e.to_string()))?;
    Ok(())
}

fn stage_repaint(
    paths: &SamplePaths,
    manifest: &SampleManifest,
    config: &RunConfig,
) -> Result<(), PipelineError> {
    let sample = &paths.id;
    let failure = |message: String| PipelineError::StageFailure {
        sample: sample.clone(),
        stage: "repaint",
        message,
    };

    let src_path = manifest.src_latent.as_ref().ok_or_else(|| {
        PipelineError::MissingArtifact {
            sample: sample.clone(),
            stage: "repaint",
            path: paths.sample_dir.join("latents/src.evk").display().to_string(),
        }
    })?;
    let src_blob = read_tensor(src_path).map_err(|e| failure(e.to_string()))?;
    let src = Latent::new(src_blob).map_err(|e| failure(e.to_string()))?;

    let mask_path = paths.out_dir.join("mask.evk");
    let mask_blob = read_tensor(&mask_path).map_err(|e| failure(e.to_string()))?;
    let mask =
        VoxelGrid::from_tensor(&mask_blob, Bounds::UNIT).map_err(|e| failure(e.to_string()))?;

    let denoiser = build_denoiser(&config.denoiser, &paths.sample_dir, sample)?;
    let schedule = Schedule::linear(config.repaint_steps);
    let seed = config.seed ^ fnv1a(sample);
    let edited = repaint_run(
        denoiser.as_ref(),
        &src,
        &mask,
        &schedule,
        &[],
        seed,
        NoiseMode::SharedInterpolation,
    )
    .map_err(|e| failure(e.to_string()))?;
    write_tensor(&paths.out_dir.join("edited.evk"), edited.blob())
        .map_err(|e| failure(e.to_string()))?;
    Ok(())
}

/// Returns `Ok(true)` when the sample survives the filter.
fn stage_consistency(
    paths: &SamplePaths,
    manifest: &SampleManifest,
    config: &RunConfig,
    embedder: &dyn EmbedderPort,
) -> Result<bool, PipelineError> {
    let sample = &paths.id;
    let failure = |message: String| PipelineError::StageFailure {
        sample: sample.clone(),
        stage: "consistency",
        message,
    };
    let load_set = |name: &str, files: &[std::path::PathBuf]| -> Result<Vec<Image>, PipelineError> {
        if files.is_empty() {
            return Err(PipelineError::MissingArtifact {
                sample: sample.clone(),
                stage: "consistency",
                path: paths.sample_dir.join("images").join(name).display().to_string(),
            });
        }
        files
            .iter()
            .map(|p| Image::load_png(p).map_err(|e| failure(format!("{}: {e}", p.display()))))
            .collect()
    };
    let edited = load_set("edited", &manifest.edited_images)?;
    let target = load_set("target", &manifest.target_images)?;
    if edited.len() != target.len() || edited.is_empty() {
        return Err(failure(format!(
            "view sets differ: {} edited vs {} target",
            edited.len(),
            target.len()
        )));
    }
    let cosine = mean_set_cosine(&edited, &target, embedder).map_err(|e| failure(e.to_string()))?;
    if cosine >= config.consistency_threshold {
        Ok(true)
    } else {
        std::fs::create_dir_all(&paths.rejected_dir).map_err(|e| failure(e.to_string()))?;
        let reason = serde_json::json!({
            "reason": "consistency",
            "mean_cosine": cosine,
            "threshold": config.consistency_threshold,
        });
        let text = serde_json::to_string_pretty(&reason).expect("reason serializes");
        let path = paths.rejected_dir.join("reason.json");
        if std::fs::read_to_string(&path).ok().as_deref() != Some(&text) {
            std::fs::write(&path, text).map_err(|e| failure(e.to_string()))?;
        }
        Ok(false)
    }
}

fn process_sample(
    paths: &SamplePaths,
    config: &RunConfig,
    embedder: &dyn EmbedderPort,
) -> SampleOutcome {
    let manifest = SampleManifest::discover(&paths.id, &paths.sample_dir, &paths.out_dir);
    let stale = manifest.stale_done_stages(&paths.out_dir);
    let mut status = manifest.status.clone();
    for stage in &stale {
        // a done marker without its outputs gets recomputed
        status.remove(stage);
    }
    let mut stages = BTreeMap::new();
    let fail = |stage: &'static str,
                    error: PipelineError,
                    stages: &mut BTreeMap<String, StageState>| {
        stages.insert(stage.to_string(), StageState::Failed);
        SampleOutcome {
            id: paths.id.clone(),
            stages: stages.clone(),
            outcome: format!("failed:{stage}"),
            error: Some(error.to_string()),
        }
    };

    // --- maskvote
    if status.get("maskvote").map(String::as_str) == Some("done") {
        stages.insert("maskvote".into(), StageState::Cached);
    } else {
        match stage_maskvote(paths, &manifest, config) {
            Ok(()) => {
                stages.insert("maskvote".into(), StageState::Done);
                status.insert("maskvote".into(), "done".into());
            }
            Err(e) => return fail("maskvote", e, &mut stages),
        }
    }

    // --- repaint
    if status.get("repaint").map(String::as_str) == Some("done") {
        stages.insert("repaint".into(), StageState::Cached);
    } else {
        match stage_repaint(paths, &manifest, config) {
            Ok(()) => {
                stages.insert("repaint".into(), StageState::Done);
                status.insert("repaint".into(), "done".into());
            }
            Err(e) => {
                let _ = store_status(&paths.status_path(), &status);
                return fail("repaint", e, &mut stages);
            }
        }
    }

    // --- consistency
    let cached_consistency = status.get("consistency").cloned();
    let outcome = if let Some(prev) = cached_consistency.filter(|v| v == "kept" || v.starts_with("discarded")) {
        stages.insert("consistency".into(), StageState::Cached);
        prev
    } else {
        match stage_consistency(paths, &manifest, config, embedder) {
            Ok(true) => {
                stages.insert("consistency".into(), StageState::Done);
                status.insert("consistency".into(), "kept".into());
                "kept".to_string()
            }
            Ok(false) => {
                stages.insert("consistency".into(), StageState::Done);
                status
                    .insert("consistency".into(), "discarded:consistency".into());
                "discarded:consistency".to_string()
            }
            Err(e) => {
                let _ = store_status(&paths.status_path(), &status);
                return fail("consistency", e, &mut stages);
            }
        }
    };

    if let Err(e) = store_status(&paths.status_path(), &status) {
        return fail(
            "consistency",
            PipelineError::StageFailure {
                sample: paths.id.clone(),
                stage: "consistency",
                message: format!("status write failed: {e}"),
            },
            &mut stages,
        );
    }

    SampleOutcome {
        id: paths.id.clone(),
        stages,
        outcome,
        error: None,
    }
}

/// Runs maskvote -> repaint -> consistency for every sample under
/// `run_dir/samples/`, isolating per-sample failures. Completed stages are
/// skipped on rerun, leaving every byte on disk untouched.
pub fn run_pipeline(config: &RunConfig, run_dir: &Path) -> Result<RunReport, PipelineError> {
    config
        .validate()
        .map_err(PipelineError::RunDir)?;
    let samples_dir = run_dir.join("samples");
    if !samples_dir.exists() {
        return Err(PipelineError::RunDir(format!(
            "{} does not exist",
            samples_dir.display()
        )));
    }
    let mut ids: Vec<String> = std::fs::read_dir(&samples_dir)
        .map_err(|e| PipelineError::RunDir(e.to_string()))?
        .filter_map(|entry| {
            let entry = entry.ok()?;
            entry
                .file_type()
                .ok()?
                .is_dir()
                .then(|| entry.file_name().to_string_lossy().into_owned())
        })
        .collect();
    ids.sort();

    let embedder = build_embedder(&config.embedder)?;
    let sample_paths: Vec<SamplePaths> = ids
        .iter()
        .map(|id| SamplePaths {
            id: id.clone(),
            sample_dir: samples_dir.join(id),
            out_dir: run_dir.join("out").join(id),
            rejected_dir: run_dir.join("rejected").join(id),
        })
        .collect();

    let run = |paths: &SamplePaths| process_sample(paths, config, embedder.as_ref());
    let mut outcomes: Vec<SampleOutcome> = if config.jobs == 1 {
        sample_paths.iter().map(run).collect()
    } else if config.jobs == 0 {
        sample_paths.par_iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| PipelineError::RunDir(e.to_string()))?;
        pool.install(|| sample_paths.par_iter().map(run).collect())
    };
    outcomes.sort_by(|a, b| a.id.cmp(&b.id));

    let kept = outcomes.iter().filter(|o| o.outcome == "kept").count();
    let discarded = outcomes
        .iter()
        .filter(|o| o.outcome.starts_with("discarded"))
        .count();
    let failed = outcomes
        .iter()
        .filter(|o| o.outcome.starts_with("failed"))
        .count();
    Ok(RunReport {
        processed: outcomes.len(),
        kept,
        discarded,
        failed,
        samples: outcomes,
    })
}

/// FNV-1a over every file's relative path and contents, for byte-identity
/// checks across reruns.
pub fn hash_dir_tree(dir: &Path) -> u64 {
    fn walk(root: &Path, dir: &Path, files: &mut Vec<PathBuf>) {
        let Ok(entries) = std::fs::read_dir(dir) else {
            return;
        };
        for entry in entries.flatten() {
            let path = entry.path();
            if path.is_dir() {
                walk(root, &path, files);
            } else {
                files.push(path);
            }
        }
        let _ = root;
    }
    let mut files = Vec::new();
    walk(dir, dir, &mut files);
    files.sort();
    let mut hash = 0xcbf29ce484222325u64;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
    };
    for file in &files {
        let rel = file.strip_prefix(dir).unwrap_or(file);
        eat(rel.to_string_lossy().as_bytes());
        eat(&std::fs::read(file).unwrap_or_default());
    }
    hash
}
