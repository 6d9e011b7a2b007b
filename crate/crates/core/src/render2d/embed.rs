//! Image embedders behind a port: a built-in seeded projection proxy for
//! offline runs, and a file-backed reader for externally computed embeddings.

use std::path::PathBuf;

use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::raster::Image;
use crate::geom::read_tensor;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedder failure: {0}")]
    EmbedderFailure(String),
    #[error("image sets have different view counts: {0} vs {1}")]
    SizeMismatch(usize, usize),
}

/// Deterministic image embedder producing unit vectors of a fixed width.
pub trait EmbedderPort: Sync {
    fn embed(&self, image: &Image) -> Result<Vec<f32>, EmbedError>;
    fn width(&self) -> usize;
}

pub const PROXY_EMBED_DIM: usize = 256;
const PROXY_GRID: usize = 32;
/// Seed pinning the proxy's random projection; part of the output contract.
const PROXY_SEED: u64 = 0x45564b30; // "EVK0"

/// Proxy embedder: 32x32 grayscale box-downsample, a constant bias feature,
/// a fixed seeded random projection to 256 dims, then L2 normalization.
/// A stand-in for a pretrained embedding model, clearly labeled as such.
pub struct ProxyEmbedder {
    // [PROXY_GRID * PROXY_GRID + 1][PROXY_EMBED_DIM] row-major
    projection: Vec<f32>,
}

impl Default for ProxyEmbedder {
    fn default() -> Self {
        Self::new()
    }
}

impl ProxyEmbedder {
    pub fn new() -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(PROXY_SEED);
        let rows = PROXY_GRID * PROXY_GRID + 1;
        let mut projection = Vec::with_capacity(rows * PROXY_EMBED_DIM);
        for _ in 0..rows * PROXY_EMBED_DIM {
            let u1: f64 = rng.random::<f64>().max(1e-300);
            let u2: f64 = rng.random();
            let n = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            projection.push(n as f32);
        }
        Self { projection }
    }

    fn downsample(image: &Image) -> Vec<f64> {
        let (w, h) = (image.width() as usize, image.height() as usize);
        let mut cells = vec![0.0f64; PROXY_GRID * PROXY_GRID];
        for gy in 0..PROXY_GRID {
            let y0 = gy * h / PROXY_GRID;
            let y1 = ((gy + 1) * h / PROXY_GRID).max(y0 + 1).min(h);
            for gx in 0..PROXY_GRID {
                let x0 = gx * w / PROXY_GRID;
                let x1 = ((gx + 1) * w / PROXY_GRID).max(x0 + 1).min(w);
                let mut sum = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        sum += image.luma(x as u32, y as u32);
                    }
                }
                cells[gy * PROXY_GRID + gx] =
                    sum / (((y1 - y0) * (x1 - x0)) as f64 * 255.0);
            }
        }
        cells
    }
}

impl EmbedderPort for ProxyEmbedder {
    fn embed(&self, image: &Image) -> Result<Vec<f32>, EmbedError> {
        let cells = Self::downsample(image);
        let mut out = vec![0.0f64; PROXY_EMBED_DIM];
        for (row, &value) in cells.iter().chain(std::iter::once(&1.0)).enumerate() {
            if value == 0.0 {
                continue;
            }
            let base = row * PROXY_EMBED_DIM;
            for (o, p) in out
                .iter_mut()
                .zip(&self.projection[base..base + PROXY_EMBED_DIM])
            {
                *o += value * (*p as f64);
            }
        }
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(EmbedError::EmbedderFailure("zero-norm embedding".into()));
        }
        Ok(out.iter().map(|v| (v / norm) as f32).collect())
    }

    fn width(&self) -> usize {
        PROXY_EMBED_DIM
    }
}

/// Reads pre-computed embeddings from `<dir>/<fnv1a64(rgb bytes)>.evk`.
pub struct FileEmbedder {
    dir: PathBuf,
    width: usize,
}

impl FileEmbedder {
    pub fn new(dir: PathBuf, width: usize) -> Self {
        Self { dir, width }
    }

    pub fn image_key(image: &Image) -> String {
        let mut hash = 0xcbf29ce484222325u64;
        for &b in image.pixels() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
        for v in [image.width(), image.height()] {
            for b in v.to_le_bytes() {
                hash ^= b as u64;
                hash = hash.wrapping_mul(0x100000001b3);
            }
        }
        format!("{hash:016x}")
    }
}

impl EmbedderPort for FileEmbedder {
    fn embed(&self, image: &Image) -> Result<Vec<f32>, EmbedError> {
        let path = self.dir.join(format!("{}.evk", Self::image_key(image)));
        let blob = read_tensor(&path)
            .map_err(|e| EmbedError::EmbedderFailure(format!("{}: {e}", path.display())))?;
        let mut v: Vec<f32> = blob.data().to_vec();
        if v.len() != self.width {
            return Err(EmbedError::EmbedderFailure(format!(
                "embedding width {} != expected {}",
                v.len(),
                self.width
            )));
        }
        let norm = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(EmbedError::EmbedderFailure("zero-norm embedding".into()));
        }
        if (norm - 1.0).abs() > 1e-6 {
            for x in &mut v {
                *x = (*x as f64 / norm) as f32;
            }
        }
        Ok(v)
    }

    fn width(&self) -> usize {
        self.width
    }
}

/// Cosine similarity of two image embeddings (dot product of unit vectors).
pub fn embed_cosine(a: &Image, b: &Image, embedder: &dyn EmbedderPort) -> Result<f64, EmbedError> {
    let ea = embedder.embed(a)?;
    let eb = embedder.embed(b)?;
    if ea.len() != eb.len() {
        return Err(EmbedError::SizeMismatch(ea.len(), eb.len()));
    }
    Ok(ea
        .iter()
        .zip(&eb)
        .map(|(&x, &y)| x as f64 * y as f64)
        .sum::<f64>())
}

/// Keeps a pair iff its mean per-view cosine reaches the threshold. Returns
/// indices of kept pairs.
pub fn consistency_filter(
    pairs: &[(Vec<Image>, Vec<Image>)],
    embedder: &dyn EmbedderPort,
    threshold: f64,
) -> Result<Vec<usize>, EmbedError> {
    let mut kept = Vec::new();
    for (idx, (set_a, set_b)) in pairs.iter().enumerate() {
        if mean_set_cosine(set_a, set_b, embedder)? >= threshold {
            kept.push(idx);
        }
    }
    Ok(kept)
}

/// Mean per-view cosine between two equally sized image sets.
pub fn mean_set_cosine(
    set_a: &[Image],
    set_b: &[Image],
    embedder: &dyn EmbedderPort,
) -> Result<f64, EmbedError> {
    if set_a.len() != set_b.len() || set_a.is_empty() {
        return Err(EmbedError::SizeMismatch(set_a.len(), set_b.len()));
    }
    let mut sum = 0.0;
    for (a, b) in set_a.iter().zip(set_b) {
        sum += embed_cosine(a, b, embedder)?;
    }
    Ok(sum / set_a.len() as f64)
}
