//! Deterministic rendering of meshes from the fixed view protocol plus the
//! 2D metric suite (PSNR, SSIM, embedding cosine) and the post-edit
//! consistency filter.

pub mod embed;
pub mod quality;
pub mod raster;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embed::{
    EmbedError, EmbedderPort, FileEmbedder, PROXY_EMBED_DIM, ProxyEmbedder, consistency_filter,
    embed_cosine, mean_set_cosine,
};
pub use quality::{PSNR_CAP_DB, QualityError, psnr, ssim};
pub use raster::{DepthBuffer, Image, rasterize, silhouette_mask};

use crate::geom::{GeomError, TriMesh, ring_views};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// View protocol for 2D evaluation: a 10-view ring at 20 degrees elevation.
pub const EVAL_VIEW_COUNT: usize = 10;
pub const EVAL_ELEVATION_DEG: f64 = 20.0;
pub const EVAL_RADIUS: f64 = 2.5;
pub const EVAL_FOV_DEG: f64 = 60.0;
pub const EVAL_IMAGE_SIZE: u32 = 256;
const EVAL_LIGHT: [f64; 3] = [0.4, 1.0, 0.6];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Eval2DReport {
    pub psnr: f64,
    pub ssim: f64,
    /// Proxy or externally supplied embedding cosine; labeled "embed-I"
    /// because the built-in embedder is not a pretrained vision model.
    pub embed_i: f64,
    /// Reserved: populated only by external perceptual-metric tooling.
    pub lpips: Option<f64>,
    pub view_count: usize,
    pub per_view_psnr: Vec<f64>,
    pub per_view_ssim: Vec<f64>,
    pub per_view_embed: Vec<f64>,
}

/// Renders both meshes from the same fixed ring and reports mean PSNR, SSIM,
/// and embedding cosine across views.
pub fn eval_2d(
    pred: &TriMesh,
    gt: &TriMesh,
    embedder: &dyn EmbedderPort,
) -> Result<Eval2DReport, RenderError> {
    eval_2d_with_views(pred, gt, embedder, EVAL_VIEW_COUNT, EVAL_IMAGE_SIZE)
}

pub fn eval_2d_with_views(
    pred: &TriMesh,
    gt: &TriMesh,
    embedder: &dyn EmbedderPort,
    n_views: usize,
    image_size: u32,
) -> Result<Eval2DReport, RenderError> {
    let views = ring_views(
        n_views,
        EVAL_ELEVATION_DEG,
        EVAL_RADIUS,
        EVAL_FOV_DEG,
        image_size,
    );
    // renders parallelize across views; each view is single-threaded
    let rendered: Vec<(Image, Image)> = views
        .par_iter()
        .map(|view| {
            let (img_pred, _) = rasterize(pred, view, EVAL_LIGHT)?;
            let (img_gt, _) = rasterize(gt, view, EVAL_LIGHT)?;
            Ok::<_, RenderError>((img_pred, img_gt))
        })
        .collect::<Result<_, _>>()?;

    let mut per_view_psnr = Vec::with_capacity(n_views);
    let mut per_view_ssim = Vec::with_capacity(n_views);
    let mut per_view_embed = Vec::with_capacity(n_views);
    for (img_pred, img_gt) in &rendered {
        per_view_psnr.push(psnr(img_pred, img_gt)?);
        per_view_ssim.push(ssim(img_pred, img_gt)?);
        per_view_embed.push(embed_cosine(img_pred, img_gt, embedder)?);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(Eval2DReport {
        psnr: mean(&per_view_psnr),
        ssim: mean(&per_view_ssim),
        embed_i: mean(&per_view_embed),
        lpips: None,
        view_count: n_views,
        per_view_psnr,
        per_view_ssim,
        per_view_embed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::shapes::unit_cube_mesh;

    #[test]
    fn self_evaluation_is_perfect() {
        let mesh = unit_cube_mesh();
        let embedder = ProxyEmbedder::new();
        let report = eval_2d_with_views(&mesh, &mesh, &embedder, 4, 64).unwrap();
        assert_eq!(report.psnr, PSNR_CAP_DB);
        assert_eq!(report.ssim, 1.0);
        assert!((report.embed_i - 1.0).abs() < 1e-6);
        assert_eq!(report.view_count, 4);
        assert!(report.lpips.is_none());
    }

    #[test]
    fn report_defaults_to_ten_views() {
        let mesh = unit_cube_mesh();
        let embedder = ProxyEmbedder::new();
        let report = eval_2d_with_views(&mesh, &mesh, &embedder, 10, 64).unwrap();
        assert_eq!(report.view_count, 10);
        assert_eq!(report.per_view_psnr.len(), 10);
    }

    #[test]
    fn rotated_asymmetric_mesh_scores_below_one() {
        // L-shaped solid: a cube with another shifted cube attached
        let mut mesh = unit_cube_mesh();
        let arm = unit_cube_mesh();
        let base = mesh.vertices.len();
        for v in &arm.vertices {
            mesh.vertices.push([v[0] * 0.5 + 0.45, v[1] * 0.5, v[2] * 0.5 + 0.3]);
        }
        for t in &arm.triangles {
            mesh.triangles.push([t[0] + base, t[1] + base, t[2] + base]);
        }
        // rotate 180 degrees about the vertical axis
        let mut rotated = mesh.clone();
        for v in &mut rotated.vertices {
            *v = [-v[0], v[1], -v[2]];
        }
        // flip winding so face normals stay outward
        for t in &mut rotated.triangles {
            t.swap(1, 2);
        }
        let embedder = ProxyEmbedder::new();
        let report = eval_2d_with_views(&rotated, &mesh, &embedder, 4, 96).unwrap();
        assert!(report.ssim < 1.0);
        assert!(report.psnr < PSNR_CAP_DB);
    }
}
