//! PSNR and SSIM over 8-bit RGB images.

use super::raster::Image;
use crate::pairwise_sum;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QualityError {
    #[error("image sizes differ: {0}x{1} vs {2}x{3}")]
    SizeMismatch(u32, u32, u32, u32),
    #[error("image too small for an 11x11 window")]
    TooSmall,
}

/// PSNR cap reported when the MSE is exactly zero.
pub const PSNR_CAP_DB: f64 = 99.0;

/// `10 log10(255^2 / MSE)` with the MSE taken over all three channels.
pub fn psnr(a: &Image, b: &Image) -> Result<f64, QualityError> {
    check_sizes(a, b)?;
    let sq: Vec<f64> = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .collect();
    let mse = pairwise_sum(&sq) / sq.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Mean local SSIM on the luminance channel: 11x11 Gaussian window with
/// sigma 1.5, C1 = (0.01*255)^2, C2 = (0.03*255)^2, valid windows only.
pub fn ssim(a: &Image, b: &Image) -> Result<f64, QualityError> {
    check_sizes(a, b)?;
    let (w, h) = (a.width() as usize, a.height() as usize);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(QualityError::TooSmall);
    }
    let kernel = gaussian_kernel();

    let luma_plane = |img: &Image| -> Vec<f64> {
        let mut plane = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                plane.push(img.luma(x as u32, y as u32));
            }
        }
        plane
    };
    let la = luma_plane(a);
    let lb = luma_plane(b);

    // Separable convolution of the five statistics planes: horizontal pass
    // into (w - 10) x h, then vertical into (w - 10) x (h - 10).
    let planes = [
        la.clone(),
        lb.clone(),
        la.iter().map(|v| v * v).collect::<Vec<f64>>(),
        lb.iter().map(|v| v * v).collect::<Vec<f64>>(),
        la.iter().zip(&lb).map(|(x, y)| x * y).collect::<Vec<f64>>(),
    ];
    let out_w = w - SSIM_WINDOW + 1;
    let out_h = h - SSIM_WINDOW + 1;
    let convolved: Vec<Vec<f64>> = planes
        .iter()
        .map(|plane| {
            let mut horiz = vec![0.0; out_w * h];
            for y in 0..h {
                for x in 0..out_w {
                    let mut s = 0.0;
                    for (k, &kv) in kernel.iter().enumerate() {
                        s += kv * plane[y * w + x + k];
                    }
                    horiz[y * out_w + x] = s;
                }
            }
            let mut full = vec![0.0; out_w * out_h];
            for y in 0..out_h {
                for x in 0..out_w {
                    let mut s = 0.0;
                    for (k, &kv) in kernel.iter().enumerate() {
                        s += kv * horiz[(y + k) * out_w + x];
                    }
                    full[y * out_w + x] = s;
                }
            }
            full
        })
        .collect();

    let (mu_a, mu_b, e_aa, e_bb, e_ab) = (
        &convolved[0],
        &convolved[1],
        &convolved[2],
        &convolved[3],
        &convolved[4],
    );
    let values: Vec<f64> = (0..out_w * out_h)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (var_a + var_b + SSIM_C2))
        })
        .collect();
    Ok(pairwise_sum(&values) / values.len() as f64)
}

fn check_sizes(a: &Image, b: &Image) -> Result<(), QualityError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(QualityError::SizeMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ));
    }
    Ok(())
}
