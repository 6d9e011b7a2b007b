//! Pinhole cameras and the origin-centered ring used by the view protocols.
//!
//! Convention: camera frame has x right, y down, z forward (points in front of
//! the camera have positive z), pixel origin at the image's top-left corner.

use serde::{Deserialize, Serialize};

use super::vec3::{self, Mat3, Vec3};

/// Intrinsics plus world-to-camera pose: `p_cam = R * p_world + t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    #[serde(rename = "R")]
    pub rotation: Mat3,
    #[serde(rename = "t")]
    pub translation: Vec3,
}

impl View {
    /// World-space camera center `-Rᵀ t`.
    pub fn camera_center(&self) -> Vec3 {
        let rt = vec3::mat3_transpose(&self.rotation);
        vec3::scale(vec3::mat3_mul_vec(&rt, self.translation), -1.0)
    }

    pub fn orthonormality_residual(&self) -> f64 {
        vec3::orthonormality_residual(&self.rotation)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(format!("focal lengths must be positive, got {}/{}", self.fx, self.fy));
        }
        if self.width == 0 || self.height == 0 {
            return Err("image size must be at least 1x1".into());
        }
        let residual = self.orthonormality_residual();
        if residual > 1e-9 {
            return Err(format!("rotation is not orthonormal (residual {residual:.2e})"));
        }
        Ok(())
    }
}

/// Cameras at uniform azimuths on a circle of the given elevation and radius,
/// all looking at the origin. `fx = fy` is derived from the vertical field of
/// view and the (square) image size; the principal point sits at the center.
pub fn ring_views(n: usize, elevation_deg: f64, radius: f64, fov_deg: f64, image_size: u32) -> Vec<View> {
    assert!(n >= 1, "need at least one view");
    assert!(fov_deg > 0.0 && fov_deg < 180.0, "fov must be in (0, 180)");
    assert!(radius > 0.0, "radius must be positive");
    let f = (image_size as f64 / 2.0) / (fov_deg.to_radians() / 2.0).tan();
    let c = image_size as f64 / 2.0;
    let el = elevation_deg.to_radians();
    (0..n)
        .map(|i| {
            let az = 2.0 * std::f64::consts::PI * (i as f64) / (n as f64);
            let eye = [
                radius * el.cos() * az.cos(),
                radius * el.sin(),
                radius * el.cos() * az.sin(),
            ];
            let (rotation, translation) = look_at_origin(eye);
            View {
                fx: f,
                fy: f,
                cx: c,
                cy: c,
                width: image_size,
                height: image_size,
                rotation,
                translation,
            }
        })
        .collect()
}

/// World-to-camera pose for a camera at `eye` looking at the origin with
/// world +y as up.
fn look_at_origin(eye: Vec3) -> (Mat3, Vec3) {
    let forward = vec3::normalize(vec3::scale(eye, -1.0)).expect("eye must not be the origin");
    let up = [0.0, 1.0, 0.0];
    // Straight-down views degenerate against +y; nudge with +x instead.
    let right = vec3::normalize(vec3::cross(forward, up))
        .unwrap_or_else(|| vec3::normalize(vec3::cross(forward, [1.0, 0.0, 0.0])).unwrap());
    let down = vec3::cross(forward, right);
    let rotation = [
        right[0], right[1], right[2],
        down[0], down[1], down[2],
        forward[0], forward[1], forward[2],
    ];
    let translation = vec3::scale(vec3::mat3_mul_vec(&rotation, eye), -1.0);
    (rotation, translation)
}

/// Reads a JSON array of views: `[{fx, fy, cx, cy, width, height, R: [9], t: [3]}, ...]`.
pub fn load_views(path: &std::path::Path) -> Result<Vec<View>, super::GeomError> {
    let text = std::fs::read_to_string(path)?;
    let views: Vec<View> = serde_json::from_str(&text).map_err(|e| super::GeomError::ParseError {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    for (i, view) in views.iter().enumerate() {
        view.validate().map_err(|detail| super::GeomError::ParseError {
            path: path.display().to_string(),
            detail: format!("view {i}: {detail}"),
        })?;
    }
    Ok(views)
}

pub fn save_views(path: &std::path::Path, views: &[View]) -> Result<(), super::GeomError> {
    let text = serde_json::to_string_pretty(views).expect("views serialize");
    std::fs::write(path, text)?;
    Ok(())
}
