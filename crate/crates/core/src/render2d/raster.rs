//! Deterministic software rasterizer: z-buffered Lambert shading on a white
//! background, pixel centers sampled at (x + 0.5, y + 0.5).

use crate::geom::mask::Mask2D;
use crate::geom::vec3::{self, Vec3};
use crate::geom::{GeomError, TriMesh, View};

/// 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Image {
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity((width as usize) * (height as usize) * 3);
        for _ in 0..(width as usize) * (height as usize) {
            pixels.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, GeomError> {
        if pixels.len() != (width as usize) * (height as usize) * 3 {
            return Err(GeomError::DimOverflow(format!(
                "pixel buffer {} != 3 * {width} * {height}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = ((y as usize) * (self.width as usize) + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = ((y as usize) * (self.width as usize) + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Rec. 601 luma in [0, 255].
    #[inline]
    pub fn luma(&self, x: u32, y: u32) -> f64 {
        let [r, g, b] = self.get(x, y);
        0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
    }

    pub fn save_png(&self, path: &std::path::Path) -> Result<(), GeomError> {
        let img = image::RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("buffer length is validated");
        img.save(path)?;
        Ok(())
    }

    pub fn load_png(path: &std::path::Path) -> Result<Self, GeomError> {
        let img = image::open(path)?.to_rgb8();
        let (width, height) = img.dimensions();
        Ok(Self {
            width,
            height,
            pixels: img.into_raw(),
        })
    }
}

/// Depth per pixel; `f64::INFINITY` where nothing was drawn.
#[derive(Debug, Clone)]
pub struct DepthBuffer {
    pub width: u32,
    pub height: u32,
    pub depths: Vec<f64>,
}

impl DepthBuffer {
    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.depths[(y as usize) * (self.width as usize) + x as usize]
    }

    pub fn covered_count(&self) -> usize {
        self.depths.iter().filter(|d| d.is_finite()).count()
    }
}

/// Renders with flat Lambert shading lit from `light_dir` (world frame).
/// Back faces shade by the absolute cosine so winding does not punch holes.
pub fn rasterize(
    mesh: &TriMesh,
    view: &View,
    light_dir: Vec3,
) -> Result<(Image, DepthBuffer), GeomError> {
    if mesh.triangles.is_empty() {
        return Err(GeomError::EmptyMesh);
    }
    let (w, h) = (view.width, view.height);
    let mut image = Image::filled(w, h, [255, 255, 255]);
    let mut depth = DepthBuffer {
        width: w,
        height: h,
        depths: vec![f64::INFINITY; (w as usize) * (h as usize)],
    };
    let light = vec3::normalize(light_dir).unwrap_or([0.0, 0.0, 1.0]);

    for t in 0..mesh.triangles.len() {
        let tri_world = mesh.triangle_vertices(t);
        // camera-frame vertices
        let cam: Vec<Vec3> = tri_world
            .iter()
            .map(|&p| vec3::add(vec3::mat3_mul_vec(&view.rotation, p), view.translation))
            .collect();
        // Whole-triangle near-plane rejection keeps the projection math sane;
        // partial clipping is unnecessary for origin-centered ring captures.
        if cam.iter().any(|c| c[2] <= 1e-9) {
            continue;
        }
        let project = |c: Vec3| -> (f64, f64, f64) {
            (
                view.fx * c[0] / c[2] + view.cx,
                view.fy * c[1] / c[2] + view.cy,
                c[2],
            )
        };
        let (x0, y0, z0) = project(cam[0]);
        let (x1, y1, z1) = project(cam[1]);
        let (x2, y2, z2) = project(cam[2]);

        let area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
        if area.abs() < 1e-12 {
            continue;
        }

        let normal = vec3::normalize(mesh.face_normal_raw(t)).unwrap_or([0.0, 0.0, 1.0]);
        let lambert = vec3::dot(normal, light).abs();
        let shade = (40.0 + 200.0 * lambert).round().clamp(0.0, 255.0) as u8;
        let rgb = [shade, shade, shade];

        let min_x = x0.min(x1).min(x2).floor().max(0.0) as i64;
        let max_x = x0.max(x1).max(x2).ceil().min(w as f64 - 1.0) as i64;
        let min_y = y0.min(y1).min(y2).floor().max(0.0) as i64;
        let max_y = y0.max(y1).max(y2).ceil().min(h as f64 - 1.0) as i64;
        if min_x > max_x || min_y > max_y {
            continue;
        }

        let inv_area = 1.0 / area;
        for py in min_y..=max_y {
            for px in min_x..=max_x {
                let sx = px as f64 + 0.5;
                let sy = py as f64 + 0.5;
                let w0 = ((x1 - sx) * (y2 - sy) - (x2 - sx) * (y1 - sy)) * inv_area;
                let w1 = ((x2 - sx) * (y0 - sy) - (x0 - sx) * (y2 - sy)) * inv_area;
                let w2 = 1.0 - w0 - w1;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                // perspective-correct depth via interpolated 1/z
                let inv_z = w0 / z0 + w1 / z1 + w2 / z2;
                let z = 1.0 / inv_z;
                let idx = (py as usize) * (w as usize) + px as usize;
                if z < depth.depths[idx] {
                    depth.depths[idx] = z;
                    image.set(px as u32, py as u32, rgb);
                }
            }
        }
    }
    Ok((image, depth))
}

/// Binary coverage of the rendered mesh (pixels with finite depth).
pub fn silhouette_mask(mesh: &TriMesh, view: &View) -> Result<Mask2D, GeomError> {
    let (_, depth) = rasterize(mesh, view, [0.4, 1.0, 0.6])?;
    let mut mask = Mask2D::new(view.width, view.height);
    for y in 0..view.height {
        for x in 0..view.width {
            if depth.get(x, y).is_finite() {
                mask.set(x, y, true);
            }
        }
    }
    Ok(mask)
}
