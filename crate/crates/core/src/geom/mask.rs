//! Binary 2D masks with PNG ingestion (luminance > 127 counts as set).

use std::path::Path;

use super::GeomError;

#[derive(Debug, Clone, PartialEq)]
pub struct Mask2D {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Mask2D {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; (width as usize) * (height as usize)],
        }
    }

    pub fn filled(width: u32, height: u32, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; (width as usize) * (height as usize)],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y as usize) * (self.width as usize) + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[(y as usize) * (self.width as usize) + x as usize] = value;
    }

    /// Pixel-coordinate membership: true iff the containing pixel exists and
    /// is set. Out-of-image coordinates are simply misses.
    #[inline]
    pub fn contains_point(&self, u: f64, v: f64) -> bool {
        if !u.is_finite() || !v.is_finite() || u < 0.0 || v < 0.0 {
            return false;
        }
        let (x, y) = (u.floor() as u64, v.floor() as u64);
        if x >= self.width as u64 || y >= self.height as u64 {
            return false;
        }
        self.get(x as u32, y as u32)
    }

    pub fn set_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Square (Chebyshev) dilation by `radius` pixels, as two separable
    /// passes.
    pub fn dilate_px(&self, radius: u32) -> Self {
        if radius == 0 {
            return self.clone();
        }
        let r = radius as i64;
        let (w, h) = (self.width as i64, self.height as i64);
        let mut horiz = Self::new(self.width, self.height);
        for y in 0..h {
            for x in 0..w {
                if self.get(x as u32, y as u32) {
                    let lo = (x - r).max(0);
                    let hi = (x + r).min(w - 1);
                    for nx in lo..=hi {
                        horiz.set(nx as u32, y as u32, true);
                    }
                }
            }
        }
        let mut out = Self::new(self.width, self.height);
        for x in 0..w {
            for y in 0..h {
                if horiz.get(x as u32, y as u32) {
                    let lo = (y - r).max(0);
                    let hi = (y + r).min(h - 1);
                    for ny in lo..=hi {
                        out.set(x as u32, ny as u32, true);
                    }
                }
            }
        }
        out
    }

    pub fn load_png(path: &Path) -> Result<Self, GeomError> {
        let img = image::open(path)?.to_luma8();
        let (width, height) = img.dimensions();
        let bits = img.pixels().map(|p| p.0[0] > 127).collect();
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<(), GeomError> {
        let mut img = image::GrayImage::new(self.width, self.height);
        for (i, px) in img.pixels_mut().enumerate() {
            px.0[0] = if self.bits[i] { 255 } else { 0 };
        }
        img.save(path)?;
        Ok(())
    }
}
