//! Single-channel 8-bit raster used for rendered views, edge maps and sketches.

use std::io::Cursor;
use std::path::Path;

use ::image::{GrayImage, ImageFormat, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageKind {
    Shaded,
    Silhouette,
    Edge,
    Sketch,
}

impl ImageKind {
    pub fn is_binary(self) -> bool {
        matches!(self, ImageKind::Silhouette | ImageKind::Edge)
    }
}

/// Row-major grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    pub kind: ImageKind,
}

impl ViewImage {
    pub fn filled(width: usize, height: usize, value: u8, kind: ImageKind) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
            kind,
        }
    }

    pub fn from_pixels(
        width: usize,
        height: usize,
        pixels: Vec<u8>,
        kind: ImageKind,
    ) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
            kind,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn with_kind(mut self, kind: ImageKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn is_binary(&self) -> bool {
        self.pixels.iter().all(|&p| p == 0 || p == 255)
    }

    pub fn count_on(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != 0).count()
    }

    pub fn mean(&self) -> f64 {
        if self.pixels.is_empty() {
            return 0.0;
        }
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.pixels.len() as f64
    }

    /// Mirror image about the vertical axis.
    pub fn flip_horizontal(&self) -> ViewImage {
        let mut out = self.clone();
        for y in 0..self.height {
            let row = &mut out.pixels[y * self.width..(y + 1) * self.width];
            row.reverse();
        }
        out
    }

    /// Nearest-neighbour rotation about the image center; uncovered pixels
    /// take `fill`.
    pub fn rotate(&self, degrees: f64, fill: u8) -> ViewImage {
        let (s, c) = degrees.to_radians().sin_cos();
        let cx = (self.width as f64 - 1.0) / 2.0;
        let cy = (self.height as f64 - 1.0) / 2.0;
        let mut out = ViewImage::filled(self.width, self.height, fill, self.kind);
        for y in 0..self.height {
            for x in 0..self.width {
                // Inverse mapping from destination to source.
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                let sx = c * dx + s * dy + cx;
                let sy = -s * dx + c * dy + cy;
                let (ix, iy) = (sx.round(), sy.round());
                if ix >= 0.0
                    && iy >= 0.0
                    && (ix as usize) < self.width
                    && (iy as usize) < self.height
                {
                    out.set(x, y, self.get(ix as usize, iy as usize));
                }
            }
        }
        out
    }

    /// Nearest-neighbour resize.
    pub fn resize_nearest(&self, width: usize, height: usize) -> ViewImage {
        let mut out = ViewImage::filled(width, height, 0, self.kind);
        for y in 0..height {
            let sy = ((y as f64 + 0.5) * self.height as f64 / height as f64) as usize;
            let sy = sy.min(self.height - 1);
            for x in 0..width {
                let sx = ((x as f64 + 0.5) * self.width as f64 / width as f64) as usize;
                out.set(x, y, self.get(sx.min(self.width - 1), sy));
            }
        }
        out
    }

    fn to_gray(&self) -> GrayImage {
        GrayImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .expect("pixel buffer matches dimensions")
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Cursor::new(Vec::new());
        self.to_gray().write_to(&mut buf, ImageFormat::Png)?;
        Ok(buf.into_inner())
    }

    /// Decodes any supported image (PNG, PNM) and converts it to 8-bit gray.
    pub fn from_encoded(bytes: &[u8], kind: ImageKind) -> Result<ViewImage> {
        let img = ::image::load_from_memory(bytes)?;
        let gray = flatten_alpha(img);
        let (w, h) = gray.dimensions();
        Ok(ViewImage {
            width: w as usize,
            height: h as usize,
            pixels: gray.into_raw(),
            kind,
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_png_bytes()?).at(path)
    }

    /// Binary PGM (P5).
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_pgm_bytes()).at(path)
    }

    pub fn load(path: &Path, kind: ImageKind) -> Result<ViewImage> {
        let bytes = std::fs::read(path).at(path)?;
        Self::from_encoded(&bytes, kind)
    }
}

/// Transparent pixels become white, so a drawing with an alpha channel reads
/// as dark strokes on a light page.
fn flatten_alpha(img: ::image::DynamicImage) -> GrayImage {
    if !img.color().has_alpha() {
        return img.to_luma8();
    }
    let la = img.to_luma_alpha8();
    let (w, h) = la.dimensions();
    GrayImage::from_fn(w, h, |x, y| {
        let p = la.get_pixel(x, y);
        let a = p[1] as u32;
        Luma([((p[0] as u32 * a + 255 * (255 - a)) / 255) as u8])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: usize, h: usize) -> ViewImage {
        let pixels = (0..w * h).map(|i| (i * 7 % 256) as u8).collect();
        ViewImage::from_pixels(w, h, pixels, ImageKind::Shaded).unwrap()
    }

    #[test]
    fn png_round_trip() {
        let img = gradient(13, 7);
        let back =
            ViewImage::from_encoded(&img.to_png_bytes().unwrap(), ImageKind::Shaded).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn pgm_round_trip() {
        let img = gradient(5, 9);
        let back = ViewImage::from_encoded(&img.to_pgm_bytes(), ImageKind::Shaded).unwrap();
        assert_eq!(back.pixels, img.pixels);
    }

    #[test]
    fn flip_twice_is_identity() {
        let img = gradient(10, 4);
        assert_eq!(img.flip_horizontal().flip_horizontal(), img);
        assert_eq!(img.flip_horizontal().get(0, 0), img.get(9, 0));
    }

    #[test]
    fn zero_rotation_is_identity() {
        let img = gradient(11, 11);
        assert_eq!(img.rotate(0.0, 0), img);
    }

    #[test]
    fn quarter_rotation_moves_corner() {
        let mut img = ViewImage::filled(5, 5, 0, ImageKind::Edge);
        img.set(4, 2, 255);
        let r = img.rotate(90.0, 0);
        // Rotating by +90 degrees in image coordinates (y down) maps the right
        // middle pixel to the bottom middle.
        assert_eq!(r.count_on(), 1);
        assert_eq!(r.get(2, 4), 255);
    }

    #[test]
    fn size_mismatch_rejected() {
        assert!(ViewImage::from_pixels(3, 3, vec![0; 8], ImageKind::Edge).is_err());
    }

    #[test]
    fn garbage_bytes_fail_to_decode() {
        assert!(ViewImage::from_encoded(b"not an image", ImageKind::Sketch).is_err());
    }
}
