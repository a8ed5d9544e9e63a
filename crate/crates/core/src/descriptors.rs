//! Image descriptors and vector similarity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ViewImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptorTag {
    Hog,
    Grid,
    Embed,
}

impl DescriptorTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DescriptorTag::Hog => "hog",
            DescriptorTag::Grid => "grid",
            DescriptorTag::Embed => "embed",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            DescriptorTag::Hog => 1,
            DescriptorTag::Grid => 2,
            DescriptorTag::Embed => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(DescriptorTag::Hog),
            2 => Ok(DescriptorTag::Grid),
            3 => Ok(DescriptorTag::Embed),
            other => Err(Error::Format(format!("unknown descriptor code {other}"))),
        }
    }
}

impl std::fmt::Display for DescriptorTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub tag: DescriptorTag,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, tag: DescriptorTag) -> Self {
        Self { values, tag }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HogParams {
    pub cell: usize,
    pub block: usize,
    pub bins: usize,
}

impl Default for HogParams {
    fn default() -> Self {
        Self {
            cell: 8,
            block: 2,
            bins: 9,
        }
    }
}

impl HogParams {
    pub fn output_len(&self, width: usize, height: usize) -> usize {
        let (cx, cy) = (width / self.cell, height / self.cell);
        (cx + 1 - self.block) * (cy + 1 - self.block) * self.block * self.block * self.bins
    }
}

const HOG_EPS: f64 = 1e-6;

/// Histogram of oriented gradients.
///
/// Gradients are centered differences with clamped borders. Orientations are
/// unsigned (0..180 degrees) and vote into the two nearest bins, bin `b`
/// being centered on `b * 180 / bins`. Blocks of `block x block` cells slide
/// one cell at a time and are L2-normalized.
pub fn hog(img: &ViewImage, p: &HogParams) -> Result<FeatureVector> {
    let (w, h) = (img.width, img.height);
    if p.cell == 0 || p.bins == 0 || p.block == 0 {
        return Err(Error::InvalidArgument(format!(
            "invalid HOG parameters {p:?}"
        )));
    }
    if w % p.cell != 0 || h % p.cell != 0 {
        return Err(Error::InvalidArgument(format!(
            "image {w}x{h} is not divisible into {}-pixel cells",
            p.cell
        )));
    }
    let (cx, cy) = (w / p.cell, h / p.cell);
    if cx < p.block || cy < p.block {
        return Err(Error::InvalidArgument(format!(
            "image {w}x{h} has fewer cells than one {}x{} block",
            p.block, p.block
        )));
    }

    let at = |x: isize, y: isize| -> f64 {
        img.pixels[y.clamp(0, h as isize - 1) as usize * w + x.clamp(0, w as isize - 1) as usize]
            as f64
    };
    let bin_width = 180.0 / p.bins as f64;
    let mut cells = vec![0.0; cx * cy * p.bins];
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let gx = at(xi + 1, yi) - at(xi - 1, yi);
            let gy = at(xi, yi + 1) - at(xi, yi - 1);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let mut angle = gy.atan2(gx).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            if angle >= 180.0 {
                angle -= 180.0;
            }
            let pos = angle / bin_width;
            let lo = pos.floor() as usize % p.bins;
            let hi = (lo + 1) % p.bins;
            let frac = pos - pos.floor();
            let base = ((y / p.cell) * cx + x / p.cell) * p.bins;
            cells[base + lo] += mag * (1.0 - frac);
            cells[base + hi] += mag * frac;
        }
    }

    let mut out = Vec::with_capacity(p.output_len(w, h));
    for by in 0..=cy - p.block {
        for bx in 0..=cx - p.block {
            let start = out.len();
            for dy in 0..p.block {
                for dx in 0..p.block {
                    let base = ((by + dy) * cx + bx + dx) * p.bins;
                    out.extend_from_slice(&cells[base..base + p.bins]);
                }
            }
            let block = &mut out[start..];
            let norm = (block.iter().map(|v| v * v).sum::<f64>() + HOG_EPS * HOG_EPS).sqrt();
            block.iter_mut().for_each(|v| *v /= norm);
        }
    }
    Ok(FeatureVector::new(out, DescriptorTag::Hog))
}

pub const GRID_SIDE: usize = 4;

/// Share of total pixel mass in each cell of a 4x4 partition, row-major.
/// An all-zero image maps to the zero vector.
pub fn grid_feature(img: &ViewImage) -> FeatureVector {
    let (w, h) = (img.width, img.height);
    let mut sums = [0.0f64; GRID_SIDE * GRID_SIDE];
    for y in 0..h {
        let gy = (y * GRID_SIDE / h.max(1)).min(GRID_SIDE - 1);
        for x in 0..w {
            let gx = (x * GRID_SIDE / w.max(1)).min(GRID_SIDE - 1);
            sums[gy * GRID_SIDE + gx] += img.pixels[y * w + x] as f64;
        }
    }
    let total: f64 = sums.iter().sum();
    let values = if total > 0.0 {
        sums.iter().map(|s| s / total).collect()
    } else {
        vec![0.0; GRID_SIDE * GRID_SIDE]
    };
    FeatureVector::new(values, DescriptorTag::Grid)
}

fn check_len(u: &[f64], v: &[f64]) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    Ok(())
}

/// `u.v / (|u||v|)`; zero vectors have no defined similarity.
pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    check_len(u, v)?;
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

pub fn l2_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    check_len(u, v)?;
    Ok(u.iter()
        .zip(v)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Descriptor choice plus its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Descriptor {
    Grid,
    Hog {
        #[serde(default)]
        params: HogParams,
        /// Optional square resize applied before HOG to keep vectors compact.
        #[serde(default)]
        resize: Option<usize>,
    },
}

impl Descriptor {
    pub fn tag(&self) -> DescriptorTag {
        match self {
            Descriptor::Grid => DescriptorTag::Grid,
            Descriptor::Hog { .. } => DescriptorTag::Hog,
        }
    }

    /// Extracts features from a prepared content image (255 on 0).
    pub fn extract(&self, img: &ViewImage) -> Result<FeatureVector> {
        match self {
            Descriptor::Grid => Ok(grid_feature(img)),
            Descriptor::Hog { params, resize } => match resize {
                Some(s) if *s != img.width || *s != img.height => {
                    hog(&img.resize_nearest(*s, *s), params)
                }
                _ => hog(img, params),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageKind;
    use proptest::prelude::*;

    #[test]
    fn hog_of_constant_is_zero() {
        let img = ViewImage::filled(32, 32, 77, ImageKind::Shaded);
        let f = hog(&img, &HogParams::default()).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hog_length_for_224() {
        let img = ViewImage::filled(224, 224, 0, ImageKind::Sketch);
        let f = hog(&img, &HogParams::default()).unwrap();
        assert_eq!(f.len(), 27 * 27 * 4 * 9);
        assert_eq!(f.len(), 26_244);
    }

    #[test]
    fn hog_rejects_indivisible_dims() {
        let img = ViewImage::filled(30, 32, 0, ImageKind::Sketch);
        assert!(hog(&img, &HogParams::default()).is_err());
    }

    #[test]
    fn hog_vertical_step_votes_horizontal_bin() {
        let mut img = ViewImage::filled(32, 32, 0, ImageKind::Shaded);
        for y in 0..32 {
            for x in 12..32 {
                img.set(x, y, 200);
            }
        }
        // Recompute the per-cell histograms directly: gradient is purely along
        // x at columns 11 and 12, which lie in cell column 1.
        let p = HogParams::default();
        let f = hog(&img, &p).unwrap();
        // Block (0,0) contains cells (0,0),(1,0),(0,1),(1,1); cell (1,0) is the
        // second 9-bin group.
        let cell = &f.values[9..18];
        let total: f64 = cell.iter().sum();
        assert!(total > 0.0);
        assert!(cell[0] / total > 0.9, "{cell:?}");
    }

    #[test]
    fn grid_uniform_and_corner() {
        let full = ViewImage::filled(224, 224, 255, ImageKind::Sketch);
        assert!(grid_feature(&full)
            .values
            .iter()
            .all(|&v| (v - 0.0625).abs() < 1e-12));

        let mut corner = ViewImage::filled(224, 224, 0, ImageKind::Sketch);
        for y in 0..56 {
            for x in 0..56 {
                corner.set(x, y, 255);
            }
        }
        let g = grid_feature(&corner).values;
        assert_eq!(g[0], 1.0);
        assert!(g[1..].iter().all(|&v| v == 0.0));

        let empty = ViewImage::filled(224, 224, 0, ImageKind::Sketch);
        assert!(grid_feature(&empty).values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_sim(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine_sim(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        assert_eq!(format!("{c:.5}"), "0.70711");
        assert!(matches!(
            cosine_sim(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroVector)
        ));
        assert!(cosine_sim(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn l2_examples() {
        assert_eq!(l2_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(l2_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert!(l2_distance(&[0.0], &[3.0, 4.0]).is_err());
    }

    proptest! {
        #[test]
        fn grid_sums_to_one(pixels in proptest::collection::vec(any::<u8>(), 64 * 64)) {
            let img = ViewImage::from_pixels(64, 64, pixels, ImageKind::Sketch).unwrap();
            let g = grid_feature(&img).values;
            prop_assert!(g.iter().all(|&v| v >= 0.0));
            if img.count_on() > 0 {
                prop_assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn cosine_scale_invariant(
            u in proptest::collection::vec(-5.0f64..5.0, 6),
            v in proptest::collection::vec(-5.0f64..5.0, 6),
            c in 0.01f64..100.0,
        ) {
            prop_assume!(u.iter().any(|x| x.abs() > 1e-3) && v.iter().any(|x| x.abs() > 1e-3));
            let scaled: Vec<f64> = u.iter().map(|x| x * c).collect();
            let a = cosine_sim(&u, &v).unwrap();
            let b = cosine_sim(&scaled, &v).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&a));
        }

        #[test]
        fn l2_triangle_inequality(
            a in proptest::collection::vec(-5.0f64..5.0, 5),
            b in proptest::collection::vec(-5.0f64..5.0, 5),
            c in proptest::collection::vec(-5.0f64..5.0, 5),
        ) {
            let ab = l2_distance(&a, &b).unwrap();
            let bc = l2_distance(&b, &c).unwrap();
            let ac = l2_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
        }

        #[test]
        fn hog_ignores_additive_shift(pixels in proptest::collection::vec(0u8..200, 16 * 16), shift in 0u8..55) {
            let img = ViewImage::from_pixels(16, 16, pixels.clone(), ImageKind::Shaded).unwrap();
            let shifted = ViewImage::from_pixels(16, 16, pixels.iter().map(|p| p + shift).collect(), ImageKind::Shaded).unwrap();
            let p = HogParams::default();
            prop_assert_eq!(hog(&img, &p).unwrap(), hog(&shifted, &p).unwrap());
        }
    }
}
