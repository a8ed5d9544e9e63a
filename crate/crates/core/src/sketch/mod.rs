//! Sketchification of rendered views and generation of augmented training
//! queries.
//!
//! Conventions: edge maps are 255 on 0. Sketches (as users draw them) are dark
//! strokes on a light page. [`crop_to_content`] takes the sketch convention
//! and returns a 255-on-0 content image ready for descriptors.

mod edges;
mod morph;
mod removal;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use edges::{canny, laplacian_edge};
pub use morph::{content_square, crop_to_content, dilate, invert};
pub use removal::{random_edge_removal, strokes};

use crate::error::{Error, Result};
use crate::image::{ImageKind, ViewImage};
use crate::render::RingSet;

pub const CROP_SIZE: usize = 224;
pub const CROP_PAD: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SketchMethod {
    Canny,
    Laplacian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SketchParams {
    pub method: SketchMethod,
    pub canny_low: f64,
    pub canny_high: f64,
    pub gaussian_sigma: f64,
    pub laplacian_threshold: f64,
    pub dilation_radius: usize,
}

impl Default for SketchParams {
    fn default() -> Self {
        Self {
            method: SketchMethod::Canny,
            canny_low: 50.0,
            canny_high: 150.0,
            gaussian_sigma: 1.4,
            laplacian_threshold: 30.0,
            dilation_radius: 1,
        }
    }
}

impl SketchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.canny_low < self.canny_high) {
            return Err(Error::InvalidArgument(format!(
                "canny_low ({}) must be below canny_high ({})",
                self.canny_low, self.canny_high
            )));
        }
        if self.canny_low < 0.0 || self.laplacian_threshold < 0.0 || self.gaussian_sigma < 0.0 {
            return Err(Error::InvalidArgument(
                "sketch thresholds must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Edge map of a rendered view with the given method. The Laplacian path
/// first reverses the grey-background render so it reads like a sketch page.
pub fn edge_map(view: &ViewImage, params: &SketchParams, method: SketchMethod) -> ViewImage {
    match method {
        SketchMethod::Canny => canny(view, params),
        SketchMethod::Laplacian => laplacian_edge(&invert(view), params),
    }
}

/// Rendered view to a dark-on-light sketch.
pub fn sketchify_view(view: &ViewImage, params: &SketchParams) -> ViewImage {
    invert(&edge_map(view, params, params.method)).with_kind(ImageKind::Sketch)
}

/// Dark-on-light sketch to the normalized content image descriptors consume:
/// crop and resize to 224x224 with 5 pixels of padding, then dilate.
pub fn prepare_sketch(sketch: &ViewImage, params: &SketchParams) -> Result<ViewImage> {
    prepare_sketch_sized(sketch, params, CROP_SIZE, CROP_PAD)
}

pub fn prepare_sketch_sized(
    sketch: &ViewImage,
    params: &SketchParams,
    size: usize,
    pad: usize,
) -> Result<ViewImage> {
    let cropped = crop_to_content(sketch, size, pad)?;
    dilate(&cropped, params.dilation_radius)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentParams {
    pub rings: Vec<usize>,
    pub ring_probs: Vec<f64>,
    pub edge_removal_fraction: f64,
    pub flip_prob: f64,
    pub rotation_range_deg: f64,
    pub queries_per_object: usize,
    /// Independently transformed copies generated for every sampled view.
    pub variants_per_query: usize,
    /// Number of object clusters for training pairs; 0 keeps one group per
    /// object. Within a cluster the sketches of the object with the most
    /// vertices stand in for every member.
    pub clusters: usize,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            rings: vec![2, 3, 4],
            ring_probs: vec![0.2, 0.6, 0.2],
            edge_removal_fraction: 0.2,
            flip_prob: 0.5,
            rotation_range_deg: 15.0,
            queries_per_object: 3,
            variants_per_query: 1,
            clusters: 0,
        }
    }
}

impl AugmentParams {
    pub fn validate(&self) -> Result<()> {
        if self.rings.is_empty() || self.rings.len() != self.ring_probs.len() {
            return Err(Error::InvalidArgument(
                "rings and ring_probs must have equal, nonzero length".into(),
            ));
        }
        if self.ring_probs.iter().any(|&p| !(0.0..=1.0).contains(&p))
            || (self.ring_probs.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidArgument(format!(
                "ring probabilities {:?} must lie in [0,1] and sum to 1",
                self.ring_probs
            )));
        }
        for (name, v) in [
            ("edge_removal_fraction", self.edge_removal_fraction),
            ("flip_prob", self.flip_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "{name} = {v} outside [0,1]"
                )));
            }
        }
        Ok(())
    }
}

/// Draws a ring index according to `ring_probs`.
pub fn sample_ring<R: Rng + ?Sized>(p: &AugmentParams, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (&ring, &prob) in p.rings.iter().zip(&p.ring_probs) {
        acc += prob;
        if u < acc {
            return ring;
        }
    }
    *p.rings.last().expect("validated non-empty")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformLog {
    pub method: SketchMethod,
    pub view: usize,
    pub flipped: bool,
    pub rotation_deg: f64,
    pub edge_removal_fraction: f64,
    pub variant: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingQuery {
    /// Dark-on-light sketch.
    pub image: ViewImage,
    pub object_id: String,
    pub ring: usize,
    pub transform: TransformLog,
}

/// Generates sketch-like training queries from an object's ring renders:
/// for each query a ring is drawn by `ring_probs`, a view uniformly within
/// it, and an edge method uniformly; every variant then gets a random flip,
/// rotation and stroke removal.
pub fn generate_training_queries<R: Rng + ?Sized>(
    rings: &RingSet,
    p: &AugmentParams,
    sketch: &SketchParams,
    rng: &mut R,
) -> Result<Vec<TrainingQuery>> {
    p.validate()?;
    for &r in &p.rings {
        if rings.ring(r)?.is_empty() {
            return Err(Error::MissingRing(r));
        }
    }
    let mut out = Vec::with_capacity(p.queries_per_object * p.variants_per_query);
    for _ in 0..p.queries_per_object {
        let ring = sample_ring(p, rng);
        let views = rings.ring(ring)?;
        let view = rng.random_range(0..views.len());
        let method = if rng.random_bool(0.5) {
            SketchMethod::Canny
        } else {
            SketchMethod::Laplacian
        };
        let edges = edge_map(&views[view].image, sketch, method);
        for variant in 0..p.variants_per_query.max(1) {
            let flipped = rng.random::<f64>() < p.flip_prob;
            let rotation_deg = if p.rotation_range_deg > 0.0 {
                rng.random_range(-p.rotation_range_deg..=p.rotation_range_deg)
            } else {
                0.0
            };
            let mut img = if flipped {
                edges.flip_horizontal()
            } else {
                edges.clone()
            };
            if rotation_deg != 0.0 {
                img = img.rotate(rotation_deg, 0);
            }
            img = random_edge_removal(&img, p.edge_removal_fraction, rng);
            out.push(TrainingQuery {
                image: invert(&img).with_kind(ImageKind::Sketch),
                object_id: rings.object_id.clone(),
                ring,
                transform: TransformLog {
                    method,
                    view,
                    flipped,
                    rotation_deg,
                    edge_removal_fraction: p.edge_removal_fraction,
                    variant,
                },
            });
        }
    }
    Ok(out)
}
