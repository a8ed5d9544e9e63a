//! Multi-view rendering of normalized meshes.
//!
//! Views are grouped into rings: latitude rings of the 7-ring layout, or the
//! camera setups of the 48-view layout. Every ring in a [`RingSet`] holds the
//! same number of uniformly spaced azimuths.

mod camera;
mod raster;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use camera::{
    orbit_pose, ring_camera_poses, ring_subset_poses, thp_camera_poses, CameraFrame, CameraPose,
    DEFAULT_DISTANCE, DEFAULT_FOV_DEG, RING_COUNT,
};
pub use raster::{rasterize, Raster, BACKGROUND_SHADED};

use crate::error::{Error, Result};
use crate::image::ViewImage;
use crate::mesh::Mesh;

pub const DEFAULT_RESOLUTION: usize = 224;
pub const MIN_RESOLUTION: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViewLayout {
    /// Subset of the 7 latitude rings, `views_per_ring` azimuths each.
    Rings {
        rings: Vec<usize>,
        views_per_ring: usize,
    },
    /// Four 12-view camera setups (48 views).
    FourSetups,
}

impl ViewLayout {
    /// Rings 2, 3 and 4 with 12 views each.
    pub fn default_rings() -> Self {
        ViewLayout::Rings {
            rings: vec![2, 3, 4],
            views_per_ring: 12,
        }
    }

    /// 21 perspectives: rings 2, 3, 4 with 7 azimuths each.
    pub fn twenty_one() -> Self {
        ViewLayout::Rings {
            rings: vec![2, 3, 4],
            views_per_ring: 7,
        }
    }

    pub fn poses(&self, distance: f64) -> Result<Vec<CameraPose>> {
        match self {
            ViewLayout::Rings {
                rings,
                views_per_ring,
            } => ring_subset_poses(rings, *views_per_ring, distance),
            ViewLayout::FourSetups => thp_camera_poses(distance),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderStyle {
    Shaded,
    Silhouette,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub layout: ViewLayout,
    pub resolution: usize,
    pub distance: f64,
    pub fov_deg: f64,
    pub style: RenderStyle,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            layout: ViewLayout::default_rings(),
            resolution: DEFAULT_RESOLUTION,
            distance: DEFAULT_DISTANCE,
            fov_deg: DEFAULT_FOV_DEG,
            style: RenderStyle::Shaded,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub pose: CameraPose,
    pub image: ViewImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RingSet {
    pub object_id: String,
    pub rings: BTreeMap<usize, Vec<RenderedView>>,
}

impl RingSet {
    pub fn view_count(&self) -> usize {
        self.rings.values().map(Vec::len).sum()
    }

    pub fn ring(&self, ring: usize) -> Result<&[RenderedView]> {
        self.rings
            .get(&ring)
            .map(Vec::as_slice)
            .ok_or(Error::MissingRing(ring))
    }

    /// Applies `f` to every view image, keeping poses and grouping.
    pub fn map_images(&self, f: impl Fn(&ViewImage) -> ViewImage) -> RingSet {
        RingSet {
            object_id: self.object_id.clone(),
            rings: self
                .rings
                .iter()
                .map(|(&k, views)| {
                    let mapped = views
                        .iter()
                        .map(|v| RenderedView {
                            pose: v.pose,
                            image: f(&v.image),
                        })
                        .collect();
                    (k, mapped)
                })
                .collect(),
        }
    }
}

fn check_resolution(resolution: usize) -> Result<()> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::InvalidArgument(format!(
            "resolution {resolution} below minimum {MIN_RESOLUTION}"
        )));
    }
    Ok(())
}

/// Flat-shaded view on a grey background.
pub fn render_shaded(mesh: &Mesh, pose: &CameraPose, resolution: usize) -> Result<ViewImage> {
    render_shaded_fov(mesh, pose, resolution, DEFAULT_FOV_DEG)
}

pub fn render_shaded_fov(
    mesh: &Mesh,
    pose: &CameraPose,
    resolution: usize,
    fov_deg: f64,
) -> Result<ViewImage> {
    check_resolution(resolution)?;
    Ok(rasterize(mesh, pose, resolution, fov_deg)?.to_shaded())
}

/// Binary coverage mask: 255 where any triangle covers the pixel center.
pub fn render_silhouette(mesh: &Mesh, pose: &CameraPose, resolution: usize) -> Result<ViewImage> {
    render_silhouette_fov(mesh, pose, resolution, DEFAULT_FOV_DEG)
}

pub fn render_silhouette_fov(
    mesh: &Mesh,
    pose: &CameraPose,
    resolution: usize,
    fov_deg: f64,
) -> Result<ViewImage> {
    check_resolution(resolution)?;
    Ok(rasterize(mesh, pose, resolution, fov_deg)?.to_silhouette())
}

pub fn render_view(mesh: &Mesh, pose: &CameraPose, config: &RenderConfig) -> Result<ViewImage> {
    match config.style {
        RenderStyle::Shaded => render_shaded_fov(mesh, pose, config.resolution, config.fov_deg),
        RenderStyle::Silhouette => {
            render_silhouette_fov(mesh, pose, config.resolution, config.fov_deg)
        }
    }
}

/// Renders every pose of the configured layout. Views are rendered in
/// parallel; the result does not depend on scheduling.
pub fn render_rings(mesh: &Mesh, config: &RenderConfig) -> Result<RingSet> {
    check_resolution(config.resolution)?;
    let poses = config.layout.poses(config.distance)?;
    let images: Vec<ViewImage> = poses
        .par_iter()
        .map(|pose| render_view(mesh, pose, config))
        .collect::<Result<_>>()?;
    let mut rings: BTreeMap<usize, Vec<RenderedView>> = BTreeMap::new();
    for (pose, image) in poses.into_iter().zip(images) {
        rings
            .entry(pose.ring_index)
            .or_default()
            .push(RenderedView { pose, image });
    }
    Ok(RingSet {
        object_id: mesh.id.clone(),
        rings,
    })
}
