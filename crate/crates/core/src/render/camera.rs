use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{cross, dot, norm, normalize, sub, Vec3};

/// Vertical field of view used for every view layout.
pub const DEFAULT_FOV_DEG: f64 = 45.0;

/// Camera distance for meshes normalized into the 2x2x2 box. The bounding
/// sphere of such a mesh has radius at most sqrt(3), which stays inside a
/// 45 degree frustum from 4.6 units away.
pub const DEFAULT_DISTANCE: f64 = 4.6;

/// Number of latitude rings in the full ring layout (poles included).
pub const RING_COUNT: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    /// Ring (latitude) index, or camera-setup index for the four-setup layout.
    pub ring_index: usize,
    pub azimuth_index: usize,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
}

/// Orthonormal camera frame: `right`, `up`, and `forward` (pointing from the
/// camera toward the target).
#[derive(Debug, Clone, Copy)]
pub struct CameraFrame {
    pub origin: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    pub forward: Vec3,
}

impl CameraPose {
    pub fn frame(&self) -> Result<CameraFrame> {
        let dir = sub(self.look_at, self.position);
        if norm(dir) == 0.0 {
            return Err(Error::InvalidArgument(
                "camera position equals look-at point".into(),
            ));
        }
        let forward = normalize(dir);
        let right = cross(forward, self.up);
        if norm(right) < 1e-12 {
            return Err(Error::InvalidArgument(
                "camera up vector is parallel to the view direction".into(),
            ));
        }
        let right = normalize(right);
        let up = cross(right, forward);
        Ok(CameraFrame {
            origin: self.position,
            right,
            up,
            forward,
        })
    }
}

impl CameraFrame {
    /// World point to camera coordinates `(x right, y up, depth)`.
    #[inline]
    pub fn to_camera(&self, p: Vec3) -> Vec3 {
        let d = sub(p, self.origin);
        [dot(d, self.right), dot(d, self.up), dot(d, self.forward)]
    }
}

fn spherical(distance: f64, elevation_deg: f64, azimuth_deg: f64) -> Vec3 {
    let (se, ce) = elevation_deg.to_radians().sin_cos();
    let (sa, ca) = azimuth_deg.to_radians().sin_cos();
    [distance * ce * ca, distance * ce * sa, distance * se]
}

/// Ring layout: `ring_count` latitudes evenly spaced from the bottom pole
/// (ring 0) to the top pole, each with `views_per_ring` azimuths starting at 0.
/// Z is up; at the poles the up vector is fixed to +X.
pub fn ring_camera_poses(
    ring_count: usize,
    views_per_ring: usize,
    distance: f64,
) -> Result<Vec<CameraPose>> {
    if !(distance > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "camera distance must be positive, got {distance}"
        )));
    }
    if ring_count < 2 || views_per_ring == 0 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 rings and 1 view per ring, got {ring_count}x{views_per_ring}"
        )));
    }
    let mut poses = Vec::with_capacity(ring_count * views_per_ring);
    for ring in 0..ring_count {
        let elevation = -90.0 + 180.0 * ring as f64 / (ring_count - 1) as f64;
        for view in 0..views_per_ring {
            let azimuth = 360.0 * view as f64 / views_per_ring as f64;
            poses.push(ring_pose(ring, view, elevation, azimuth, distance));
        }
    }
    Ok(poses)
}

fn ring_pose(ring: usize, view: usize, elevation: f64, azimuth: f64, distance: f64) -> CameraPose {
    let mut position = spherical(distance, elevation, azimuth);
    let pole = (elevation.abs() - 90.0).abs() < 1e-9;
    if pole {
        position = [0.0, 0.0, distance * elevation.signum()];
    }
    CameraPose {
        position,
        look_at: [0.0; 3],
        up: if pole {
            [1.0, 0.0, 0.0]
        } else {
            [0.0, 0.0, 1.0]
        },
        ring_index: ring,
        azimuth_index: view,
        elevation_deg: elevation,
        azimuth_deg: azimuth,
    }
}

/// Camera at an arbitrary elevation and azimuth looking at the origin, for
/// views that fall between the layout's azimuths. `ring_index` is the
/// nearest ring of the 7-ring layout.
pub fn orbit_pose(elevation_deg: f64, azimuth_deg: f64, distance: f64) -> CameraPose {
    let ring = ((elevation_deg + 90.0) / 30.0)
        .round()
        .clamp(0.0, (RING_COUNT - 1) as f64) as usize;
    ring_pose(ring, 0, elevation_deg, azimuth_deg, distance)
}

/// Poses for a subset of rings of the 7-ring layout.
pub fn ring_subset_poses(
    rings: &[usize],
    views_per_ring: usize,
    distance: f64,
) -> Result<Vec<CameraPose>> {
    if let Some(&bad) = rings.iter().find(|&&r| r >= RING_COUNT) {
        return Err(Error::InvalidArgument(format!(
            "ring index {bad} outside 0..{RING_COUNT}"
        )));
    }
    Ok(ring_camera_poses(RING_COUNT, views_per_ring, distance)?
        .into_iter()
        .filter(|p| rings.contains(&p.ring_index))
        .collect())
}

/// Four camera setups of 12 views each (48 poses):
/// 0: orbit in the Oxy plane; 1: the same orbit raised 30 degrees above Oxy;
/// 2: orbit in the Oyz plane; 3: the Oyz orbit raised 30 degrees toward +X.
/// `elevation_deg` reports the angle above the Oxy plane.
pub fn thp_camera_poses(distance: f64) -> Result<Vec<CameraPose>> {
    if !(distance > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "camera distance must be positive, got {distance}"
        )));
    }
    let mut poses = Vec::with_capacity(48);
    let (s30, c30) = 30f64.to_radians().sin_cos();
    for setup in 0..4 {
        for view in 0..12 {
            let azimuth = 30.0 * view as f64;
            let (sa, ca) = azimuth.to_radians().sin_cos();
            let (position, up) = match setup {
                0 => ([distance * ca, distance * sa, 0.0], [0.0, 0.0, 1.0]),
                1 => (
                    [distance * c30 * ca, distance * c30 * sa, distance * s30],
                    [0.0, 0.0, 1.0],
                ),
                2 => ([0.0, distance * ca, distance * sa], [1.0, 0.0, 0.0]),
                _ => (
                    [distance * s30, distance * c30 * ca, distance * c30 * sa],
                    [1.0, 0.0, 0.0],
                ),
            };
            let elevation = (position[2] / distance)
                .clamp(-1.0, 1.0)
                .asin()
                .to_degrees();
            poses.push(CameraPose {
                position,
                look_at: [0.0; 3],
                up,
                ring_index: setup,
                azimuth_index: view,
                elevation_deg: elevation,
                azimuth_deg: azimuth,
            });
        }
    }
    Ok(poses)
}
