//! Z-buffered perspective triangle rasterizer.
//!
//! Coverage is decided at pixel centers with inclusive edge tests, so
//! triangles sharing an edge never leave a crack between them.

use crate::error::Result;
use crate::geom::{add, cross, dot, normalize, scale, sub};
use crate::image::{ImageKind, ViewImage};
use crate::mesh::Mesh;

use super::camera::CameraPose;

pub const BACKGROUND_SHADED: u8 = 128;
const NEAR: f64 = 1e-3;
const EDGE_EPS: f64 = 1e-9;

/// Foreground intensity range. Kept well above the grey background so that
/// every outline has at least ~70 levels of contrast.
const SHADE_BASE: f64 = 200.0;
const SHADE_RANGE: f64 = 55.0;

/// Per-pixel output of the rasterizer.
pub struct Raster {
    pub width: usize,
    pub height: usize,
    /// Shade of the nearest surface, `None` for background.
    pub shade: Vec<Option<u8>>,
}

impl Raster {
    pub fn to_shaded(&self) -> ViewImage {
        let pixels = self
            .shade
            .iter()
            .map(|s| s.unwrap_or(BACKGROUND_SHADED))
            .collect();
        ViewImage::from_pixels(self.width, self.height, pixels, ImageKind::Shaded).expect("sized")
    }

    pub fn to_silhouette(&self) -> ViewImage {
        let pixels = self
            .shade
            .iter()
            .map(|s| if s.is_some() { 255 } else { 0 })
            .collect();
        ViewImage::from_pixels(self.width, self.height, pixels, ImageKind::Silhouette)
            .expect("sized")
    }
}

/// Rasterizes `mesh` seen from `pose` into a `resolution` x `resolution` frame.
pub fn rasterize(
    mesh: &Mesh,
    pose: &CameraPose,
    resolution: usize,
    fov_deg: f64,
) -> Result<Raster> {
    let frame = pose.frame()?;
    let w = resolution;
    let h = resolution;
    let t = (fov_deg.to_radians() / 2.0).tan();
    let mut depth = vec![f64::NEG_INFINITY; w * h]; // stores 1/z, larger is nearer
    let mut shade: Vec<Option<u8>> = vec![None; w * h];

    let cam: Vec<[f64; 3]> = mesh.vertices.iter().map(|&v| frame.to_camera(v)).collect();

    for tri in &mesh.triangles {
        let [a, b, c] = tri.map(|i| cam[i as usize]);
        if a[2] <= NEAR || b[2] <= NEAR || c[2] <= NEAR {
            continue;
        }
        let project = |p: [f64; 3]| -> [f64; 3] {
            let nx = p[0] / (p[2] * t);
            let ny = p[1] / (p[2] * t);
            [
                (nx + 1.0) * 0.5 * w as f64,
                (1.0 - ny) * 0.5 * h as f64,
                1.0 / p[2],
            ]
        };
        let (mut p0, mut p1, p2) = (project(a), project(b), project(c));
        let mut area = edge(p0, p1, p2);
        if area == 0.0 || !area.is_finite() {
            continue;
        }
        if area < 0.0 {
            std::mem::swap(&mut p0, &mut p1);
            area = -area;
        }

        // Headlight: light travels along the line of sight to the face.
        let wa = mesh.vertices[tri[0] as usize];
        let wb = mesh.vertices[tri[1] as usize];
        let wc = mesh.vertices[tri[2] as usize];
        let normal = normalize(cross(sub(wb, wa), sub(wc, wa)));
        let centroid = scale(add(add(wa, wb), wc), 1.0 / 3.0);
        let to_cam = normalize(sub(pose.position, centroid));
        let lambert = dot(normal, to_cam).abs();
        let intensity = (SHADE_BASE + SHADE_RANGE * lambert)
            .round()
            .clamp(0.0, 255.0) as u8;

        let min_x = p0[0].min(p1[0]).min(p2[0]).floor().max(0.0) as usize;
        let max_x = (p0[0].max(p1[0]).max(p2[0]).ceil() as isize).min(w as isize - 1);
        let min_y = p0[1].min(p1[1]).min(p2[1]).floor().max(0.0) as usize;
        let max_y = (p0[1].max(p1[1]).max(p2[1]).ceil() as isize).min(h as isize - 1);
        if max_x < 0 || max_y < 0 {
            continue;
        }
        let eps = EDGE_EPS * area;
        for y in min_y..=max_y as usize {
            let py = y as f64 + 0.5;
            for x in min_x..=max_x as usize {
                let p = [x as f64 + 0.5, py, 0.0];
                let w0 = edge(p1, p2, p);
                let w1 = edge(p2, p0, p);
                let w2 = edge(p0, p1, p);
                if w0 < -eps || w1 < -eps || w2 < -eps {
                    continue;
                }
                let inv_z = (w0 * p0[2] + w1 * p1[2] + w2 * p2[2]) / area;
                let idx = y * w + x;
                if inv_z > depth[idx] {
                    depth[idx] = inv_z;
                    shade[idx] = Some(intensity);
                }
            }
        }
    }

    Ok(Raster {
        width: w,
        height: h,
        shade,
    })
}

#[inline]
fn edge(a: [f64; 3], b: [f64; 3], p: [f64; 3]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}
