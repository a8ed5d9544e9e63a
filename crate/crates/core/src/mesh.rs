//! Triangle meshes: Wavefront OBJ ingestion, bounding boxes, box normalization
//! and axis rotations.
//!
//! Only the geometric subset of OBJ is understood (`v` and `f`). Texture
//! coordinates, normals, groups and materials are skipped.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Indexed triangle mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub id: String,
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn extents(&self) -> Vec3 {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    pub fn center(&self) -> Vec3 {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        ]
    }

    pub fn max_extent(&self) -> f64 {
        let e = self.extents();
        e[0].max(e[1]).max(e[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

/// A single reorientation step, e.g. the 90 degree fix about X applied to
/// objects stored lying on their side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    pub axis: Axis,
    pub degrees: f64,
}

impl Mesh {
    /// Builds a mesh, checking index bounds and coordinate finiteness.
    pub fn new(
        id: impl Into<String>,
        vertices: Vec<Vec3>,
        triangles: Vec<[u32; 3]>,
    ) -> Result<Self> {
        let n = vertices.len();
        if let Some(v) = vertices.iter().find(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidMesh(format!("non-finite vertex {v:?}")));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i as usize >= n) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} references vertex {} but the mesh has {n} vertices",
                    bad as usize + 1
                )));
            }
        }
        Ok(Self {
            id: id.into(),
            vertices,
            triangles,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    /// Appends another mesh, offsetting its indices.
    pub fn append(&mut self, other: &Mesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles.extend(
            other
                .triangles
                .iter()
                .map(|t| [t[0] + base, t[1] + base, t[2] + base]),
        );
    }

    pub fn map_vertices(&self, f: impl Fn(Vec3) -> Vec3) -> Mesh {
        Mesh {
            id: self.id.clone(),
            vertices: self.vertices.iter().map(|&v| f(v)).collect(),
            triangles: self.triangles.clone(),
        }
    }
}

/// Parses the `v`/`f` subset of ASCII Wavefront OBJ.
///
/// Faces use 1-based indices (negative indices count back from the most
/// recent vertex); `i/j/k` index groups keep only the position index.
/// Polygons with more than three corners are fan-triangulated around the
/// first corner.
pub fn parse_obj(id: impl Into<String>, bytes: &[u8]) -> Result<Mesh> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        line: 0,
        message: format!("not valid UTF-8: {e}"),
    })?;
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<(usize, Vec<i64>)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        let Some(tag) = tokens.next() else { continue };
        match tag {
            "v" => {
                let coords: Vec<&str> = tokens.collect();
                if coords.len() < 3 || coords.len() > 4 {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("vertex needs 3 coordinates, found {}", coords.len()),
                    });
                }
                let mut p = [0.0; 3];
                for (slot, tok) in p.iter_mut().zip(&coords) {
                    *slot = tok.parse::<f64>().map_err(|_| Error::Parse {
                        line: line_no,
                        message: format!("bad coordinate '{tok}'"),
                    })?;
                    if !slot.is_finite() {
                        return Err(Error::Parse {
                            line: line_no,
                            message: format!("non-finite coordinate '{tok}'"),
                        });
                    }
                }
                vertices.push(p);
            }
            "f" => {
                let mut idx = Vec::new();
                for tok in tokens {
                    let head = tok.split('/').next().unwrap_or("");
                    let i: i64 = head.parse().map_err(|_| Error::Parse {
                        line: line_no,
                        message: format!("bad face index '{tok}'"),
                    })?;
                    if i == 0 {
                        return Err(Error::Parse {
                            line: line_no,
                            message: "face index 0 is invalid (OBJ is 1-based)".into(),
                        });
                    }
                    // Relative indices resolve against vertices seen so far.
                    let resolved = if i < 0 {
                        vertices.len() as i64 + i + 1
                    } else {
                        i
                    };
                    idx.push(resolved);
                }
                if idx.len() < 3 {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("face needs at least 3 indices, found {}", idx.len()),
                    });
                }
                faces.push((line_no, idx));
            }
            _ => {}
        }
    }

    if vertices.len() < 3 {
        return Err(Error::InvalidMesh(format!(
            "mesh needs at least 3 vertices, found {}",
            vertices.len()
        )));
    }

    let n = vertices.len() as i64;
    let mut triangles = Vec::new();
    for (line_no, idx) in faces {
        if let Some(bad) = idx.iter().find(|&&i| i < 1 || i > n) {
            return Err(Error::InvalidMesh(format!(
                "face on line {line_no} references vertex {bad}, mesh has {n} vertices"
            )));
        }
        let zero: Vec<u32> = idx.iter().map(|&i| (i - 1) as u32).collect();
        for k in 1..zero.len() - 1 {
            triangles.push([zero[0], zero[k], zero[k + 1]]);
        }
    }

    Mesh::new(id, vertices, triangles)
}

/// Serializes a mesh as OBJ. Coordinates use the shortest round-trip
/// representation, so parsing the output reproduces the mesh exactly.
pub fn write_obj(mesh: &Mesh) -> String {
    let mut out = String::with_capacity(32 * (mesh.vertices.len() + mesh.triangles.len()));
    let _ = writeln!(out, "# {}", mesh.id);
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
    }
    for t in &mesh.triangles {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out
}

pub fn bounding_box(mesh: &Mesh) -> Result<Aabb> {
    let mut it = mesh.vertices.iter();
    let first = *it
        .next()
        .ok_or_else(|| Error::InvalidMesh("bounding box of an empty mesh".into()))?;
    let mut min = first;
    let mut max = first;
    for v in it {
        for a in 0..3 {
            min[a] = min[a].min(v[a]);
            max[a] = max[a].max(v[a]);
        }
    }
    Ok(Aabb { min, max })
}

/// Centers the mesh on its bounding-box center and rescales it uniformly so
/// the largest extent is exactly 2, i.e. it fits a 2x2x2 box around the origin.
pub fn normalize_to_box(mesh: &Mesh) -> Result<Mesh> {
    let bb = bounding_box(mesh)?;
    let max_extent = bb.max_extent();
    if !(max_extent > 0.0) || !max_extent.is_finite() {
        return Err(Error::DegenerateMesh(format!(
            "'{}' has zero extent in every axis",
            mesh.id
        )));
    }
    let c = bb.center();
    let s = 2.0 / max_extent;
    Ok(mesh.map_vertices(|v| [(v[0] - c[0]) * s, (v[1] - c[1]) * s, (v[2] - c[2]) * s]))
}

/// Rotates every vertex about a coordinate axis (right-handed, counterclockwise
/// when looking down the positive axis).
pub fn rotate_about_axis(mesh: &Mesh, axis: Axis, degrees: f64) -> Mesh {
    let m = rotation_matrix(axis, degrees);
    mesh.map_vertices(|v| {
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    })
}

pub fn apply_rotations(mesh: &Mesh, rotations: &[Rotation]) -> Mesh {
    rotations.iter().fold(mesh.clone(), |m, r| {
        rotate_about_axis(&m, r.axis, r.degrees)
    })
}

fn rotation_matrix(axis: Axis, degrees: f64) -> [[f64; 3]; 3] {
    let (s, c) = degrees.to_radians().sin_cos();
    match axis {
        Axis::X => [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]],
        Axis::Y => [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
        Axis::Z => [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::distance;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mesh(seed: u64, n: usize) -> Mesh {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vertices: Vec<Vec3> = (0..n)
            .map(|_| {
                [
                    rng.random_range(-3.0..5.0),
                    rng.random_range(-1.0..2.0),
                    rng.random_range(0.0..0.5),
                ]
            })
            .collect();
        let triangles = (0..n as u32 - 2).map(|i| [i, i + 1, i + 2]).collect();
        Mesh::new("rand", vertices, triangles).unwrap()
    }

    #[test]
    fn parses_minimal_triangle() {
        let m = parse_obj("t", b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3").unwrap();
        assert_eq!(m.vertex_count(), 3);
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
    }

    #[test]
    fn quad_is_fan_triangulated() {
        let src = b"v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        let m = parse_obj("q", src).unwrap();
        // Fan around the first corner: (1,2,3), (1,3,4) in 1-based terms.
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn out_of_range_face_is_structural_error() {
        let err = parse_obj("bad", b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9").unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_)), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_obj("bad", b"v 0 0 0\nv 1 zero 0\nv 0 1 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn ignores_other_directives_and_slashes() {
        let src =
            b"o thing\nvn 0 0 1\nvt 0 0\nv 0 0 0\nv 1 0 0\nv 0 1 0\nusemtl x\nf 1/1/1 2/2/1 3//1\n";
        let m = parse_obj("t", src).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
    }

    #[test]
    fn negative_indices_are_relative() {
        let m = parse_obj("t", b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1").unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
    }

    #[test]
    fn bbox_of_unit_cube_and_single_vertex() {
        let mut verts = Vec::new();
        for i in 0..8 {
            verts.push([(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64]);
        }
        let cube = Mesh::new("cube", verts, vec![]).unwrap();
        let bb = bounding_box(&cube).unwrap();
        assert_eq!(bb.min, [0.0, 0.0, 0.0]);
        assert_eq!(bb.max, [1.0, 1.0, 1.0]);

        let single = Mesh::new("p", vec![[2.0, 3.0, 4.0]], vec![]).unwrap();
        let bb = bounding_box(&single).unwrap();
        assert_eq!(bb.min, [2.0, 3.0, 4.0]);
        assert_eq!(bb.max, [2.0, 3.0, 4.0]);

        let empty = Mesh::new("e", vec![], vec![]).unwrap();
        assert!(bounding_box(&empty).is_err());
    }

    #[test]
    fn bbox_matches_loop_oracle() {
        let m = random_mesh(7, 100);
        let bb = bounding_box(&m).unwrap();
        for a in 0..3 {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for v in &m.vertices {
                if v[a] < lo {
                    lo = v[a];
                }
                if v[a] > hi {
                    hi = v[a];
                }
            }
            assert_eq!(bb.min[a], lo);
            assert_eq!(bb.max[a], hi);
        }
    }

    #[test]
    fn normalize_substitutes_into_resize_formula() {
        let m = Mesh::new("b", vec![[0.0, 0.0, 0.0], [4.0, 2.0, 1.0]], vec![]).unwrap();
        let n = normalize_to_box(&m).unwrap();
        let e = bounding_box(&n).unwrap().extents();
        assert!((e[0] - 2.0).abs() < 1e-12);
        assert!((e[1] - 1.0).abs() < 1e-12);
        assert!((e[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn normalize_identity_on_centered_2_box() {
        let m = Mesh::new(
            "b",
            vec![[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0], [0.3, -0.2, 0.9]],
            vec![],
        )
        .unwrap();
        let n = normalize_to_box(&m).unwrap();
        for (a, b) in m.vertices.iter().zip(&n.vertices) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalize_random_mesh_postconditions() {
        let m = random_mesh(3, 60);
        let before = bounding_box(&m).unwrap().extents();
        let n = normalize_to_box(&m).unwrap();
        let bb = bounding_box(&n).unwrap();
        let after = bb.extents();
        assert!((bb.max_extent() - 2.0).abs() < 1e-9);
        let ratio = after[0] / before[0];
        for k in 0..3 {
            assert!((after[k] / before[k] - ratio).abs() < 1e-9);
            assert!(bb.center()[k].abs() < 1e-9);
        }
    }

    #[test]
    fn normalize_degenerate_is_error() {
        let m = Mesh::new("p", vec![[1.0, 1.0, 1.0]; 3], vec![[0, 1, 2]]).unwrap();
        assert!(matches!(
            normalize_to_box(&m),
            Err(Error::DegenerateMesh(_))
        ));
    }

    #[test]
    fn rotate_y_axis_to_z_about_x() {
        let m = Mesh::new("p", vec![[0.0, 1.0, 0.0]], vec![]).unwrap();
        let r = rotate_about_axis(&m, Axis::X, 90.0);
        let v = r.vertices[0];
        assert!(v[0].abs() < 1e-9 && v[1].abs() < 1e-9 && (v[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn full_turn_and_four_quarter_turns_are_identity() {
        let m = random_mesh(11, 30);
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            let full = rotate_about_axis(&m, axis, 360.0);
            let quarters = (0..4).fold(m.clone(), |acc, _| rotate_about_axis(&acc, axis, 90.0));
            for ((a, b), c) in m
                .vertices
                .iter()
                .zip(&full.vertices)
                .zip(&quarters.vertices)
            {
                assert!(distance(*a, *b) < 1e-9);
                assert!(distance(*a, *c) < 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(seed in 0u64..1000) {
            let m = random_mesh(seed, 12);
            let once = normalize_to_box(&m).unwrap();
            let twice = normalize_to_box(&once).unwrap();
            for (a, b) in once.vertices.iter().zip(&twice.vertices) {
                for k in 0..3 {
                    prop_assert!((a[k] - b[k]).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn rotation_preserves_pairwise_distances(seed in 0u64..1000, deg in -720.0f64..720.0, ax in 0usize..3) {
            let axis = [Axis::X, Axis::Y, Axis::Z][ax];
            let m = random_mesh(seed, 8);
            let r = rotate_about_axis(&m, axis, deg);
            for i in 0..m.vertices.len() {
                for j in i + 1..m.vertices.len() {
                    let d0 = distance(m.vertices[i], m.vertices[j]);
                    let d1 = distance(r.vertices[i], r.vertices[j]);
                    prop_assert!((d0 - d1).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn obj_round_trip_preserves_mesh(seed in 0u64..1000, n in 3usize..40) {
            let m = random_mesh(seed, n);
            let text = write_obj(&m);
            let back = parse_obj("rand", text.as_bytes()).unwrap();
            prop_assert_eq!(back.vertex_count(), m.vertex_count());
            prop_assert_eq!(back.triangle_count(), m.triangle_count());
            prop_assert_eq!(back.vertices, m.vertices);
        }
    }
}
