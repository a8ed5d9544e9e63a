//! Procedurally generated meshes and toy training sets.
//!
//! The synthetic corpus stands in for a real collection of 3D models. The
//! first twenty shapes follow distinct body plans (animals, furniture,
//! plants, simple solids) built from ellipsoids, cylinders and boxes with
//! seeded proportions; further shapes are parametric quadrupeds.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embed::{ObjectFeatures, TrainingPair};
use crate::geom::{add, cross, normalize, scale, sub, Vec3};
use crate::mesh::Mesh;

/// Closed UV ellipsoid.
pub fn ellipsoid(id: &str, center: Vec3, radii: Vec3, stacks: usize, slices: usize) -> Mesh {
    let stacks = stacks.max(2);
    let slices = slices.max(3);
    let mut vertices = vec![[center[0], center[1], center[2] - radii[2]]];
    for i in 1..stacks {
        let theta = PI * i as f64 / stacks as f64 - PI / 2.0;
        let (st, ct) = theta.sin_cos();
        for j in 0..slices {
            let phi = 2.0 * PI * j as f64 / slices as f64;
            let (sp, cp) = phi.sin_cos();
            vertices.push([
                center[0] + radii[0] * ct * cp,
                center[1] + radii[1] * ct * sp,
                center[2] + radii[2] * st,
            ]);
        }
    }
    vertices.push([center[0], center[1], center[2] + radii[2]]);
    let top = (vertices.len() - 1) as u32;
    let ring = |i: usize, j: usize| (1 + (i - 1) * slices + j % slices) as u32;

    let mut triangles = Vec::new();
    for j in 0..slices {
        triangles.push([0, ring(1, j + 1), ring(1, j)]);
    }
    for i in 1..stacks - 1 {
        for j in 0..slices {
            let (a, b, c, d) = (
                ring(i, j),
                ring(i, j + 1),
                ring(i + 1, j),
                ring(i + 1, j + 1),
            );
            triangles.push([a, b, d]);
            triangles.push([a, d, c]);
        }
    }
    for j in 0..slices {
        triangles.push([top, ring(stacks - 1, j), ring(stacks - 1, j + 1)]);
    }
    Mesh {
        id: id.to_string(),
        vertices,
        triangles,
    }
}

pub fn uv_sphere(id: &str, center: Vec3, radius: f64, stacks: usize, slices: usize) -> Mesh {
    ellipsoid(id, center, [radius; 3], stacks, slices)
}

/// Closed axis-aligned box.
pub fn cuboid(id: &str, center: Vec3, half: Vec3) -> Mesh {
    let mut vertices = Vec::with_capacity(8);
    for i in 0..8 {
        let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
        let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
        let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
        vertices.push([
            center[0] + sx * half[0],
            center[1] + sy * half[1],
            center[2] + sz * half[2],
        ]);
    }
    let quads = [
        [0, 2, 3, 1],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 4, 6, 2],
        [1, 3, 7, 5],
    ];
    let mut triangles = Vec::with_capacity(12);
    for q in quads {
        triangles.push([q[0], q[1], q[2]]);
        triangles.push([q[0], q[2], q[3]]);
    }
    Mesh {
        id: id.to_string(),
        vertices,
        triangles,
    }
}

/// Capped cylinder from `a` to `b`.
pub fn cylinder(id: &str, a: Vec3, b: Vec3, radius: f64, segments: usize) -> Mesh {
    let segments = segments.max(3);
    let axis = normalize(sub(b, a));
    let helper = if axis[2].abs() < 0.9 {
        [0.0, 0.0, 1.0]
    } else {
        [1.0, 0.0, 0.0]
    };
    let u = normalize(cross(axis, helper));
    let v = cross(axis, u);
    let mut vertices = vec![a, b];
    for end in [a, b] {
        for k in 0..segments {
            let phi = 2.0 * PI * k as f64 / segments as f64;
            let (s, c) = phi.sin_cos();
            vertices.push(add(end, add(scale(u, radius * c), scale(v, radius * s))));
        }
    }
    let bottom = |k: usize| (2 + k % segments) as u32;
    let top = |k: usize| (2 + segments + k % segments) as u32;
    let mut triangles = Vec::new();
    for k in 0..segments {
        triangles.push([0, bottom(k + 1), bottom(k)]);
        triangles.push([1, top(k), top(k + 1)]);
        triangles.push([bottom(k), bottom(k + 1), top(k + 1)]);
        triangles.push([bottom(k), top(k + 1), top(k)]);
    }
    Mesh {
        id: id.to_string(),
        vertices,
        triangles,
    }
}

/// Proportions of one synthetic creature.
#[derive(Debug, Clone)]
pub struct CreatureParams {
    pub body: Vec3,
    pub leg_pairs: usize,
    pub leg_length: f64,
    pub leg_radius: f64,
    pub neck_length: f64,
    pub neck_angle_deg: f64,
    pub head_radius: f64,
    pub tail_length: f64,
    pub tail_angle_deg: f64,
    pub hump: Option<f64>,
    pub ears: bool,
    pub boxy: bool,
}

impl CreatureParams {
    /// Deterministic parameters for shape `index`; structural features cycle
    /// with the index and continuous proportions come from the seeded stream.
    pub fn for_index(index: usize, seed: u64) -> Self {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let leg_pairs = [2, 0, 1, 3, 2][index % 5];
        let body_len = 0.5 + 0.45 * (index % 4) as f64 + rng.random_range(0.0..0.1);
        let body_h = 0.2 + 0.2 * ((index / 4) % 4) as f64 + rng.random_range(0.0..0.05);
        CreatureParams {
            body: [body_len, 0.22 + rng.random_range(0.0..0.2), body_h],
            leg_pairs,
            leg_length: 0.1 + 0.5 * ((index / 2) % 3) as f64 + rng.random_range(0.0..0.1),
            leg_radius: 0.05 + rng.random_range(0.0..0.05),
            neck_length: [0.0, 0.5, 1.0][(index / 3) % 3] + rng.random_range(0.0..0.1),
            neck_angle_deg: [20.0, 50.0, 80.0][(index / 5) % 3] + rng.random_range(-5.0..5.0),
            head_radius: 0.14 + 0.1 * (index % 3) as f64 + rng.random_range(0.0..0.04),
            tail_length: [0.0, 0.4, 0.8, 1.2][(index / 6) % 4] + rng.random_range(0.0..0.1),
            tail_angle_deg: [-30.0, 10.0, 45.0][(index / 7) % 3],
            hump: if index % 6 == 4 {
                Some(0.2 + rng.random_range(0.0..0.1))
            } else {
                None
            },
            ears: index % 7 == 2 || index % 7 == 5,
            boxy: index % 8 == 3,
        }
    }
}

/// Builds the creature mesh (Z up, facing +X), not yet normalized.
pub fn creature(id: &str, p: &CreatureParams) -> Mesh {
    let [bl, bw, bh] = p.body;
    let mut mesh = if p.boxy {
        cuboid(id, [0.0, 0.0, 0.0], [bl, bw, bh])
    } else {
        ellipsoid(id, [0.0, 0.0, 0.0], [bl, bw, bh], 12, 20)
    };
    mesh.id = id.to_string();

    for pair in 0..p.leg_pairs {
        let x = if p.leg_pairs == 1 {
            0.0
        } else {
            -0.7 * bl + 1.4 * bl * pair as f64 / (p.leg_pairs - 1) as f64
        };
        for side in [-1.0, 1.0] {
            let top = [x, side * 0.6 * bw, -0.5 * bh];
            let foot = [x, side * 0.6 * bw, -0.5 * bh - p.leg_length];
            mesh.append(&cylinder(id, top, foot, p.leg_radius, 8));
        }
    }

    let (sn, cn) = p.neck_angle_deg.to_radians().sin_cos();
    let neck_base = [0.85 * bl, 0.0, 0.3 * bh];
    let neck_tip = add(neck_base, [p.neck_length * cn, 0.0, p.neck_length * sn]);
    if p.neck_length > 0.15 {
        mesh.append(&cylinder(
            id,
            neck_base,
            neck_tip,
            0.35 * p.head_radius + 0.03,
            8,
        ));
    }
    let head_center = add(neck_tip, [0.5 * p.head_radius, 0.0, 0.0]);
    mesh.append(&ellipsoid(
        id,
        head_center,
        [1.4 * p.head_radius, 0.8 * p.head_radius, p.head_radius],
        8,
        12,
    ));
    if p.ears {
        for side in [-1.0, 1.0] {
            let base = add(
                head_center,
                [0.0, side * 0.4 * p.head_radius, 0.7 * p.head_radius],
            );
            let tip = add(base, [-0.1, side * 0.05, 0.35]);
            mesh.append(&cylinder(id, base, tip, 0.04, 6));
        }
    }
    if p.tail_length > 0.05 {
        let (st, ct) = p.tail_angle_deg.to_radians().sin_cos();
        let base = [-0.95 * bl, 0.0, 0.2 * bh];
        let tip = add(base, [-p.tail_length * ct, 0.0, p.tail_length * st]);
        mesh.append(&cylinder(id, base, tip, 0.05, 6));
    }
    if let Some(h) = p.hump {
        mesh.append(&ellipsoid(
            id,
            [-0.1 * bl, 0.0, 0.8 * bh],
            [0.35 * bl, 0.6 * bw, h + 0.2 * bh],
            8,
            12,
        ));
    }
    mesh
}

pub fn object_id(index: usize) -> String {
    format!("obj{index:03}")
}

/// Number of distinct body plans in the corpus.
pub const BODY_PLANS: usize = 20;

fn merge(id: &str, parts: Vec<Mesh>) -> Mesh {
    let mut mesh = Mesh {
        id: id.to_string(),
        vertices: Vec::new(),
        triangles: Vec::new(),
    };
    for p in &parts {
        mesh.append(p);
    }
    mesh
}

/// Shape `plan` (taken modulo [`BODY_PLANS`]) built from primitives. `j`
/// scales its proportions by up to +-15 % per dimension.
pub fn body_plan(id: &str, plan: usize, rng: &mut ChaCha8Rng) -> Mesh {
    let mut j = || 1.0 + rng.random_range(-0.15..0.15);
    let (a, b, c) = (j(), j(), j());
    let legs = |x: &[f64], y: f64, top: f64, len: f64, r: f64| -> Vec<Mesh> {
        x.iter()
            .flat_map(|&x| [-y, y].map(|y| cylinder(id, [x, y, top], [x, y, top - len], r, 8)))
            .collect()
    };
    match plan % BODY_PLANS {
        // Blob.
        0 => ellipsoid(id, [0.0; 3], [1.0 * a, 0.9 * b, 0.8 * c], 12, 20),
        // Pillar.
        1 => cylinder(id, [0.0; 3], [0.0, 0.0, 2.0 * a], 0.25 * b, 16),
        // Chair: seat, backrest, four legs.
        2 => {
            let mut parts = vec![cuboid(id, [0.0; 3], [0.5 * a, 0.5 * a, 0.06])];
            parts.push(cuboid(
                id,
                [-0.45 * a, 0.0, 0.6 * b],
                [0.05, 0.5 * a, 0.6 * b],
            ));
            parts.extend(legs(&[-0.45 * a, 0.45 * a], 0.45 * a, 0.0, 0.8 * c, 0.05));
            merge(id, parts)
        }
        // Rocket: body, nose and three fins.
        3 => {
            let mut parts = vec![cylinder(id, [0.0; 3], [0.0, 0.0, 1.6 * a], 0.25 * b, 12)];
            parts.push(ellipsoid(
                id,
                [0.0, 0.0, 1.6 * a],
                [0.25 * b, 0.25 * b, 0.5 * c],
                8,
                12,
            ));
            for k in 0..3 {
                let phi = 2.0 * PI * k as f64 / 3.0;
                let (sp, cp) = phi.sin_cos();
                parts.push(cylinder(
                    id,
                    [0.2 * cp, 0.2 * sp, 0.5],
                    [0.6 * cp, 0.6 * sp, -0.1],
                    0.05,
                    6,
                ));
            }
            merge(id, parts)
        }
        // Giraffe: small body, long upright neck.
        4 => {
            let mut parts = vec![ellipsoid(id, [0.0; 3], [0.6 * a, 0.25, 0.3], 10, 16)];
            parts.extend(legs(&[-0.4, 0.4], 0.15, -0.2, 1.0 * b, 0.06));
            parts.push(cylinder(id, [0.5, 0.0, 0.2], [0.7, 0.0, 1.6 * c], 0.08, 8));
            parts.push(ellipsoid(
                id,
                [0.85, 0.0, 1.65 * c],
                [0.25, 0.1, 0.1],
                8,
                12,
            ));
            merge(id, parts)
        }
        // Table: slab on four tall legs.
        5 => {
            let mut parts = vec![cuboid(id, [0.0; 3], [1.0 * a, 0.7 * b, 0.06])];
            parts.extend(legs(&[-0.9 * a, 0.9 * a], 0.6 * b, 0.0, 1.0 * c, 0.06));
            merge(id, parts)
        }
        // Spider: small body, eight splayed legs.
        6 => {
            let mut parts = vec![uv_sphere(id, [0.0; 3], 0.3 * a, 10, 16)];
            for k in 0..8 {
                let phi = PI / 8.0 + 2.0 * PI * k as f64 / 8.0;
                let knee = [0.7 * b * phi.cos(), 0.7 * b * phi.sin(), 0.3];
                let foot = [1.1 * b * phi.cos(), 1.1 * b * phi.sin(), -0.4 * c];
                parts.push(cylinder(id, [0.0; 3], knee, 0.04, 6));
                parts.push(cylinder(id, knee, foot, 0.04, 6));
            }
            merge(id, parts)
        }
        // Bird with spread wings.
        7 => {
            let mut parts = vec![ellipsoid(id, [0.0; 3], [0.3, 0.25, 0.5 * a], 10, 16)];
            parts.push(uv_sphere(id, [0.05, 0.0, 0.65 * a], 0.18, 8, 12));
            parts.push(cylinder(
                id,
                [0.2, 0.0, 0.65 * a],
                [0.45, 0.0, 0.6 * a],
                0.04,
                6,
            ));
            parts.push(ellipsoid(
                id,
                [0.0, 0.8 * b, 0.2],
                [0.2, 0.7 * b, 0.04],
                8,
                12,
            ));
            parts.push(ellipsoid(
                id,
                [0.0, -0.8 * b, 0.2],
                [0.2, 0.7 * b, 0.04],
                8,
                12,
            ));
            parts.extend(legs(&[0.0], 0.1, -0.4, 0.4 * c, 0.03));
            merge(id, parts)
        }
        // Fish with tail and dorsal fins.
        8 => merge(
            id,
            vec![
                ellipsoid(id, [0.0; 3], [1.0 * a, 0.2, 0.35 * b], 10, 20),
                cuboid(id, [-1.1 * a, 0.0, 0.0], [0.15, 0.02, 0.45 * c]),
                cuboid(id, [0.0, 0.0, 0.4 * b], [0.3, 0.02, 0.15]),
            ],
        ),
        // Humanoid in a T pose.
        9 => {
            let mut parts = vec![cuboid(id, [0.0, 0.0, 0.0], [0.15, 0.3 * a, 0.45])];
            parts.push(uv_sphere(id, [0.0, 0.0, 0.65], 0.18 * c, 8, 12));
            parts.push(cylinder(id, [0.0, -0.3, 0.35], [0.0, -b, 0.35], 0.06, 8));
            parts.push(cylinder(
                id,
                [0.0, 0.3, 0.35],
                [0.0, 1.0 * b, 0.35],
                0.06,
                8,
            ));
            parts.extend(legs(&[0.0], 0.15, -0.45, 0.9, 0.08));
            merge(id, parts)
        }
        // Jack: three orthogonal bars of different lengths.
        10 => merge(
            id,
            vec![
                cylinder(id, [-a, 0.0, 0.0], [1.0 * a, 0.0, 0.0], 0.08, 8),
                cylinder(id, [0.0, -0.6 * b, 0.0], [0.0, 0.6 * b, 0.0], 0.08, 8),
                cylinder(id, [0.0, 0.0, -0.35 * c], [0.0, 0.0, 0.35 * c], 0.08, 8),
            ],
        ),
        // Dumbbell.
        11 => merge(
            id,
            vec![
                uv_sphere(id, [-a, 0.0, 0.0], 0.4 * b, 10, 16),
                uv_sphere(id, [1.0 * a, 0.0, 0.0], 0.25 * c, 10, 16),
                cylinder(id, [-a, 0.0, 0.0], [1.0 * a, 0.0, 0.0], 0.07, 8),
            ],
        ),
        // Stairs: three stacked steps.
        12 => {
            let parts = (0..3)
                .map(|k| {
                    let k = k as f64;
                    cuboid(
                        id,
                        [0.4 * a * k, 0.0, 0.3 * c * k],
                        [0.2 * a, 0.5 * b, 0.15 * c],
                    )
                })
                .collect();
            merge(id, parts)
        }
        // Arch.
        13 => merge(
            id,
            vec![
                cuboid(id, [-0.8, 0.0, 0.0], [0.2, 0.3 * b, 0.7 * a]),
                cuboid(id, [0.8, 0.0, 0.0], [0.2, 0.3 * b, 0.7 * a]),
                cuboid(id, [0.0, 0.0, 0.8 * a], [1.0 * c, 0.3 * b, 0.15]),
            ],
        ),
        // Tree: trunk and round canopy.
        14 => merge(
            id,
            vec![
                cylinder(id, [0.0; 3], [0.0, 0.0, 1.0 * a], 0.1, 8),
                uv_sphere(id, [0.0, 0.0, 1.0 * a + 0.5 * b], 0.6 * b, 10, 16),
            ],
        ),
        // Dog: the parametric quadruped.
        15 => creature(
            id,
            &CreatureParams {
                body: [0.9 * a, 0.3, 0.35 * b],
                leg_pairs: 2,
                leg_length: 0.5 * c,
                leg_radius: 0.08,
                neck_length: 0.35,
                neck_angle_deg: 45.0,
                head_radius: 0.22,
                tail_length: 0.5,
                tail_angle_deg: 30.0,
                hump: None,
                ears: true,
                boxy: false,
            },
        ),
        // Elephant: bulky body, thick legs, hanging trunk.
        16 => {
            let mut parts = vec![ellipsoid(id, [0.0; 3], [0.9 * a, 0.55, 0.6 * b], 10, 20)];
            parts.extend(legs(&[-0.5, 0.5], 0.3, -0.3, 0.6 * c, 0.18));
            parts.push(uv_sphere(id, [1.0 * a, 0.0, 0.3], 0.35, 10, 16));
            parts.push(cylinder(
                id,
                [1.25 * a, 0.0, 0.2],
                [1.35 * a, 0.0, -0.7],
                0.08,
                8,
            ));
            merge(id, parts)
        }
        // Kangaroo: tilted upright body, heavy tail.
        17 => merge(
            id,
            vec![
                ellipsoid(id, [0.0, 0.0, 0.5], [0.3, 0.25, 0.6 * a], 10, 16),
                uv_sphere(id, [0.15, 0.0, 1.25 * a], 0.18, 8, 12),
                cylinder(id, [-0.2, 0.0, 0.1], [-1.2 * b, 0.0, -0.3], 0.1, 8),
                cylinder(id, [0.0, 0.15, 0.1], [0.4 * c, 0.15, -0.4], 0.07, 8),
                cylinder(id, [0.0, -0.15, 0.1], [0.4 * c, -0.15, -0.4], 0.07, 8),
            ],
        ),
        // Hourglass.
        18 => merge(
            id,
            vec![
                ellipsoid(
                    id,
                    [0.0, 0.0, -0.5 * a],
                    [0.5 * b, 0.5 * b, 0.5 * a],
                    10,
                    16,
                ),
                ellipsoid(
                    id,
                    [0.0, 0.0, 0.5 * a],
                    [0.35 * c, 0.35 * c, 0.5 * a],
                    10,
                    16,
                ),
            ],
        ),
        // Mushroom: thin stalk, wide flat cap.
        _ => merge(
            id,
            vec![
                cylinder(id, [0.0; 3], [0.0, 0.0, 0.9 * a], 0.12, 8),
                ellipsoid(
                    id,
                    [0.0, 0.0, 0.9 * a],
                    [1.0 * b, 1.0 * b, 0.25 * c],
                    10,
                    20,
                ),
            ],
        ),
    }
}

/// `count` shapes with ids `obj000`, `obj001`, ...: object `i` uses body
/// plan `i % BODY_PLANS` with seeded proportions. Later laps over the plans
/// use the parametric quadruped with index-driven proportions instead.
pub fn creature_corpus(count: usize, seed: u64) -> Vec<Mesh> {
    (0..count)
        .map(|i| {
            let id = object_id(i);
            if i < BODY_PLANS {
                let mut rng = ChaCha8Rng::seed_from_u64(
                    seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                );
                body_plan(&id, i, &mut rng)
            } else {
                creature(&id, &CreatureParams::for_index(i, seed))
            }
        })
        .collect()
}

/// Shape of a separable toy set for contrastive training.
#[derive(Debug, Clone)]
pub struct ToySetSpec {
    pub groups: usize,
    pub sketches_per_group: usize,
    pub view_dim: usize,
    pub sketch_dim: usize,
    pub rings: usize,
    pub views_per_ring: usize,
    pub noise: f64,
    pub seed: u64,
}

/// Separable toy set: `groups` prototype objects, each with ring features
/// drawn around its prototype and `sketches_per_group` noisy sketch features
/// derived through a fixed random linear map (so the two modalities live in
/// different coordinate systems).
pub fn toy_contrastive_set(spec: &ToySetSpec) -> (Vec<ObjectFeatures>, Vec<TrainingPair>) {
    let ToySetSpec {
        groups,
        sketches_per_group,
        view_dim,
        sketch_dim,
        rings,
        views_per_ring,
        noise,
        seed,
    } = *spec;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = |rng: &mut ChaCha8Rng| -> f64 {
        // Box-Muller
        let u1: f64 = rng.random_range(f64::EPSILON..1.0);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    };
    let map: Vec<Vec<f64>> = (0..sketch_dim)
        .map(|_| {
            (0..view_dim)
                .map(|_| gauss(&mut rng) / (view_dim as f64).sqrt())
                .collect()
        })
        .collect();
    let prototypes: Vec<Vec<f64>> = (0..groups)
        .map(|_| (0..view_dim).map(|_| gauss(&mut rng)).collect())
        .collect();

    let objects: Vec<ObjectFeatures> = prototypes
        .iter()
        .enumerate()
        .map(|(g, proto)| ObjectFeatures {
            object_id: object_id(g),
            rings: (0..rings)
                .map(|_| {
                    (0..views_per_ring)
                        .map(|_| proto.iter().map(|&x| x + noise * gauss(&mut rng)).collect())
                        .collect()
                })
                .collect(),
        })
        .collect();

    let mut pairs = Vec::with_capacity(groups * sketches_per_group);
    for (g, proto) in prototypes.iter().enumerate() {
        for _ in 0..sketches_per_group {
            let noisy: Vec<f64> = proto.iter().map(|&x| x + noise * gauss(&mut rng)).collect();
            let sketch = map
                .iter()
                .map(|row| row.iter().zip(&noisy).map(|(a, b)| a * b).sum())
                .collect();
            pairs.push(TrainingPair {
                sketch,
                object: g,
                group: g,
            });
        }
    }
    (objects, pairs)
}
