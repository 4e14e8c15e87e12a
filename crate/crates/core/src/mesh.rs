//! Triangle meshes with per-triangle part labels, plus the primitive shapes
//! used as stand-in assets.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::geometry::{Aabb, Affine, Vec3};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMesh {
    pub positions: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    /// Part id of each triangle. Ids start at 1; 0 means "no surface" in
    /// rendered part buffers.
    pub triangle_parts: Vec<u16>,
    /// `part_names[i]` names part id `i + 1`.
    pub part_names: Vec<String>,
}

impl TriMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn part_count(&self) -> usize {
        self.part_names.len()
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(self.positions.iter().copied())
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[i];
        [self.positions[a as usize], self.positions[b as usize], self.positions[c as usize]]
    }

    pub fn transformed(&self, t: &Affine) -> TriMesh {
        TriMesh {
            positions: self.positions.iter().map(|&p| t.apply(p)).collect(),
            ..self.clone()
        }
    }

    pub fn translate(&mut self, d: Vec3) {
        for p in &mut self.positions {
            *p += d;
        }
    }

    /// Appends `other`, renumbering its parts after the existing ones.
    pub fn append(&mut self, other: &TriMesh) {
        let base_v = self.positions.len() as u32;
        let base_p = self.part_names.len() as u16;
        self.positions.extend_from_slice(&other.positions);
        self.triangles
            .extend(other.triangles.iter().map(|t| [t[0] + base_v, t[1] + base_v, t[2] + base_v]));
        self.triangle_parts.extend(other.triangle_parts.iter().map(|p| p + base_p));
        self.part_names.extend(other.part_names.iter().cloned());
    }

    fn push_tri(&mut self, tri: [u32; 3], part: u16) {
        self.triangles.push(tri);
        self.triangle_parts.push(part);
    }

    /// Flips any triangle whose normal points toward `center`. Only valid for
    /// convex shapes.
    fn orient_outward(&mut self, center: Vec3) {
        for i in 0..self.triangles.len() {
            let [a, b, c] = self.triangle(i);
            let n = (b - a).cross(c - a);
            let centroid = (a + b + c) / 3.0;
            if n.dot(centroid - center) < 0.0 {
                self.triangles[i].swap(1, 2);
            }
        }
    }
}

/// A built-in shape. Dimensions are in centimeters; every primitive sits with
/// its bottom-center at the local origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PrimitiveSpec {
    Box {
        size: [f64; 3],
        #[serde(default)]
        parts: bool,
    },
    Cylinder {
        radius: f64,
        height: f64,
        #[serde(default = "default_segments")]
        segments: u32,
        #[serde(default)]
        parts: bool,
    },
    Sphere {
        radius: f64,
        #[serde(default = "default_subdivisions")]
        subdivisions: u32,
    },
    Plane {
        size: [f64; 2],
    },
}

fn default_segments() -> u32 {
    32
}

fn default_subdivisions() -> u32 {
    3
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SimError::invalid(format!("{name} must be positive, got {v}")))
    }
}

pub fn make_primitive(spec: &PrimitiveSpec) -> Result<TriMesh> {
    match *spec {
        PrimitiveSpec::Box { size, parts } => {
            for (n, v) in ["x", "y", "z"].iter().zip(size) {
                check_positive(n, v)?;
            }
            Ok(make_box(Vec3::from(size), parts))
        }
        PrimitiveSpec::Cylinder { radius, height, segments, parts } => {
            check_positive("radius", radius)?;
            check_positive("height", height)?;
            if segments < 3 {
                return Err(SimError::invalid("cylinder needs at least 3 segments"));
            }
            Ok(make_cylinder(radius, height, segments, parts))
        }
        PrimitiveSpec::Sphere { radius, subdivisions } => {
            check_positive("radius", radius)?;
            if subdivisions > 7 {
                return Err(SimError::invalid("sphere subdivisions above 7 are not supported"));
            }
            Ok(make_sphere(radius, subdivisions))
        }
        PrimitiveSpec::Plane { size } => {
            check_positive("x", size[0])?;
            check_positive("y", size[1])?;
            Ok(make_plane(size[0], size[1]))
        }
    }
}

const BOX_FACES: [&str; 6] = ["neg_x", "pos_x", "neg_y", "pos_y", "bottom", "top"];

fn make_box(size: Vec3, parts: bool) -> TriMesh {
    let (hx, hy) = (size.x / 2.0, size.y / 2.0);
    let mut m = TriMesh {
        positions: Aabb::new(Vec3::new(-hx, -hy, 0.0), Vec3::new(hx, hy, size.z)).corners().to_vec(),
        ..Default::default()
    };
    // Corner index bits: x = 1, y = 2, z = 4.
    let faces: [[u32; 4]; 6] = [
        [0, 2, 6, 4],
        [1, 3, 7, 5],
        [0, 1, 5, 4],
        [2, 3, 7, 6],
        [0, 1, 3, 2],
        [4, 5, 7, 6],
    ];
    for (i, f) in faces.iter().enumerate() {
        let part = if parts { i as u16 + 1 } else { 1 };
        m.push_tri([f[0], f[1], f[2]], part);
        m.push_tri([f[0], f[2], f[3]], part);
    }
    m.part_names = if parts {
        BOX_FACES.iter().map(|s| s.to_string()).collect()
    } else {
        vec!["body".into()]
    };
    m.orient_outward(Vec3::new(0.0, 0.0, size.z / 2.0));
    m
}

fn make_cylinder(radius: f64, height: f64, segments: u32, parts: bool) -> TriMesh {
    let mut m = TriMesh::default();
    let n = segments;
    for k in 0..n {
        let a = std::f64::consts::TAU * k as f64 / n as f64;
        let (s, c) = a.sin_cos();
        m.positions.push(Vec3::new(radius * c, radius * s, 0.0));
        m.positions.push(Vec3::new(radius * c, radius * s, height));
    }
    let bottom = m.positions.len() as u32;
    m.positions.push(Vec3::ZERO);
    m.positions.push(Vec3::new(0.0, 0.0, height));
    let top = bottom + 1;
    let (side_p, bottom_p, top_p) = if parts { (1, 2, 3) } else { (1, 1, 1) };
    for k in 0..n {
        let j = (k + 1) % n;
        let (b0, t0, b1, t1) = (2 * k, 2 * k + 1, 2 * j, 2 * j + 1);
        m.push_tri([b0, b1, t1], side_p);
        m.push_tri([b0, t1, t0], side_p);
        m.push_tri([bottom, b1, b0], bottom_p);
        m.push_tri([top, t0, t1], top_p);
    }
    m.part_names = if parts {
        vec!["side".into(), "bottom".into(), "top".into()]
    } else {
        vec!["body".into()]
    };
    m.orient_outward(Vec3::new(0.0, 0.0, height / 2.0));
    m
}

fn make_sphere(radius: f64, subdivisions: u32) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints = std::collections::HashMap::new();
        let mut mid = |a: u32, b: u32, verts: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalize());
                verts.len() as u32 - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let center = Vec3::new(0.0, 0.0, radius);
    let mut m = TriMesh {
        positions: verts.into_iter().map(|v| v * radius + center).collect(),
        triangle_parts: vec![1; faces.len()],
        triangles: faces,
        part_names: vec!["body".into()],
    };
    m.orient_outward(center);
    m
}

fn make_plane(x: f64, y: f64) -> TriMesh {
    let (hx, hy) = (x / 2.0, y / 2.0);
    TriMesh {
        positions: vec![
            Vec3::new(-hx, -hy, 0.0),
            Vec3::new(hx, -hy, 0.0),
            Vec3::new(hx, hy, 0.0),
            Vec3::new(-hx, hy, 0.0),
        ],
        triangles: vec![[0, 1, 2], [0, 2, 3]],
        triangle_parts: vec![1, 1],
        part_names: vec!["body".into()],
    }
}
