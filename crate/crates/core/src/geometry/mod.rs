//! World-space math shared by the renderer, collision handling and samplers.
//!
//! The world frame is left-handed and Z-up, measured in centimeters. A
//! zero rotator faces +X, +Y is to the right and +Z is up.

mod bvh;
pub(crate) mod ray;

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

pub use bvh::{Bvh, BvhNode};
pub use ray::{intersect_triangle, Hit, Ray, TIE_EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub const fn splat(v: f64) -> Self {
        Vec3::new(v, v, v)
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn length(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn length_squared(self) -> f64 {
        self.dot(self)
    }

    /// Unit vector in the same direction, or `None` for a zero or non-finite
    /// vector.
    pub fn try_normalize(self) -> Option<Vec3> {
        let len = self.length();
        if len > 0.0 && len.is_finite() {
            Some(self / len)
        } else {
            None
        }
    }

    pub fn normalize(self) -> Vec3 {
        self.try_normalize().unwrap_or(Vec3::ZERO)
    }

    pub fn min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn mul_elem(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).length()
    }

    /// Largest component.
    pub fn max_element(self) -> f64 {
        self.x.max(self.y).max(self.z)
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3 {
    pub rows: [[f64; 3]; 3],
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 {
        rows: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn from_columns(c0: Vec3, c1: Vec3, c2: Vec3) -> Mat3 {
        Mat3 {
            rows: [[c0.x, c1.x, c2.x], [c0.y, c1.y, c2.y], [c0.z, c1.z, c2.z]],
        }
    }

    pub fn column(&self, i: usize) -> Vec3 {
        Vec3::new(self.rows[0][i], self.rows[1][i], self.rows[2][i])
    }

    pub fn transpose(&self) -> Mat3 {
        Mat3::from_columns(
            Vec3::from(self.rows[0]),
            Vec3::from(self.rows[1]),
            Vec3::from(self.rows[2]),
        )
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let r = &self.rows;
        Vec3::new(
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        Mat3::from_columns(
            self.mul_vec(o.column(0)),
            self.mul_vec(o.column(1)),
            self.mul_vec(o.column(2)),
        )
    }

    pub fn determinant(&self) -> f64 {
        self.column(0).dot(self.column(1).cross(self.column(2)))
    }
}

/// Orientation as pitch/yaw/roll in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Rotator {
    pub pitch: f64,
    pub yaw: f64,
    pub roll: f64,
}

/// Wraps an angle in degrees into (-180, 180].
pub fn normalize_degrees(a: f64) -> f64 {
    let w = a.rem_euclid(360.0);
    if w > 180.0 {
        w - 360.0
    } else {
        w
    }
}

impl Rotator {
    pub const ZERO: Rotator = Rotator::new(0.0, 0.0, 0.0);

    pub const fn new(pitch: f64, yaw: f64, roll: f64) -> Self {
        Rotator { pitch, yaw, roll }
    }

    pub fn is_finite(&self) -> bool {
        self.pitch.is_finite() && self.yaw.is_finite() && self.roll.is_finite()
    }

    pub fn normalized(self) -> Rotator {
        Rotator::new(
            normalize_degrees(self.pitch),
            normalize_degrees(self.yaw),
            normalize_degrees(self.roll),
        )
    }

    /// Rotation matrix whose columns are the rotated forward (+X), right (+Y)
    /// and up (+Z) axes. Applied intrinsically as yaw about +Z, then pitch
    /// raising the forward axis toward +Z, then roll about the forward axis.
    pub fn to_matrix(self) -> Mat3 {
        let (sp, cp) = self.pitch.to_radians().sin_cos();
        let (sy, cy) = self.yaw.to_radians().sin_cos();
        let (sr, cr) = self.roll.to_radians().sin_cos();
        let forward = Vec3::new(cp * cy, cp * sy, sp);
        let right = Vec3::new(sr * sp * cy - cr * sy, sr * sp * sy + cr * cy, -sr * cp);
        let up = Vec3::new(-(cr * sp * cy + sr * sy), cy * sr - cr * sp * sy, cr * cp);
        Mat3::from_columns(forward, right, up)
    }

    pub fn forward(self) -> Vec3 {
        self.to_matrix().column(0)
    }

    /// Rotator (roll 0) whose forward axis points along `dir`.
    pub fn look_along(dir: Vec3) -> Rotator {
        let d = dir.normalize();
        let yaw = d.y.atan2(d.x).to_degrees();
        let pitch = d.z.atan2(d.x.hypot(d.y)).to_degrees();
        Rotator::new(pitch, yaw, 0.0).normalized()
    }
}

impl From<[f64; 3]> for Rotator {
    fn from(a: [f64; 3]) -> Self {
        Rotator::new(a[0], a[1], a[2])
    }
}

impl From<Rotator> for [f64; 3] {
    fn from(r: Rotator) -> Self {
        [r.pitch, r.yaw, r.roll]
    }
}

pub fn rotator_to_matrix(r: Rotator) -> Mat3 {
    r.to_matrix()
}

/// Placement of an object or camera: location, orientation and uniform scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub location: Vec3,
    pub rotation: Rotator,
    pub scale: f64,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::IDENTITY
    }
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        location: Vec3::ZERO,
        rotation: Rotator::ZERO,
        scale: 1.0,
    };

    pub fn new(location: Vec3, rotation: Rotator, scale: f64) -> Self {
        Pose { location, rotation, scale }
    }

    pub fn transform_point(&self, v: Vec3) -> Vec3 {
        self.rotation.to_matrix().mul_vec(v * self.scale) + self.location
    }

    pub fn inverse_transform_point(&self, w: Vec3) -> Vec3 {
        self.rotation.to_matrix().transpose().mul_vec(w - self.location) / self.scale
    }

    /// A reusable transform with the rotation matrix computed once.
    pub fn affine(&self) -> Affine {
        Affine {
            linear: self.rotation.to_matrix(),
            scale: self.scale,
            translation: self.location,
        }
    }
}

pub fn transform_point(p: &Pose, v: Vec3) -> Vec3 {
    p.transform_point(v)
}

/// Precomputed similarity transform.
#[derive(Debug, Clone, Copy)]
pub struct Affine {
    pub linear: Mat3,
    pub scale: f64,
    pub translation: Vec3,
}

impl Affine {
    pub fn apply(&self, v: Vec3) -> Vec3 {
        self.linear.mul_vec(v * self.scale) + self.translation
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    /// The inverted box that `grow` starts from.
    pub const EMPTY: Aabb = Aabb {
        min: Vec3::splat(f64::INFINITY),
        max: Vec3::splat(f64::NEG_INFINITY),
    };

    pub fn new(min: Vec3, max: Vec3) -> Self {
        Aabb { min, max }
    }

    pub fn from_points<I: IntoIterator<Item = Vec3>>(points: I) -> Aabb {
        points.into_iter().fold(Aabb::EMPTY, |b, p| b.grow(p))
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y || self.min.z > self.max.z
    }

    pub fn grow(self, p: Vec3) -> Aabb {
        Aabb::new(self.min.min(p), self.max.max(p))
    }

    pub fn union(self, o: &Aabb) -> Aabb {
        Aabb::new(self.min.min(o.min), self.max.max(o.max))
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn translated(&self, d: Vec3) -> Aabb {
        Aabb::new(self.min + d, self.max + d)
    }

    pub fn contains(&self, o: &Aabb) -> bool {
        self.min.x <= o.min.x
            && self.min.y <= o.min.y
            && self.min.z <= o.min.z
            && self.max.x >= o.max.x
            && self.max.y >= o.max.y
            && self.max.z >= o.max.z
    }

    /// Interior overlap on all three axes; boxes that merely touch do not
    /// overlap.
    pub fn overlaps(&self, o: &Aabb) -> bool {
        const EPS: f64 = 1e-6;
        (0..3).all(|i| self.min[i] < o.max[i] - EPS && o.min[i] < self.max[i] - EPS)
    }

    /// The eight corners, x varying fastest.
    pub fn corners(&self) -> [Vec3; 8] {
        let (a, b) = (self.min, self.max);
        [
            Vec3::new(a.x, a.y, a.z),
            Vec3::new(b.x, a.y, a.z),
            Vec3::new(a.x, b.y, a.z),
            Vec3::new(b.x, b.y, a.z),
            Vec3::new(a.x, a.y, b.z),
            Vec3::new(b.x, a.y, b.z),
            Vec3::new(a.x, b.y, b.z),
            Vec3::new(b.x, b.y, b.z),
        ]
    }

    pub fn surface_area(&self) -> f64 {
        let e = self.extent();
        2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
    }

    /// Slab test. Returns the entry and exit distance clipped to the ray's
    /// interval, or `None` when the ray misses.
    pub fn intersect(&self, ray: &Ray, inv_dir: Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = ray.t_min;
        let mut t1 = t_max;
        for i in 0..3 {
            let a = (self.min[i] - ray.origin[i]) * inv_dir[i];
            let b = (self.max[i] - ray.origin[i]) * inv_dir[i];
            // NaN (0 * inf): the ray runs inside a boundary plane of this
            // slab, which counts as inside.
            if a.is_nan() || b.is_nan() {
                continue;
            }
            let (near, far) = if a <= b { (a, b) } else { (b, a) };
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}
