use super::Vec3;

/// Depth difference below which two hits are considered tied.
pub const TIE_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub dir: Vec3,
    pub t_min: f64,
    pub t_max: f64,
}

impl Ray {
    pub fn new(origin: Vec3, dir: Vec3) -> Ray {
        Ray { origin, dir, t_min: 0.0, t_max: f64::INFINITY }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }

    pub fn inv_dir(&self) -> Vec3 {
        Vec3::new(1.0 / self.dir.x, 1.0 / self.dir.y, 1.0 / self.dir.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Vec3,
    pub geometric_normal: Vec3,
    pub instance_id: u32,
    pub part_id: u16,
    pub triangle_index: u32,
}

impl Hit {
    /// Whether `self` should replace `best` as the nearest hit: strictly
    /// nearer, or tied within [`TIE_EPSILON`] with a lower
    /// `(instance_id, triangle_index)`.
    pub fn beats(&self, best: &Hit) -> bool {
        beats(self.t, (self.instance_id, self.triangle_index), best.t, (best.instance_id, best.triangle_index))
    }
}

pub(crate) fn beats(t: f64, key: (u32, u32), best_t: f64, best_key: (u32, u32)) -> bool {
    if t < best_t - TIE_EPSILON {
        true
    } else if (t - best_t).abs() < TIE_EPSILON {
        key < best_key
    } else {
        false
    }
}

/// Möller–Trumbore intersection. Returns `t` in `(t_min, t_max]`.
///
/// The barycentric bounds are padded by a tiny tolerance so that rays through
/// a shared edge hit at least one of the two triangles.
pub fn intersect_triangle(ray: &Ray, v0: Vec3, v1: Vec3, v2: Vec3) -> Option<f64> {
    intersect_edges(ray, v0, v1 - v0, v2 - v0, ray.t_max)
}

const BARY_PAD: f64 = 1e-9;

#[inline]
pub(crate) fn intersect_edges(ray: &Ray, v0: Vec3, e1: Vec3, e2: Vec3, t_max: f64) -> Option<f64> {
    let p = ray.dir.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = ray.origin - v0;
    let u = s.dot(p) * inv;
    if !(-BARY_PAD..=1.0 + BARY_PAD).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = ray.dir.dot(q) * inv;
    if v < -BARY_PAD || u + v > 1.0 + BARY_PAD {
        return None;
    }
    let t = e2.dot(q) * inv;
    if t > ray.t_min && t <= t_max {
        Some(t)
    } else {
        None
    }
}
