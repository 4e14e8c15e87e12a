//! Two-level ray acceleration: one world-space BVH per object, plus a
//! top-level BVH over object bounds.

use std::sync::Arc;

use crate::geometry::ray::{beats, intersect_edges};
use crate::geometry::{Aabb, Bvh, Hit, Pose, Ray, Vec3, TIE_EPSILON};
use crate::mesh::TriMesh;

#[derive(Debug, Clone, Copy)]
struct PreTri {
    v0: Vec3,
    e1: Vec3,
    e2: Vec3,
}

/// An object's mesh baked into world space for one pose.
#[derive(Debug)]
pub struct ObjectGeometry {
    instance_id: u32,
    tris: Vec<PreTri>,
    normals: Vec<Vec3>,
    parts: Vec<u16>,
    bvh: Bvh,
    aabb: Aabb,
}

impl ObjectGeometry {
    pub fn new(instance_id: u32, mesh: &TriMesh, pose: &Pose) -> ObjectGeometry {
        let affine = pose.affine();
        let world: Vec<Vec3> = mesh.positions.iter().map(|&p| affine.apply(p)).collect();
        let mut tris = Vec::with_capacity(mesh.triangles.len());
        let mut normals = Vec::with_capacity(mesh.triangles.len());
        let mut boxes = Vec::with_capacity(mesh.triangles.len());
        for &[a, b, c] in &mesh.triangles {
            let (v0, v1, v2) = (world[a as usize], world[b as usize], world[c as usize]);
            let (e1, e2) = (v1 - v0, v2 - v0);
            tris.push(PreTri { v0, e1, e2 });
            normals.push(e1.cross(e2).try_normalize().unwrap_or(Vec3::Z));
            boxes.push(Aabb::from_points([v0, v1, v2]));
        }
        let bvh = Bvh::build(&boxes);
        let aabb = Aabb::from_points(world.iter().copied());
        ObjectGeometry { instance_id, tris, normals, parts: mesh.triangle_parts.clone(), bvh, aabb }
    }

    pub fn instance_id(&self) -> u32 {
        self.instance_id
    }

    /// Tight world-space bounds of the transformed vertices.
    pub fn aabb(&self) -> Aabb {
        self.aabb
    }

    pub fn triangle_count(&self) -> usize {
        self.tris.len()
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        let t = &self.tris[i];
        [t.v0, t.v0 + t.e1, t.v0 + t.e2]
    }

    pub fn part_of(&self, triangle_index: usize) -> u16 {
        self.parts[triangle_index]
    }

    /// Nearest `(t, triangle_index)` with `t <= t_max`; equal-depth ties go
    /// to the lower triangle index.
    fn nearest(&self, ray: &Ray, t_max: f64) -> Option<(f64, u32)> {
        let mut best: Option<(f64, u32)> = None;
        let mut sub = *ray;
        sub.t_max = t_max;
        let id = self.instance_id;
        self.bvh.traverse(&sub, |prim, cutoff| {
            let tri = &self.tris[prim as usize];
            if let Some(t) = intersect_edges(ray, tri.v0, tri.e1, tri.e2, cutoff) {
                let better = match best {
                    None => true,
                    Some((bt, bi)) => beats(t, (id, prim), bt, (id, bi)),
                };
                if better {
                    best = Some((t, prim));
                }
            }
            match best {
                Some((bt, _)) => (bt + TIE_EPSILON).min(t_max),
                None => cutoff,
            }
        });
        best
    }

    fn make_hit(&self, ray: &Ray, t: f64, tri: u32) -> Hit {
        Hit {
            t,
            point: ray.at(t),
            geometric_normal: self.normals[tri as usize],
            instance_id: self.instance_id,
            part_id: self.parts[tri as usize],
            triangle_index: tri,
        }
    }

    /// Nearest hit on this object alone.
    pub fn ray_cast(&self, ray: &Ray) -> Option<Hit> {
        self.nearest(ray, ray.t_max).map(|(t, i)| self.make_hit(ray, t, i))
    }
}

/// Immutable acceleration structure over a set of posed objects.
#[derive(Debug, Default)]
pub struct SceneAccel {
    objects: Vec<Arc<ObjectGeometry>>,
    top: Bvh,
}

impl SceneAccel {
    pub fn new(objects: Vec<Arc<ObjectGeometry>>) -> SceneAccel {
        let boxes: Vec<Aabb> = objects.iter().map(|o| o.aabb()).collect();
        SceneAccel { top: Bvh::build(&boxes), objects }
    }

    pub fn objects(&self) -> &[Arc<ObjectGeometry>] {
        &self.objects
    }

    pub fn object(&self, instance_id: u32) -> Option<&Arc<ObjectGeometry>> {
        self.objects.iter().find(|o| o.instance_id == instance_id)
    }

    pub fn bounds(&self) -> Aabb {
        self.top.bounds()
    }

    pub fn triangle_count(&self) -> usize {
        self.objects.iter().map(|o| o.triangle_count()).sum()
    }

    /// Nearest hit in `(t_min, t_max]` over every object.
    pub fn ray_cast(&self, ray: &Ray) -> Option<Hit> {
        let mut best: Option<(f64, u32, usize)> = None;
        self.top.traverse(ray, |k, cutoff| {
            let obj = &self.objects[k as usize];
            if let Some((t, tri)) = obj.nearest(ray, cutoff) {
                let better = match best {
                    None => true,
                    Some((bt, bi, bk)) => {
                        beats(t, (obj.instance_id, tri), bt, (self.objects[bk].instance_id, bi))
                    }
                };
                if better {
                    best = Some((t, tri, k as usize));
                }
            }
            match best {
                Some((bt, _, _)) => (bt + TIE_EPSILON).min(ray.t_max),
                None => cutoff,
            }
        });
        best.map(|(t, tri, k)| self.objects[k].make_hit(ray, t, tri))
    }
}

/// Nearest hit of `ray` against every object in `accel`.
pub fn ray_cast(accel: &SceneAccel, ray: &Ray) -> Option<Hit> {
    accel.ray_cast(ray)
}
