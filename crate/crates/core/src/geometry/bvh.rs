//! Bounding volume hierarchy over arbitrary primitives.
//!
//! Construction splits at the centroid median along the longest axis of the
//! centroid bounds until leaves hold at most [`MAX_LEAF`] primitives. The
//! hierarchy only stores primitive indices; callers own the primitives and
//! supply the intersection test during traversal.

use super::{Aabb, Ray, Vec3};

pub const MAX_LEAF: usize = 4;

#[derive(Debug, Clone, Copy)]
pub struct BvhNode {
    pub bounds: Aabb,
    /// Leaf: index of the first primitive in the permutation. Interior: index
    /// of the right child (the left child immediately follows its parent).
    pub offset: u32,
    /// Number of primitives for a leaf, zero for interior nodes.
    pub count: u32,
}

impl BvhNode {
    pub fn is_leaf(&self) -> bool {
        self.count > 0
    }
}

#[derive(Debug, Clone, Default)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    order: Vec<u32>,
}

impl Bvh {
    pub fn build(bounds: &[Aabb]) -> Bvh {
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(bounds.len().div_ceil(MAX_LEAF) * 2),
            order: (0..bounds.len() as u32).collect(),
        };
        if bounds.is_empty() {
            return bvh;
        }
        let centroids: Vec<Vec3> = bounds.iter().map(Aabb::center).collect();
        let n = bounds.len();
        bvh.build_range(bounds, &centroids, 0, n);
        bvh
    }

    fn build_range(&mut self, bounds: &[Aabb], centroids: &[Vec3], start: usize, end: usize) -> usize {
        let slice = &self.order[start..end];
        let node_bounds = slice.iter().fold(Aabb::EMPTY, |b, &i| b.union(&bounds[i as usize]));
        let idx = self.nodes.len();
        let count = end - start;
        if count <= MAX_LEAF {
            self.nodes.push(BvhNode { bounds: node_bounds, offset: start as u32, count: count as u32 });
            return idx;
        }
        self.nodes.push(BvhNode { bounds: node_bounds, offset: 0, count: 0 });

        let cb = Aabb::from_points(slice.iter().map(|&i| centroids[i as usize]));
        let e = cb.extent();
        let axis = if e.x >= e.y && e.x >= e.z {
            0
        } else if e.y >= e.z {
            1
        } else {
            2
        };
        let mid = count / 2;
        self.order[start..end].select_nth_unstable_by(mid, |&a, &b| {
            centroids[a as usize][axis]
                .total_cmp(&centroids[b as usize][axis])
                .then(a.cmp(&b))
        });
        self.build_range(bounds, centroids, start, start + mid);
        let right = self.build_range(bounds, centroids, start + mid, end);
        self.nodes[idx].offset = right as u32;
        idx
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[BvhNode] {
        &self.nodes
    }

    /// Primitive permutation referenced by leaf ranges.
    pub fn order(&self) -> &[u32] {
        &self.order
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes.first().map_or(Aabb::EMPTY, |n| n.bounds)
    }

    /// Front-to-back traversal. `visit(primitive, cutoff)` tests one
    /// primitive and returns the new cutoff distance; nodes whose entry
    /// distance exceeds the cutoff are skipped.
    pub fn traverse<F>(&self, ray: &Ray, mut visit: F)
    where
        F: FnMut(u32, f64) -> f64,
    {
        if self.nodes.is_empty() {
            return;
        }
        let inv = ray.inv_dir();
        let mut cutoff = ray.t_max;
        let Some(t_root) = self.nodes[0].bounds.intersect(ray, inv, cutoff) else {
            return;
        };
        let mut stack: [(u32, f64); 64] = [(0, 0.0); 64];
        let mut sp = 1;
        stack[0] = (0, t_root);
        while sp > 0 {
            sp -= 1;
            let (ni, t_entry) = stack[sp];
            if t_entry > cutoff {
                continue;
            }
            let node = &self.nodes[ni as usize];
            if node.is_leaf() {
                let first = node.offset as usize;
                for &prim in &self.order[first..first + node.count as usize] {
                    cutoff = visit(prim, cutoff);
                }
                continue;
            }
            let l = ni + 1;
            let r = node.offset;
            let tl = self.nodes[l as usize].bounds.intersect(ray, inv, cutoff);
            let tr = self.nodes[r as usize].bounds.intersect(ray, inv, cutoff);
            match (tl, tr) {
                (Some(a), Some(b)) => {
                    let (near, far) = if a <= b { ((l, a), (r, b)) } else { ((r, b), (l, a)) };
                    stack[sp] = far;
                    stack[sp + 1] = near;
                    sp += 2;
                }
                (Some(a), None) => {
                    stack[sp] = (l, a);
                    sp += 1;
                }
                (None, Some(b)) => {
                    stack[sp] = (r, b);
                    sp += 1;
                }
                (None, None) => {}
            }
        }
    }
}
