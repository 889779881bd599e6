//! Triangle meshes, built-in watertight shapes, and BVH raycasting.

use crate::math::{tangent_basis, Aabb, Vec3};
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub tris: Vec<[u32; 3]>,
}

impl TriMesh {
    pub fn face_normal(&self, tri: usize) -> Vec3 {
        let [a, b, c] = self.tris[tri];
        let (a, b, c) =
            (self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn face_area(&self, tri: usize) -> f64 {
        let [a, b, c] = self.tris[tri];
        let (a, b, c) =
            (self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.tris.len()).map(|i| self.face_area(i)).sum()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter().copied()).expect("non-empty mesh")
    }

    pub fn centroid(&self) -> Vec3 {
        self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64
    }

    /// Every directed edge must be matched by exactly one opposite edge.
    pub fn is_watertight(&self) -> bool {
        let mut edges: BTreeMap<(u32, u32), i64> = BTreeMap::new();
        for t in &self.tris {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() +=
                    if a < b { 1 } else { -1 };
                // Count pairs: each undirected edge must be used exactly twice
                // with opposite orientations, so the signed count is 0 and the
                // total count 2. Track totals separately.
            }
        }
        let mut totals: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        for t in &self.tris {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *totals.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        edges.values().all(|&s| s == 0) && totals.values().all(|&c| c == 2)
    }

    pub fn translated(mut self, offset: Vec3) -> Self {
        for v in &mut self.vertices {
            *v += offset;
        }
        self
    }
}

/// Unit-ish icosphere: subdivided icosahedron scaled to `radius`.
pub fn icosphere(center: Vec3, radius: f64, subdivisions: u32) -> TriMesh {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut tris: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        let mut next = Vec::with_capacity(tris.len() * 4);
        for t in &tris {
            let mut mids = [0u32; 3];
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mids[k] = *midpoint.entry(key).or_insert_with(|| {
                    let m = ((vertices[a as usize] + vertices[b as usize]) / 2.0).normalize();
                    vertices.push(m);
                    vertices.len() as u32 - 1
                });
            }
            next.push([t[0], mids[0], mids[2]]);
            next.push([t[1], mids[1], mids[0]]);
            next.push([t[2], mids[2], mids[1]]);
            next.push([mids[0], mids[1], mids[2]]);
        }
        tris = next;
    }
    TriMesh {
        vertices: vertices.into_iter().map(|v| center + v * radius).collect(),
        tris,
    }
}

/// Axis-aligned box.
pub fn box_mesh(center: Vec3, half: Vec3) -> TriMesh {
    let corner = |i: usize| {
        center
            + Vec3::new(
                if i & 1 == 0 { -half.x } else { half.x },
                if i & 2 == 0 { -half.y } else { half.y },
                if i & 4 == 0 { -half.z } else { half.z },
            )
    };
    let vertices: Vec<Vec3> = (0..8).map(corner).collect();
    // Outward-facing winding per face.
    let tris = vec![
        [0u32, 2, 3],
        [0, 3, 1],
        [4, 5, 7],
        [4, 7, 6],
        [0, 1, 5],
        [0, 5, 4],
        [2, 6, 7],
        [2, 7, 3],
        [0, 4, 6],
        [0, 6, 2],
        [1, 3, 7],
        [1, 7, 5],
    ];
    TriMesh { vertices, tris }
}

/// Capped cylinder along z.
pub fn cylinder(center: Vec3, radius: f64, half_height: f64, segments: usize) -> TriMesh {
    let mut vertices = Vec::new();
    let mut tris = Vec::new();
    for ring in 0..2 {
        let z = if ring == 0 { -half_height } else { half_height };
        for s in 0..segments {
            let a = s as f64 / segments as f64 * std::f64::consts::TAU;
            vertices.push(center + Vec3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let bottom_center = vertices.len() as u32;
    vertices.push(center + Vec3::new(0.0, 0.0, -half_height));
    let top_center = vertices.len() as u32;
    vertices.push(center + Vec3::new(0.0, 0.0, half_height));
    let n = segments as u32;
    for s in 0..n {
        let s1 = (s + 1) % n;
        // side (outward)
        tris.push([s, s1, n + s]);
        tris.push([s1, n + s1, n + s]);
        // bottom cap (normal -z)
        tris.push([bottom_center, s1, s]);
        // top cap (normal +z)
        tris.push([top_center, n + s, n + s1]);
    }
    TriMesh { vertices, tris }
}

/// Low-poly bunny-like shape: a star-shaped radial displacement of an
/// icosphere. Two tall narrow ear lobes, a head bump, a flattened base;
/// watertight by construction. `up` is +z, the face looks toward +x.
pub fn bunny(center: Vec3, scale: f64) -> TriMesh {
    let base = icosphere(Vec3::zeros(), 1.0, 3);
    let vertices = base
        .vertices
        .iter()
        .map(|dir| {
            let r = bunny_radius(*dir);
            center + dir * (r * scale)
        })
        .collect();
    TriMesh { vertices, tris: base.tris }
}

/// Radial profile of the bunny shape for a unit direction.
pub fn bunny_radius(dir: Vec3) -> f64 {
    let head_dir = Vec3::new(0.75, 0.0, 0.66).normalize();
    let ear_l = Vec3::new(0.30, 0.35, 0.89).normalize();
    let ear_r = Vec3::new(0.30, -0.35, 0.89).normalize();
    let bump = |d: Vec3, width: f64, height: f64| height * ((dir.dot(&d) - 1.0) / width).exp();
    let mut r = 1.0 + 0.10 * dir.z * dir.z; // slightly prolate body
    r += bump(head_dir, 0.10, 0.35);
    r += bump(ear_l, 0.020, 0.85);
    r += bump(ear_r, 0.020, 0.85);
    if dir.z < -0.45 {
        // flattened base
        r *= 1.0 - 0.35 * (-dir.z - 0.45);
    }
    r
}

/// Part label of a bunny surface point (by direction from the center);
/// matches the regions used by the mock ranking table.
pub fn bunny_part_label(center: Vec3, scale: f64, p: Vec3) -> &'static str {
    let dir = ((p - center) / scale).normalize();
    let ear_l = Vec3::new(0.30, 0.35, 0.89).normalize();
    let ear_r = Vec3::new(0.30, -0.35, 0.89).normalize();
    let head_dir = Vec3::new(0.75, 0.0, 0.66).normalize();
    if dir.dot(&ear_l) > 0.93 || dir.dot(&ear_r) > 0.93 {
        "ears"
    } else if dir.dot(&head_dir) > 0.82 {
        "head"
    } else if dir.z < -0.55 {
        "base"
    } else {
        "body"
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub t: f64,
    pub tri: usize,
}

/// Median-split AABB tree for primary-ray casting.
pub struct Bvh {
    nodes: Vec<BvhNode>,
    /// Triangle indices, leaf ranges contiguous.
    order: Vec<u32>,
}

struct BvhNode {
    bb: Aabb,
    /// Negative: leaf; `start..start+count` into `order`.
    left: i32,
    right: i32,
    start: u32,
    count: u32,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    pub fn build(mesh: &TriMesh) -> Self {
        let centroids: Vec<Vec3> = (0..mesh.tris.len())
            .map(|i| {
                let [a, b, c] = mesh.tris[i];
                (mesh.vertices[a as usize]
                    + mesh.vertices[b as usize]
                    + mesh.vertices[c as usize])
                    / 3.0
            })
            .collect();
        let mut order: Vec<u32> = (0..mesh.tris.len() as u32).collect();
        let mut bvh = Bvh { nodes: Vec::new(), order: Vec::new() };
        let all = order.clone();
        bvh.order = all;
        let n = order.len();
        if n > 0 {
            bvh.build_range(mesh, &centroids, &mut order, 0, n);
            bvh.order = order;
        }
        bvh
    }

    fn tri_bounds(mesh: &TriMesh, t: u32) -> Aabb {
        let [a, b, c] = mesh.tris[t as usize];
        let mut bb = Aabb::new(mesh.vertices[a as usize], mesh.vertices[a as usize]);
        bb.expand(mesh.vertices[b as usize]);
        bb.expand(mesh.vertices[c as usize]);
        bb
    }

    fn build_range(
        &mut self,
        mesh: &TriMesh,
        centroids: &[Vec3],
        order: &mut [u32],
        offset: usize,
        len: usize,
    ) -> i32 {
        let node_id = self.nodes.len() as i32;
        let mut bb = Self::tri_bounds(mesh, order[offset]);
        for &t in &order[offset..offset + len] {
            let tb = Self::tri_bounds(mesh, t);
            bb.expand(tb.min);
            bb.expand(tb.max);
        }
        self.nodes.push(BvhNode { bb, left: -1, right: -1, start: offset as u32, count: 0 });
        if len <= LEAF_SIZE {
            self.nodes[node_id as usize].count = len as u32;
            return node_id;
        }
        let ext = bb.extent();
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        order[offset..offset + len].sort_by(|&a, &b| {
            centroids[a as usize][axis]
                .total_cmp(&centroids[b as usize][axis])
                .then(a.cmp(&b))
        });
        let half = len / 2;
        let left = self.build_range(mesh, centroids, order, offset, half);
        let right = self.build_range(mesh, centroids, order, offset + half, len - half);
        self.nodes[node_id as usize].left = left;
        self.nodes[node_id as usize].right = right;
        node_id
    }

    /// Nearest intersection with `t > t_min`.
    pub fn raycast(&self, mesh: &TriMesh, origin: Vec3, dir: Vec3, t_min: f64) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<Hit> = None;
        let mut stack = vec![0i32];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            let t_max = best.map_or(f64::INFINITY, |h| h.t);
            if !slab_hit(&node.bb, origin, inv, t_min, t_max) {
                continue;
            }
            if node.count > 0 {
                for &t in
                    &self.order[node.start as usize..(node.start + node.count) as usize]
                {
                    if let Some(hit_t) = moller_trumbore(mesh, t as usize, origin, dir) {
                        if hit_t > t_min && best.map_or(true, |h| hit_t < h.t) {
                            best = Some(Hit { t: hit_t, tri: t as usize });
                        }
                    }
                }
            } else {
                stack.push(node.left);
                stack.push(node.right);
            }
        }
        best
    }
}

fn slab_hit(bb: &Aabb, origin: Vec3, inv_dir: Vec3, t_min: f64, t_max: f64) -> bool {
    let mut t0 = t_min;
    let mut t1 = t_max;
    for a in 0..3 {
        if !inv_dir[a].is_finite() {
            // Ray parallel to this slab: inside test only (avoids 0 * inf).
            if origin[a] < bb.min[a] || origin[a] > bb.max[a] {
                return false;
            }
            continue;
        }
        let mut near = (bb.min[a] - origin[a]) * inv_dir[a];
        let mut far = (bb.max[a] - origin[a]) * inv_dir[a];
        if near > far {
            std::mem::swap(&mut near, &mut far);
        }
        t0 = t0.max(near);
        t1 = t1.min(far);
        if t0 > t1 {
            return false;
        }
    }
    true
}

fn moller_trumbore(mesh: &TriMesh, tri: usize, origin: Vec3, dir: Vec3) -> Option<f64> {
    let [ia, ib, ic] = mesh.tris[tri];
    let a = mesh.vertices[ia as usize];
    let e1 = mesh.vertices[ib as usize] - a;
    let e2 = mesh.vertices[ic as usize] - a;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = s.dot(&p) * inv;
    if !(-1e-9..=1.0 + 1e-9).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < -1e-9 || u + v > 1.0 + 1e-9 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 0.0).then_some(t)
}

/// Deterministic orthonormal frame with `z` as the third axis.
pub fn frame_from_z(z: Vec3) -> (Vec3, Vec3, Vec3) {
    let z = z.normalize();
    let (x, y) = tangent_basis(z);
    (x, y, z)
}
