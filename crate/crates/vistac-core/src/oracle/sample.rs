//! Ground-truth point clouds: area-weighted surface sampling and
//! part-labeled clouds.

use super::{Shape, TriMesh};
use crate::io::PointCloud;
use crate::math::Vec3;
use crate::touch::PartLabeledCloud;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Uniform area-weighted surface sampling, deterministic under the seed.
pub fn gt_point_cloud(mesh: &TriMesh, n: usize, seed: u64) -> PointCloud {
    assert!(n >= 1);
    let mut cum = Vec::with_capacity(mesh.tris.len());
    let mut total = 0.0;
    for t in 0..mesh.tris.len() {
        total += mesh.face_area(t);
        cum.push(total);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen_range(0.0..total);
        let t = cum.partition_point(|&c| c < u).min(mesh.tris.len() - 1);
        let [ia, ib, ic] = mesh.tris[t];
        let (a, b, c) = (
            mesh.vertices[ia as usize],
            mesh.vertices[ib as usize],
            mesh.vertices[ic as usize],
        );
        // Uniform barycentric sample.
        let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
        let s = r1.sqrt();
        let (w0, w1, w2) = (1.0 - s, s * (1.0 - r2), s * r2);
        positions.push(a * w0 + b * w1 + c * w2);
    }
    PointCloud::from_positions(positions)
}

/// Surface samples with per-point part names, standing in for a
/// part-segmentation model's output.
pub fn labeled_cloud(
    shape: Shape,
    mesh: &TriMesh,
    center: Vec3,
    size: f64,
    n: usize,
    seed: u64,
) -> PartLabeledCloud {
    let cloud = gt_point_cloud(mesh, n, seed);
    let labels = cloud
        .positions
        .iter()
        .map(|&p| shape.part_label(center, size, p))
        .collect();
    PartLabeledCloud { points: cloud.positions, labels }
}
