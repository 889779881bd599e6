//! Silhouette carving with the 5% outside-view tolerance.

use super::{GridSpec, SilhouetteMask, VoxelHull};
use crate::math::{Aabb, Vec3};
use crate::{Error, Result};
use rayon::prelude::*;

/// Fraction of observing views allowed to place a voxel outside the mask.
pub const OUTSIDE_TOLERANCE: f64 = 0.05;

/// Carves the grid: a voxel is kept iff it is observed by at least one view
/// and, among observing views, the fraction placing its center outside the
/// mask is at most 5%.
pub fn carve(masks: &[SilhouetteMask], spec: &GridSpec) -> Result<VoxelHull> {
    if masks.len() < 2 {
        return Err(Error::Config(format!("carving needs >= 2 masks, got {}", masks.len())));
    }
    let [nx, ny, nz] = spec.dims;
    let slice = nx * ny;
    // Per-voxel keep + per-view outside counts for diagnostics.
    let results: Vec<(Vec<bool>, Vec<u64>)> = (0..nz)
        .into_par_iter()
        .map(|k| {
            let mut keep = vec![false; slice];
            let mut outside_per_view = vec![0u64; masks.len()];
            for j in 0..ny {
                for i in 0..nx {
                    let c = spec.voxel_center(i, j, k);
                    let mut observed = 0u32;
                    let mut outside = 0u32;
                    for (vi, m) in masks.iter().enumerate() {
                        let cam = &m.camera;
                        let pc = cam.world_to_cam(c);
                        if pc.z <= cam.near {
                            continue;
                        }
                        let px = cam.cam_to_pixel(pc);
                        let (col, row) = (px.x.floor(), px.y.floor());
                        if col < 0.0
                            || row < 0.0
                            || col >= cam.width as f64
                            || row >= cam.height as f64
                        {
                            continue;
                        }
                        observed += 1;
                        if !m.mask.get(row as usize, col as usize) {
                            outside += 1;
                            outside_per_view[vi] += 1;
                        }
                    }
                    if observed > 0 && f64::from(outside) <= OUTSIDE_TOLERANCE * f64::from(observed)
                    {
                        keep[j * nx + i] = true;
                    }
                }
            }
            (keep, outside_per_view)
        })
        .collect();

    let mut occupancy = Vec::with_capacity(spec.len());
    let mut outside_totals = vec![0u64; masks.len()];
    for (keep, outs) in results {
        occupancy.extend(keep);
        for (t, o) in outside_totals.iter_mut().zip(outs) {
            *t += o;
        }
    }
    let hull = VoxelHull { spec: spec.clone(), occupancy };
    if hull.occupied_count() == 0 {
        let diagnostics = outside_totals
            .iter()
            .enumerate()
            .map(|(i, o)| format!("view {i}: {o} voxel projections outside the mask"))
            .collect::<Vec<_>>()
            .join("\n");
        return Err(Error::DegenerateCarving {
            msg: format!("no voxel survived carving over {} views", masks.len()),
            diagnostics,
        });
    }
    Ok(hull)
}

/// Auto-fits grid bounds: a coarse carve over the cameras' convergence
/// region, then the kept-voxel bounding box padded by 10%.
pub fn fit_grid(masks: &[SilhouetteMask], resolution: f64) -> Result<GridSpec> {
    if masks.len() < 2 {
        return Err(Error::Config("grid fitting needs >= 2 views".into()));
    }
    // Convergence region from pairwise closest approach of optical axes.
    let rays: Vec<(Vec3, Vec3)> = masks
        .iter()
        .map(|m| {
            let cam = &m.camera;
            let o = cam.center_world();
            let d = (cam.back_project(crate::math::Vec2::new(cam.cx, cam.cy), 1.0) - o)
                .normalize();
            (o, d)
        })
        .collect();
    let mut midpoints = Vec::new();
    for a in 0..rays.len() {
        for b in a + 1..rays.len() {
            if let Some(m) = ray_midpoint(rays[a], rays[b]) {
                midpoints.push(m);
            }
        }
    }
    if midpoints.is_empty() {
        return Err(Error::Config("cameras are mutually parallel; cannot fit grid".into()));
    }
    let center = midpoints.iter().sum::<Vec3>() / midpoints.len() as f64;
    let spread = midpoints
        .iter()
        .map(|m| (m - center).norm())
        .fold(0.0f64, f64::max);
    let half = (2.0 * spread).max(0.3);
    let coarse_box = Aabb::new(center - Vec3::repeat(half), center + Vec3::repeat(half));

    // Coarse cone intersection. Unlike carve(), the fit requires most views
    // to observe a voxel, so weakly constrained corners of the search box
    // cannot inflate the grid.
    const COARSE_DIM: usize = 48;
    let coarse = GridSpec {
        origin: coarse_box.min,
        resolution: 2.0 * half / COARSE_DIM as f64,
        dims: [COARSE_DIM; 3],
    };
    let min_observed = ((masks.len() as f64) * 0.8).ceil() as u32;
    let mut bb: Option<Aabb> = None;
    for k in 0..COARSE_DIM {
        for j in 0..COARSE_DIM {
            for i in 0..COARSE_DIM {
                let c = coarse.voxel_center(i, j, k);
                let mut observed = 0u32;
                let mut outside = 0u32;
                for m in masks {
                    let cam = &m.camera;
                    let pc = cam.world_to_cam(c);
                    if pc.z <= cam.near {
                        continue;
                    }
                    let px = cam.cam_to_pixel(pc);
                    let (col, row) = (px.x.floor(), px.y.floor());
                    if col < 0.0
                        || row < 0.0
                        || col >= cam.width as f64
                        || row >= cam.height as f64
                    {
                        continue;
                    }
                    observed += 1;
                    if !m.mask.get(row as usize, col as usize) {
                        outside += 1;
                    }
                }
                if observed >= min_observed.max(2)
                    && f64::from(outside) <= OUTSIDE_TOLERANCE * f64::from(observed)
                {
                    let halfv = Vec3::repeat(coarse.resolution * 0.5);
                    match &mut bb {
                        Some(b) => {
                            b.expand(c - halfv);
                            b.expand(c + halfv);
                        }
                        None => bb = Some(Aabb::new(c - halfv, c + halfv)),
                    }
                }
            }
        }
    }
    let bb = bb.ok_or_else(|| Error::DegenerateCarving {
        msg: "coarse fit found no occupied voxels".into(),
        diagnostics: String::new(),
    })?;
    let pad = bb.extent().norm() * 0.10;
    let padded = bb.dilated(pad.max(2.0 * resolution));
    let dims = [
        ((padded.extent().x / resolution).ceil() as usize).max(2),
        ((padded.extent().y / resolution).ceil() as usize).max(2),
        ((padded.extent().z / resolution).ceil() as usize).max(2),
    ];
    Ok(GridSpec { origin: padded.min, resolution, dims })
}

fn ray_midpoint((o1, d1): (Vec3, Vec3), (o2, d2): (Vec3, Vec3)) -> Option<Vec3> {
    let cross = d1.cross(&d2);
    let denom = cross.norm_squared();
    if denom < 1e-12 {
        return None;
    }
    let w = o2 - o1;
    let t1 = w.cross(&d2).dot(&cross) / denom;
    let t2 = w.cross(&d1).dot(&cross) / denom;
    Some(((o1 + d1 * t1) + (o2 + d2 * t2)) * 0.5)
}
