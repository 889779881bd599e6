//! Hybrid seed points: hull surface voxels for the object, thresholded
//! back-projected depth priors for the background.

use super::HullShell;
use crate::gaussian::CameraView;
use crate::img::{GrayImage, Mask, RgbImage};
use crate::io::PointCloud;
use crate::math::{Vec2, Vec3};
use crate::{Error, Result};

/// Posed RGB-D prior used for background initialization.
#[derive(Debug, Clone)]
pub struct DepthPriorFrame {
    pub camera: CameraView,
    pub color: RgbImage,
    pub depth: GrayImage,
    pub depth_valid: Mask,
}

#[derive(Debug, Clone)]
pub struct SeedPoints {
    pub object: PointCloud,
    pub background: PointCloud,
}

/// Generates object seeds (hull surface voxel centers, colored from the
/// nearest observing view) and background seeds (stride-subsampled valid
/// depth pixels farther than `tau_d` from the hull surface).
pub fn seed_points(
    shell: &HullShell,
    frames: &[DepthPriorFrame],
    tau_d: f64,
    max_background: usize,
) -> Result<SeedPoints> {
    if frames.is_empty() {
        return Err(Error::Dataset("seed generation needs at least one depth frame".into()));
    }
    // Overlap check: some frame must see the hull region.
    let bb = shell.hull.spec.bounds();
    let corners: Vec<Vec3> = (0..8)
        .map(|c| {
            Vec3::new(
                if c & 1 == 0 { bb.min.x } else { bb.max.x },
                if c & 2 == 0 { bb.min.y } else { bb.max.y },
                if c & 4 == 0 { bb.min.z } else { bb.max.z },
            )
        })
        .collect();
    let overlaps = frames.iter().any(|f| {
        corners.iter().any(|&c| {
            let pc = f.camera.world_to_cam(c);
            if pc.z <= f.camera.near {
                return false;
            }
            let px = f.camera.cam_to_pixel(pc);
            px.x >= 0.0
                && px.y >= 0.0
                && px.x < f.camera.width as f64
                && px.y < f.camera.height as f64
        })
    });
    if !overlaps {
        return Err(Error::Dataset("no depth frame overlaps the hull grid".into()));
    }

    // Object seeds: surface voxels, color sampled from the nearest camera
    // that sees the point.
    let mut object = PointCloud::default();
    for [i, j, k] in shell.hull.surface_voxels() {
        let p = shell.hull.spec.voxel_center(i, j, k);
        let mut best: Option<(f64, [f64; 3])> = None;
        for f in frames {
            let cam = &f.camera;
            let pc = cam.world_to_cam(p);
            if pc.z <= cam.near {
                continue;
            }
            let px = cam.cam_to_pixel(pc);
            let (col, row) = (px.x.floor(), px.y.floor());
            if col < 0.0 || row < 0.0 || col >= cam.width as f64 || row >= cam.height as f64 {
                continue;
            }
            let dist = (cam.center_world() - p).norm();
            let c = f.color.get(row as usize, col as usize);
            if best.map_or(true, |(d, _)| dist < d) {
                best = Some((dist, c));
            }
        }
        object.positions.push(p);
        object.colors.push(best.map_or([0.5; 3], |(_, c)| c));
    }

    // Background seeds: stride chosen to fit the budget.
    let total_valid: usize = frames.iter().map(|f| f.depth_valid.count()).sum();
    let stride = (((total_valid as f64) / max_background.max(1) as f64).sqrt().ceil() as usize)
        .max(1);
    let mut background = PointCloud::default();
    for f in frames {
        let cam = &f.camera;
        let mut row = 0;
        while row < cam.height {
            let mut col = 0;
            while col < cam.width {
                if f.depth_valid.get(row, col) {
                    let z = f.depth.get(row, col);
                    let p = cam.back_project(
                        Vec2::new(col as f64 + 0.5, row as f64 + 0.5),
                        z,
                    );
                    if shell.signed_distance(p) > tau_d {
                        background.positions.push(p);
                        background.colors.push(f.color.get(row, col));
                    }
                }
                col += stride;
            }
            row += stride;
        }
    }
    Ok(SeedPoints { object, background })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hull::carve::tests::{ring_views, sphere_masks};
    use crate::hull::{build_shell, carve, fit_grid};

    fn sphere_shell(center: Vec3, radius: f64) -> HullShell {
        let masks = sphere_masks(9, center, radius, 72);
        let spec = fit_grid(&masks, 0.005).unwrap();
        let hull = carve(&masks, &spec).unwrap();
        build_shell(&hull, 0.005, 0.02).unwrap()
    }

    fn flat_frame(cam: CameraView, z: f64) -> DepthPriorFrame {
        let (w, h) = (cam.width, cam.height);
        DepthPriorFrame {
            camera: cam,
            color: RgbImage::new(w, h, [0.4, 0.5, 0.6]),
            depth: GrayImage::new(w, h, z),
            depth_valid: Mask::new(w, h, true),
        }
    }

    #[test]
    fn object_seed_count_matches_surface_voxel_oracle() {
        let center = Vec3::new(0.0, 0.1, 0.4);
        let shell = sphere_shell(center, 0.05);
        let cam = ring_views(3, center, 0.6, 48).remove(0);
        let frames = vec![flat_frame(cam, 2.0)];
        let seeds = seed_points(&shell, &frames, 0.01, 10_000).unwrap();

        // Independent surface count: brute-force 6-connectivity sweep.
        let hull = &shell.hull;
        let [nx, ny, nz] = hull.spec.dims;
        let mut count = 0usize;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    if !hull.occupied(i, j, k) {
                        continue;
                    }
                    let neighbors = [
                        (i.wrapping_sub(1), j, k),
                        (i + 1, j, k),
                        (i, j.wrapping_sub(1), k),
                        (i, j + 1, k),
                        (i, j, k.wrapping_sub(1)),
                        (i, j, k + 1),
                    ];
                    let exposed = neighbors.iter().any(|&(a, b, c)| {
                        a >= nx || b >= ny || c >= nz || !hull.occupied(a, b, c)
                    });
                    if exposed {
                        count += 1;
                    }
                }
            }
        }
        assert_eq!(seeds.object.positions.len(), count);
    }

    #[test]
    fn background_excludes_points_near_hull() {
        let center = Vec3::new(0.0, 0.0, 0.4);
        let radius = 0.05;
        let shell = sphere_shell(center, radius);
        // Camera looking at the sphere from +x; depth chosen so the central
        // pixel back-projects right onto the hull surface.
        let eye = center + Vec3::new(0.5, 0.0, 0.0);
        let cam = CameraView::look_at(eye, center, Vec3::z(), 60.0, 60.0, 48, 48, 0.05, 50.0)
            .unwrap();
        let mut frame = flat_frame(cam, 0.5 - radius);
        // One far pixel: 1 m beyond everything.
        frame.depth.set(0, 0, 1.5);
        let seeds = seed_points(&shell, &[frame], 0.01, 100_000).unwrap();
        // No background seed may be near the hull surface.
        for p in &seeds.background.positions {
            assert!(shell.signed_distance(*p) > 0.01);
        }
        // The far pixel's point is clearly included.
        assert!(seeds
            .background
            .positions
            .iter()
            .any(|p| (p - eye).norm() > 1.2));
        // Disjointness: object seeds are near the surface, background far.
        for p in &seeds.object.positions {
            assert!(shell.signed_distance(*p).abs() <= 0.01);
        }
    }

    #[test]
    fn no_overlap_is_an_error() {
        let center = Vec3::new(0.0, 0.0, 0.4);
        let shell = sphere_shell(center, 0.05);
        // Camera pointing away from the hull.
        let cam = CameraView::look_at(
            center + Vec3::new(0.5, 0.0, 0.0),
            center + Vec3::new(5.0, 0.0, 0.0),
            Vec3::z(),
            60.0,
            60.0,
            32,
            32,
            0.05,
            50.0,
        )
        .unwrap();
        assert!(seed_points(&shell, &[flat_frame(cam, 1.0)], 0.01, 1000).is_err());
    }

    #[test]
    fn background_budget_respected() {
        let center = Vec3::new(0.0, 0.0, 0.4);
        let shell = sphere_shell(center, 0.05);
        let cam = ring_views(3, center, 0.6, 64).remove(1);
        let frames = vec![flat_frame(cam, 3.0)];
        let seeds = seed_points(&shell, &frames, 0.01, 500).unwrap();
        assert!(seeds.background.positions.len() <= 500 * 2);
        assert!(!seeds.background.positions.is_empty());
    }
}
