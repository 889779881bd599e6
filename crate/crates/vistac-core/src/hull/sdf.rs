//! Shell construction: exact Euclidean distance transform on the voxel
//! grid, signed with the surface at occupied/free voxel faces.

use super::{GridSpec, HullShell, VoxelHull};
use crate::{Error, Result};

const INF: f64 = 1e20;

/// 1D squared distance transform (Felzenszwalb & Huttenlocher lower
/// envelope of parabolas).
fn dt1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    z[0] = -INF;
    z[1] = INF;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                if k == 0 {
                    break;
                }
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = INF;
    }
    let mut k = 0usize;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        out[q] = d * d + f[p];
    }
}

/// 3D squared EDT (units: voxels^2) of the `seed` set: distance 0 at seeds.
fn edt3(spec: &GridSpec, seed: impl Fn(usize) -> bool) -> Vec<f64> {
    let [nx, ny, nz] = spec.dims;
    let mut d: Vec<f64> =
        (0..spec.len()).map(|i| if seed(i) { 0.0 } else { INF }).collect();
    let mut buf_in = vec![0.0f64; nx.max(ny).max(nz)];
    let mut buf_out = vec![0.0f64; nx.max(ny).max(nz)];
    // x pass
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                buf_in[i] = d[spec.idx(i, j, k)];
            }
            dt1d(&buf_in[..nx], &mut buf_out[..nx]);
            for i in 0..nx {
                d[spec.idx(i, j, k)] = buf_out[i];
            }
        }
    }
    // y pass
    for k in 0..nz {
        for i in 0..nx {
            for j in 0..ny {
                buf_in[j] = d[spec.idx(i, j, k)];
            }
            dt1d(&buf_in[..ny], &mut buf_out[..ny]);
            for j in 0..ny {
                d[spec.idx(i, j, k)] = buf_out[j];
            }
        }
    }
    // z pass
    for j in 0..ny {
        for i in 0..nx {
            for k in 0..nz {
                buf_in[k] = d[spec.idx(i, j, k)];
            }
            dt1d(&buf_in[..nz], &mut buf_out[..nz]);
            for k in 0..nz {
                d[spec.idx(i, j, k)] = buf_out[k];
            }
        }
    }
    d
}

/// Builds the tolerance shell around a hull. The signed distance grid is
/// padded so queries out to `t_exterior` plus a 12 cm margin stay on-grid
/// (hull pruning queries a dilated region of interest).
pub fn build_shell(hull: &VoxelHull, t_interior: f64, t_exterior: f64) -> Result<HullShell> {
    let res = hull.spec.resolution;
    if hull.occupied_count() == 0 {
        return Err(Error::Config("cannot build a shell around an empty hull".into()));
    }
    if t_interior < res {
        return Err(Error::Config(format!(
            "interior thickness {t_interior} must be at least the voxel resolution {res}"
        )));
    }
    if !(t_exterior > 0.0) {
        return Err(Error::Config("exterior thickness must be positive".into()));
    }

    let pad = ((t_exterior + 0.12) / res).ceil() as usize + 2;
    let [nx, ny, nz] = hull.spec.dims;
    let spec = GridSpec {
        origin: hull.spec.origin
            - crate::math::Vec3::repeat(pad as f64 * res),
        resolution: res,
        dims: [nx + 2 * pad, ny + 2 * pad, nz + 2 * pad],
    };

    // Occupancy on the padded grid.
    let occupied_at = |idx: usize| -> bool {
        let pnx = spec.dims[0];
        let pny = spec.dims[1];
        let i = idx % pnx;
        let j = (idx / pnx) % pny;
        let k = idx / (pnx * pny);
        if i < pad || j < pad || k < pad {
            return false;
        }
        let (i, j, k) = (i - pad, j - pad, k - pad);
        if i >= nx || j >= ny || k >= nz {
            return false;
        }
        hull.occupied(i, j, k)
    };

    let d_to_occ = edt3(&spec, occupied_at);
    let d_to_free = edt3(&spec, |i| !occupied_at(i));

    // Signed distance to the surface: half a voxel inside each boundary
    // cell, so the zero level sits on shared voxel faces.
    let sdf: Vec<f64> = (0..spec.len())
        .map(|i| {
            if occupied_at(i) {
                -(d_to_free[i].sqrt() - 0.5) * res
            } else {
                (d_to_occ[i].sqrt() - 0.5) * res
            }
        })
        .collect();

    Ok(HullShell { hull: hull.clone(), t_interior, t_exterior, sdf_spec: spec, sdf })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hull::carve::tests::sphere_masks;
    use crate::hull::{carve, fit_grid};
    use crate::math::Vec3;

    fn sphere_shell() -> (HullShell, Vec3, f64) {
        let center = Vec3::new(0.1, 0.0, 0.35);
        let radius = 0.05;
        let masks = sphere_masks(9, center, radius, 72);
        let spec = fit_grid(&masks, 0.005).unwrap();
        let hull = carve(&masks, &spec).unwrap();
        let shell = build_shell(&hull, 0.005, 0.02).unwrap();
        (shell, center, radius)
    }

    #[test]
    fn signed_distance_matches_brute_force_near_surface() {
        let (shell, center, radius) = sphere_shell();
        let surface: Vec<Vec3> = shell
            .hull
            .surface_voxels()
            .iter()
            .map(|&[i, j, k]| shell.hull.spec.voxel_center(i, j, k))
            .collect();
        let res = shell.hull.spec.resolution;
        let tol = res * 3.0f64.sqrt();
        // Probe points on rays through the sphere center.
        for step in 0..40 {
            let t = step as f64 / 39.0;
            let dir = Vec3::new((t * 9.1).sin(), (t * 7.3).cos(), (t * 5.7).sin()).normalize();
            let p = center + dir * (radius + (t - 0.5) * 0.06);
            let d = shell.signed_distance(p);
            let brute = surface
                .iter()
                .map(|s| (p - s).norm())
                .fold(f64::INFINITY, f64::min)
                - 0.5 * res;
            assert!(
                (d.abs() - brute.abs()).abs() <= tol,
                "sdf {d} vs brute {brute} at {p:?}"
            );
        }
    }

    #[test]
    fn band_and_permitted_region_boundaries() {
        let (shell, center, _) = sphere_shell();
        // On the hull surface (a surface voxel center): |d| within half a
        // voxel diagonal of zero, inside the band and the permitted region.
        let sv = shell.hull.surface_voxels();
        let on_surface = {
            let [i, j, k] = sv[sv.len() / 2];
            shell.hull.spec.voxel_center(i, j, k)
        };
        let d = shell.signed_distance(on_surface);
        assert!(d.abs() < 0.005, "surface distance {d}");
        assert!(shell.in_band(on_surface));
        assert!(shell.permitted(on_surface));

        // Well outside the exterior thickness along the outward direction:
        // not permitted.
        let n = shell.outward_normal(on_surface).unwrap();
        let outside = on_surface + n * (shell.t_exterior + 0.03);
        assert!(shell.signed_distance(outside) > shell.t_exterior);
        assert!(!shell.permitted(outside));
        // Two centimeters out sits at the boundary of the permitted region.
        let boundary = on_surface + n * (d.abs() + shell.t_exterior);
        let db = shell.signed_distance(boundary);
        assert!((db - shell.t_exterior).abs() < 0.006, "boundary distance {db}");

        // Deep interior: permitted but outside the band.
        let deep = center;
        assert!(shell.signed_distance(deep) < -shell.t_interior);
        assert!(shell.permitted(deep));
        assert!(!shell.in_band(deep));
    }

    #[test]
    fn outward_normal_points_away_from_sphere_center() {
        let (shell, center, radius) = sphere_shell();
        for dir in [Vec3::x(), Vec3::y(), Vec3::new(0.5, -0.5, 0.7).normalize()] {
            let p = center + dir * radius;
            let n = shell.outward_normal(p).unwrap();
            assert!(n.dot(&dir) > 0.5, "normal {n:?} vs dir {dir:?}");
        }
    }

    #[test]
    fn interior_thickness_below_resolution_rejected() {
        let (shell, _, _) = sphere_shell();
        assert!(build_shell(&shell.hull, 0.001, 0.02).is_err());
    }
}
