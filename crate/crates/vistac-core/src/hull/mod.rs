//! Voxel-carving visual hull from silhouettes, shell-band construction on a
//! signed distance field, and hybrid seed-point generation.

pub(crate) mod carve;
mod sdf;
mod seeds;

pub use carve::{carve, fit_grid};
pub use sdf::build_shell;
pub use seeds::{seed_points, DepthPriorFrame, SeedPoints};

use crate::gaussian::CameraView;
use crate::img::Mask;
use crate::math::{Aabb, Vec3};
use crate::{Error, Result};

/// Axis-aligned voxel grid placement.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// World position of the grid's minimum corner.
    pub origin: Vec3,
    /// Voxel edge length, meters.
    pub resolution: f64,
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin
            + Vec3::new(
                (i as f64 + 0.5) * self.resolution,
                (j as f64 + 0.5) * self.resolution,
                (k as f64 + 0.5) * self.resolution,
            )
    }

    /// Voxel containing a world point, or None when outside the grid.
    pub fn voxel_of(&self, p: Vec3) -> Option<[usize; 3]> {
        let rel = (p - self.origin) / self.resolution;
        let mut out = [0usize; 3];
        for a in 0..3 {
            if rel[a] < 0.0 || rel[a] >= self.dims[a] as f64 {
                return None;
            }
            out[a] = rel[a] as usize;
        }
        Some(out)
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::new(
            self.origin,
            self.origin
                + Vec3::new(
                    self.dims[0] as f64 * self.resolution,
                    self.dims[1] as f64 * self.resolution,
                    self.dims[2] as f64 * self.resolution,
                ),
        )
    }
}

/// Occupancy grid carved from silhouettes.
#[derive(Debug, Clone)]
pub struct VoxelHull {
    pub spec: GridSpec,
    pub occupancy: Vec<bool>,
}

impl VoxelHull {
    pub fn occupied(&self, i: usize, j: usize, k: usize) -> bool {
        self.occupancy[self.spec.idx(i, j, k)]
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&b| b).count()
    }

    /// Whether a world point falls in an occupied voxel.
    pub fn contains_point(&self, p: Vec3) -> bool {
        match self.spec.voxel_of(p) {
            Some([i, j, k]) => self.occupied(i, j, k),
            None => false,
        }
    }

    /// Occupied voxels with at least one free 6-neighbor (grid boundary
    /// counts as free).
    pub fn surface_voxels(&self) -> Vec<[usize; 3]> {
        let [nx, ny, nz] = self.spec.dims;
        let mut out = Vec::new();
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    if !self.occupied(i, j, k) {
                        continue;
                    }
                    let mut surface = i == 0 || j == 0 || k == 0
                        || i + 1 == nx || j + 1 == ny || k + 1 == nz;
                    if !surface {
                        surface = !self.occupied(i - 1, j, k)
                            || !self.occupied(i + 1, j, k)
                            || !self.occupied(i, j - 1, k)
                            || !self.occupied(i, j + 1, k)
                            || !self.occupied(i, j, k - 1)
                            || !self.occupied(i, j, k + 1);
                    }
                    if surface {
                        out.push([i, j, k]);
                    }
                }
            }
        }
        out
    }

    /// Number of 6-connected components among occupied voxels.
    pub fn connected_components(&self) -> usize {
        let [nx, ny, nz] = self.spec.dims;
        let mut seen = vec![false; self.occupancy.len()];
        let mut components = 0;
        let mut stack = Vec::new();
        for start in 0..self.occupancy.len() {
            if !self.occupancy[start] || seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(v) = stack.pop() {
                let i = v % nx;
                let j = (v / nx) % ny;
                let k = v / (nx * ny);
                let mut push = |ii: usize, jj: usize, kk: usize| {
                    let u = self.spec.idx(ii, jj, kk);
                    if self.occupancy[u] && !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                };
                if i > 0 {
                    push(i - 1, j, k);
                }
                if i + 1 < nx {
                    push(i + 1, j, k);
                }
                if j > 0 {
                    push(i, j - 1, k);
                }
                if j + 1 < ny {
                    push(i, j + 1, k);
                }
                if k > 0 {
                    push(i, j, k - 1);
                }
                if k + 1 < nz {
                    push(i, j, k + 1);
                }
            }
        }
        components
    }

    /// Tight bounds of the occupied voxels.
    pub fn occupied_bounds(&self) -> Option<Aabb> {
        let [nx, ny, nz] = self.spec.dims;
        let mut bb: Option<Aabb> = None;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    if self.occupied(i, j, k) {
                        let half = Vec3::repeat(self.spec.resolution * 0.5);
                        let c = self.spec.voxel_center(i, j, k);
                        match &mut bb {
                            Some(b) => {
                                b.expand(c - half);
                                b.expand(c + half);
                            }
                            None => bb = Some(Aabb::new(c - half, c + half)),
                        }
                    }
                }
            }
        }
        bb
    }
}

/// Binary silhouette paired with its view.
#[derive(Debug, Clone)]
pub struct SilhouetteMask {
    pub mask: Mask,
    pub camera: CameraView,
}

impl SilhouetteMask {
    pub fn new(mask: Mask, camera: CameraView) -> Result<Self> {
        if mask.w != camera.width || mask.h != camera.height {
            return Err(Error::DimensionMismatch(format!(
                "silhouette {}x{} vs view {}x{}",
                mask.w, mask.h, camera.width, camera.height
            )));
        }
        Ok(Self { mask, camera })
    }
}

/// Tolerance band around the hull surface, backed by a signed distance
/// field on a padded voxel grid (negative inside the hull).
#[derive(Debug, Clone)]
pub struct HullShell {
    pub hull: VoxelHull,
    pub t_interior: f64,
    pub t_exterior: f64,
    pub sdf_spec: GridSpec,
    pub sdf: Vec<f64>,
}

impl HullShell {
    /// Trilinearly interpolated signed distance to the hull surface;
    /// queries outside the padded grid clamp to the border.
    pub fn signed_distance(&self, p: Vec3) -> f64 {
        let spec = &self.sdf_spec;
        let rel = (p - spec.origin) / spec.resolution - Vec3::repeat(0.5);
        let [nx, ny, nz] = spec.dims;
        let cl = |v: f64, n: usize| v.clamp(0.0, (n - 1) as f64);
        let (x, y, z) = (cl(rel.x, nx), cl(rel.y, ny), cl(rel.z, nz));
        let (i0, j0, k0) = (x as usize, y as usize, z as usize);
        let (i1, j1, k1) = ((i0 + 1).min(nx - 1), (j0 + 1).min(ny - 1), (k0 + 1).min(nz - 1));
        let (fx, fy, fz) = (x - i0 as f64, y - j0 as f64, z - k0 as f64);
        let at = |i, j, k| self.sdf[spec.idx(i, j, k)];
        let c00 = at(i0, j0, k0) * (1.0 - fx) + at(i1, j0, k0) * fx;
        let c10 = at(i0, j1, k0) * (1.0 - fx) + at(i1, j1, k0) * fx;
        let c01 = at(i0, j0, k1) * (1.0 - fx) + at(i1, j0, k1) * fx;
        let c11 = at(i0, j1, k1) * (1.0 - fx) + at(i1, j1, k1) * fx;
        let c0 = c00 * (1.0 - fy) + c10 * fy;
        let c1 = c01 * (1.0 - fy) + c11 * fy;
        c0 * (1.0 - fz) + c1 * fz
    }

    /// Hull plus exterior tolerance: d <= t_exterior.
    pub fn permitted(&self, p: Vec3) -> bool {
        self.signed_distance(p) <= self.t_exterior
    }

    /// Inside the band [-t_interior, t_exterior] around the surface.
    pub fn in_band(&self, p: Vec3) -> bool {
        let d = self.signed_distance(p);
        -self.t_interior <= d && d <= self.t_exterior
    }

    /// Outward surface direction from the SDF gradient (central
    /// differences); `None` where the gradient degenerates.
    pub fn outward_normal(&self, p: Vec3) -> Option<Vec3> {
        let h = self.sdf_spec.resolution;
        let g = Vec3::new(
            self.signed_distance(p + Vec3::x() * h) - self.signed_distance(p - Vec3::x() * h),
            self.signed_distance(p + Vec3::y() * h) - self.signed_distance(p - Vec3::y() * h),
            self.signed_distance(p + Vec3::z() * h) - self.signed_distance(p - Vec3::z() * h),
        );
        crate::math::try_normalize(g, 1e-9)
    }
}
