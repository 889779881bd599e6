//! Gaussian primitive data model, pinhole camera, and forward splatting
//! renderer producing color, depth, and normal images by global depth
//! sorting and alpha compositing.

mod render;

pub use render::{
    backprop, render, render_forward, ImageAdjoints, ParamGrads, RenderContext, RenderOptions,
    RenderOutput,
};

use crate::math::{rot_of, Mat2, Mat3, Quat, UnitQuat, Vec2, Vec3};
use crate::{Error, Result};
use nalgebra::Isometry3;
use std::cmp::Ordering;

/// One anisotropic 3D Gaussian. Scales are standard deviations in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrimitive {
    pub center: Vec3,
    /// Kept unit-length (within 1e-6) by the optimizer; normalized wherever
    /// a rotation matrix is formed so intermediate drift is harmless.
    pub rotation: Quat,
    pub scale: Vec3,
    pub opacity: f64,
    pub color: Vec3,
    /// Anchored Gaussians keep center and opacity frozen during optimization.
    pub anchored: bool,
    /// Tactile supervision target; set only on anchored primitives.
    pub target_normal: Option<Vec3>,
}

impl GaussianPrimitive {
    pub fn new(center: Vec3, rotation: Quat, scale: Vec3, opacity: f64, color: Vec3) -> Self {
        Self {
            center,
            rotation,
            scale,
            opacity,
            color,
            anchored: false,
            target_normal: None,
        }
    }

    /// Isotropic non-anchored Gaussian, identity rotation.
    pub fn isotropic(center: Vec3, sigma: f64, opacity: f64, color: Vec3) -> Self {
        Self::new(center, Quat::new(1.0, 0.0, 0.0, 0.0), Vec3::repeat(sigma), opacity, color)
    }

    /// Validates the type invariants.
    pub fn validate(&self) -> Result<()> {
        if (self.rotation.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::Numerical(format!(
                "quaternion norm {} not unit",
                self.rotation.norm()
            )));
        }
        if self.scale.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Numerical(format!("non-positive scale {:?}", self.scale)));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::Numerical(format!("opacity {} outside [0,1]", self.opacity)));
        }
        if self.color.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
            return Err(Error::Numerical(format!("color {:?} outside [0,1]", self.color)));
        }
        if self.anchored {
            match self.target_normal {
                Some(n) if (n.norm() - 1.0).abs() <= 1e-6 => {}
                Some(n) => {
                    return Err(Error::Numerical(format!("target normal {n:?} not unit")));
                }
                None => {
                    return Err(Error::Numerical("anchored without target normal".into()));
                }
            }
        }
        Ok(())
    }

    /// World-frame 3x3 covariance R diag(s^2) R^T.
    pub fn covariance(&self) -> Mat3 {
        let r = rot_of(&self.rotation);
        let s2 = Mat3::from_diagonal(&self.scale.component_mul(&self.scale));
        r * s2 * r.transpose()
    }

    /// Index of the smallest scale component (ties to the lowest index).
    pub fn min_scale_axis(&self) -> usize {
        let s = &self.scale;
        let mut k = 0;
        for i in 1..3 {
            if s[i] < s[k] {
                k = i;
            }
        }
        k
    }

    /// Unit geometric normal: the rotated axis of the smallest scale
    /// component, sign-flipped to point toward `toward` (world point).
    pub fn geometric_normal(&self, toward: Vec3) -> Vec3 {
        let axis = self.min_scale_axis();
        let r = rot_of(&self.rotation);
        let mut n = r.column(axis).into_owned();
        if n.dot(&(toward - self.center)) < 0.0 {
            n = -n;
        }
        n
    }
}

/// Input-order-independent total order on primitives, used to break exact
/// depth ties during sorting so rendering is permutation invariant.
pub fn canonical_cmp(a: &GaussianPrimitive, b: &GaussianPrimitive) -> Ordering {
    let fa = [
        a.center.x, a.center.y, a.center.z, a.rotation.w, a.rotation.i, a.rotation.j,
        a.rotation.k, a.scale.x, a.scale.y, a.scale.z, a.opacity, a.color.x, a.color.y,
        a.color.z,
    ];
    let fb = [
        b.center.x, b.center.y, b.center.z, b.rotation.w, b.rotation.i, b.rotation.j,
        b.rotation.k, b.scale.x, b.scale.y, b.scale.z, b.opacity, b.color.x, b.color.y,
        b.color.z,
    ];
    for (x, y) in fa.iter().zip(&fb) {
        match x.total_cmp(y) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    a.anchored.cmp(&b.anchored)
}

/// Pinhole camera with a world-to-camera rigid pose. The camera looks down
/// +z; pixel (row, col) has center (col + 0.5, row + 0.5).
#[derive(Debug, Clone)]
pub struct CameraView {
    pub pose: Isometry3<f64>,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
}

impl CameraView {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        pose: Isometry3<f64>,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        near: f64,
        far: f64,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::Config(format!("focal lengths must be positive: {fx}, {fy}")));
        }
        if !(near < far) {
            return Err(Error::Config(format!("near {near} must be < far {far}")));
        }
        Ok(Self { pose, fx, fy, cx, cy, width, height, near, far })
    }

    /// Camera center expressed in the world frame.
    pub fn center_world(&self) -> Vec3 {
        self.pose.inverse_transform_point(&nalgebra::Point3::origin()).coords
    }

    pub fn world_to_cam(&self, p: Vec3) -> Vec3 {
        self.pose.transform_point(&nalgebra::Point3::from(p)).coords
    }

    /// Projects a camera-frame point to continuous pixel coordinates.
    pub fn cam_to_pixel(&self, p_cam: Vec3) -> Vec2 {
        Vec2::new(self.fx * p_cam.x / p_cam.z + self.cx, self.fy * p_cam.y / p_cam.z + self.cy)
    }

    /// Back-projects pixel (col+0.5, row+0.5 style continuous coords) at a
    /// camera depth z into the world frame.
    pub fn back_project(&self, px: Vec2, z: f64) -> Vec3 {
        let cam = Vec3::new((px.x - self.cx) / self.fx * z, (px.y - self.cy) / self.fy * z, z);
        self.pose.inverse_transform_point(&nalgebra::Point3::from(cam)).coords
    }

    /// Look-at constructor: camera at `eye`, +z toward `target`, `up` hint.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        fx: f64,
        fy: f64,
        width: usize,
        height: usize,
        near: f64,
        far: f64,
    ) -> Result<Self> {
        let z = (target - eye).normalize();
        let x = up.cross(&z);
        let x = if x.norm() < 1e-9 {
            // up parallel to view direction; pick any perpendicular
            crate::math::tangent_basis(z).0
        } else {
            x.normalize()
        };
        let y = z.cross(&x);
        let rot = Mat3::from_columns(&[x, y, z]);
        // world->camera: R^T (p - eye)
        let r_wc = rot.transpose();
        let q = UnitQuat::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(r_wc));
        let t = -(r_wc * eye);
        let pose = Isometry3::from_parts(t.into(), q);
        Self::new(pose, fx, fy, width as f64 / 2.0, height as f64 / 2.0, width, height, near, far)
    }
}

/// Minimum isotropic floor added to the projected covariance diagonal, px^2.
pub const COV2D_FLOOR: f64 = 0.3;
/// Compositing alpha ceiling.
pub const ALPHA_CLIP: f64 = 0.99;
/// Per-pixel compositing stops once transmittance falls below this.
pub const TERMINATE_T: f64 = 1e-4;
/// Splat support is truncated where the blending alpha would fall below
/// this; keeps the rendered function smooth enough for finite-difference
/// gradient verification while bounding rasterization cost.
pub const ALPHA_SUPPORT_MIN: f64 = 1e-8;

/// A projected (screen-space) splat plus the intermediates the backward
/// pass needs.
#[derive(Debug, Clone)]
pub struct Splat {
    pub gauss_idx: usize,
    /// Screen-space mean, continuous pixel coordinates.
    pub mean: Vec2,
    /// 2x2 projected covariance (floor included).
    pub cov: Mat2,
    pub cov_inv: Mat2,
    /// Camera-space depth of the center.
    pub depth: f64,
    pub opacity: f64,
    pub color: Vec3,
    /// Unit normal in the camera frame, facing the camera.
    pub normal_cam: Vec3,
    /// Camera-frame center.
    pub x_cam: Vec3,
    /// Squared Mahalanobis support cutoff for this splat.
    pub support_m2: f64,
    /// Inclusive pixel bounds (col0, row0, col1, row1) clipped to the image.
    pub bbox: (usize, usize, usize, usize),
}

/// Projects one Gaussian into a screen splat. Returns `None` when culled:
/// center behind the near plane, or support entirely outside the image.
pub fn project_gaussian(g: &GaussianPrimitive, cam: &CameraView) -> Option<Splat> {
    let x_cam = cam.world_to_cam(g.center);
    let z = x_cam.z;
    if z <= cam.near {
        return None;
    }
    let mean = cam.cam_to_pixel(x_cam);

    let r_cw = cam.pose.rotation.to_rotation_matrix().into_inner();
    let cov_w = g.covariance();
    let cov_cam = r_cw * cov_w * r_cw.transpose();
    let j = proj_jacobian(cam, x_cam);
    let mut cov2 = j * cov_cam * j.transpose();
    cov2[(0, 0)] += COV2D_FLOOR;
    cov2[(1, 1)] += COV2D_FLOOR;
    let cov2 = Mat2::new(cov2[(0, 0)], cov2[(0, 1)], cov2[(0, 1)], cov2[(1, 1)]);

    let det = cov2[(0, 0)] * cov2[(1, 1)] - cov2[(0, 1)] * cov2[(0, 1)];
    if det <= 0.0 {
        return None; // floor makes this unreachable for finite inputs
    }
    let cov_inv = Mat2::new(cov2[(1, 1)], -cov2[(0, 1)], -cov2[(0, 1)], cov2[(0, 0)]) / det;

    // Support where alpha >= ALPHA_SUPPORT_MIN.
    let o = g.opacity.max(1e-4);
    let support_m2 = 2.0 * (o.ln() - ALPHA_SUPPORT_MIN.ln());
    if support_m2 <= 0.0 {
        return None;
    }
    // Marginal standard deviations bound the support ellipse.
    let rx = (support_m2 * cov2[(0, 0)]).sqrt();
    let ry = (support_m2 * cov2[(1, 1)]).sqrt();
    let c0 = (mean.x - rx - 0.5).floor();
    let c1 = (mean.x + rx - 0.5).ceil();
    let r0 = (mean.y - ry - 0.5).floor();
    let r1 = (mean.y + ry - 0.5).ceil();
    if c1 < 0.0 || r1 < 0.0 || c0 > cam.width as f64 - 1.0 || r0 > cam.height as f64 - 1.0 {
        return None;
    }
    let bbox = (
        c0.max(0.0) as usize,
        r0.max(0.0) as usize,
        c1.min(cam.width as f64 - 1.0) as usize,
        r1.min(cam.height as f64 - 1.0) as usize,
    );

    let normal_world = g.geometric_normal(cam.center_world());
    let normal_cam = r_cw * normal_world;

    Some(Splat {
        gauss_idx: 0,
        mean,
        cov: cov2,
        cov_inv,
        depth: z,
        opacity: g.opacity,
        color: g.color,
        normal_cam,
        x_cam,
        support_m2,
        bbox,
    })
}

/// Jacobian of the pinhole projection at a camera-frame point (2x3).
pub(crate) fn proj_jacobian(cam: &CameraView, x: Vec3) -> nalgebra::Matrix2x3<f64> {
    let z = x.z;
    nalgebra::Matrix2x3::new(
        cam.fx / z,
        0.0,
        -cam.fx * x.x / (z * z),
        0.0,
        cam.fy / z,
        -cam.fy * x.y / (z * z),
    )
}

/// Blending coefficient of a splat at a pixel: o * exp(-0.5 d^T Sigma^-1 d).
/// Raw value in [0, opacity]; the compositor separately clips at 0.99.
pub fn blend_alpha(splat: &Splat, p: Vec2) -> f64 {
    let d = p - splat.mean;
    let m = (splat.cov_inv * d).dot(&d);
    splat.opacity * (-0.5 * m).exp()
}

/// Compositing-path alpha: returns `(clipped alpha, raw alpha, delta)` or
/// `None` beyond the splat's support cutoff. Forward and backward passes
/// share this so they see exactly the same function.
pub(crate) fn blend_alpha_parts(splat: &Splat, p: Vec2) -> Option<(f64, f64, Vec2)> {
    let d = p - splat.mean;
    let m = (splat.cov_inv * d).dot(&d);
    if m > splat.support_m2 {
        return None;
    }
    let raw = splat.opacity * (-0.5 * m).exp();
    Some((raw.min(ALPHA_CLIP), raw, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Iso3;
    use approx::assert_relative_eq;

    pub(crate) fn axis_cam(width: usize, height: usize, focal: f64) -> CameraView {
        CameraView::new(
            Iso3::identity(),
            focal,
            focal,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
            0.01,
            100.0,
        )
        .unwrap()
    }

    #[test]
    fn on_axis_projection_hits_principal_point() {
        let cam = axis_cam(64, 64, 100.0);
        let g = GaussianPrimitive::isotropic(Vec3::new(0.0, 0.0, 1.0), 0.05, 0.8, Vec3::zeros());
        let s = project_gaussian(&g, &cam).unwrap();
        assert_relative_eq!(s.mean.x, 32.0, epsilon = 1e-12);
        assert_relative_eq!(s.mean.y, 32.0, epsilon = 1e-12);
        assert_relative_eq!(s.depth, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn isotropic_on_axis_covariance_matches_numerical_jacobian() {
        // On-axis isotropic Gaussian: Sigma' ~ (f*sigma/z)^2 I + floor.
        let cam = axis_cam(64, 64, 120.0);
        let (sigma, z) = (0.04, 2.0);
        let g = GaussianPrimitive::isotropic(Vec3::new(0.0, 0.0, z), sigma, 0.9, Vec3::zeros());
        let s = project_gaussian(&g, &cam).unwrap();
        let expect = (cam.fx * sigma / z).powi(2);
        assert_relative_eq!(s.cov[(0, 0)], expect + COV2D_FLOOR, epsilon = 1e-9);
        assert_relative_eq!(s.cov[(1, 1)], expect + COV2D_FLOOR, epsilon = 1e-9);
        assert_relative_eq!(s.cov[(0, 1)], 0.0, epsilon = 1e-9);

        // Off-axis anisotropic case: compare against a numerically propagated
        // covariance J Sigma J^T built from central differences of the
        // projection map.
        let g2 = GaussianPrimitive::new(
            Vec3::new(0.3, -0.2, 1.7),
            Quat::new(0.9, 0.1, -0.2, 0.3),
            Vec3::new(0.03, 0.06, 0.01),
            0.9,
            Vec3::zeros(),
        );
        let s2 = project_gaussian(&g2, &cam).unwrap();
        let h = 1e-6;
        let mut j_num = nalgebra::Matrix2x3::<f64>::zeros();
        for k in 0..3 {
            let mut dp = Vec3::zeros();
            dp[k] = h;
            let pp = cam.cam_to_pixel(cam.world_to_cam(g2.center + dp));
            let pm = cam.cam_to_pixel(cam.world_to_cam(g2.center - dp));
            let d = (pp - pm) / (2.0 * h);
            j_num[(0, k)] = d.x;
            j_num[(1, k)] = d.y;
        }
        let cov_num = j_num * g2.covariance() * j_num.transpose();
        for r in 0..2 {
            for c in 0..2 {
                let floor = if r == c { COV2D_FLOOR } else { 0.0 };
                assert_relative_eq!(s2.cov[(r, c)], cov_num[(r, c)] + floor, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn behind_camera_is_culled() {
        let cam = axis_cam(64, 64, 100.0);
        let g = GaussianPrimitive::isotropic(Vec3::new(0.0, 0.0, -0.1), 0.05, 0.8, Vec3::zeros());
        assert!(project_gaussian(&g, &cam).is_none());
    }

    #[test]
    fn far_off_image_is_culled() {
        let cam = axis_cam(64, 64, 100.0);
        let g = GaussianPrimitive::isotropic(Vec3::new(50.0, 0.0, 1.0), 0.01, 0.8, Vec3::zeros());
        assert!(project_gaussian(&g, &cam).is_none());
    }

    #[test]
    fn blend_alpha_closed_forms() {
        let cam = axis_cam(64, 64, 100.0);
        let g = GaussianPrimitive::isotropic(Vec3::new(0.0, 0.0, 1.0), 0.05, 0.8, Vec3::zeros());
        let s = project_gaussian(&g, &cam).unwrap();
        // At the mean the exponent vanishes.
        assert_relative_eq!(blend_alpha(&s, s.mean), 0.8, epsilon = 1e-12);

        // Zero opacity: alpha = 0 at every pixel.
        let mut g0 = g.clone();
        g0.opacity = 0.0;
        let s0 = Splat { opacity: 0.0, ..s.clone() };
        assert_eq!(blend_alpha(&s0, s0.mean), 0.0);
        assert_eq!(blend_alpha(&s0, s0.mean + Vec2::new(3.0, -2.0)), 0.0);
        drop(g0);

        // One Mahalanobis unit from the mean with unit opacity.
        let s1 = Splat { opacity: 1.0, ..s };
        let sd = s1.cov[(0, 0)].sqrt();
        let p = s1.mean + Vec2::new(sd, 0.0);
        assert_relative_eq!(blend_alpha(&s1, p), (-0.5f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn geometric_normal_unit_and_facing() {
        let g = GaussianPrimitive::new(
            Vec3::new(0.0, 0.0, 2.0),
            Quat::new(0.7, 0.3, -0.4, 0.2),
            Vec3::new(0.05, 0.002, 0.04),
            0.8,
            Vec3::zeros(),
        );
        let toward = Vec3::new(0.3, -0.1, 0.0);
        let n = g.geometric_normal(toward);
        assert_relative_eq!(n.norm(), 1.0, epsilon = 1e-12);
        assert!(n.dot(&(toward - g.center)) >= 0.0);
        assert_eq!(g.min_scale_axis(), 1);
    }

    #[test]
    fn validate_rejects_bad_primitives() {
        let ok = GaussianPrimitive::isotropic(Vec3::zeros(), 0.01, 0.5, Vec3::repeat(0.5));
        assert!(ok.validate().is_ok());
        let mut bad = ok.clone();
        bad.scale.y = 0.0;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.opacity = 1.2;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.anchored = true;
        assert!(bad.validate().is_err()); // anchored requires target normal
        bad.target_normal = Some(Vec3::new(0.0, 0.0, -1.0));
        assert!(bad.validate().is_ok());
    }
}
