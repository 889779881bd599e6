//! Forward splatting renderer and its analytic backward pass.
//!
//! Splats are depth-sorted globally per view and alpha-composited
//! front-to-back with shared `alpha_k T_k` weights for color, depth, and
//! normal. The backward pass re-walks the same composite in reverse order,
//! so gradients are exact for the function the forward pass actually
//! computed (including alpha clipping, support truncation, and early
//! termination).

use super::{
    blend_alpha_parts, canonical_cmp, project_gaussian, proj_jacobian, CameraView,
    GaussianPrimitive, Splat, ALPHA_CLIP, TERMINATE_T,
};
use crate::img::{GrayImage, Grid2, RgbImage};
use crate::math::{rot_jacobian, rot_of, Mat2, Mat3, Vec2, Vec3};
use rayon::prelude::*;

const BAND_ROWS: usize = 16;

#[derive(Debug, Clone)]
pub struct RenderOptions {
    /// Composited behind the scene with the residual transmittance.
    pub background: Vec3,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { background: Vec3::zeros() }
    }
}

/// Composited per-pixel outputs of one view.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub color: RgbImage,
    /// Premultiplied depth composite (meters).
    pub depth: GrayImage,
    /// Raw normal composite (not normalized per pixel), camera frame.
    pub normal: RgbImage,
    /// Final transmittance per pixel.
    pub transmittance: GrayImage,
}

/// Forward-pass state needed by [`backprop`].
pub struct RenderContext {
    /// Sorted splats, `gauss_idx` pointing into the input scene.
    pub splats: Vec<Splat>,
    /// Per pixel: index (in sort order) before which splats were composited.
    /// `u32::MAX` when compositing never terminated early.
    pub term_pos: Grid2<u32>,
}

/// Adjoint images: dLoss/d(output) for each composited channel.
pub struct ImageAdjoints {
    pub d_color: RgbImage,
    pub d_depth: GrayImage,
    pub d_normal: RgbImage,
}

/// Per-Gaussian parameter gradients of one backward pass.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub center: Vec<Vec3>,
    pub rotation: Vec<[f64; 4]>,
    pub scale: Vec<Vec3>,
    pub opacity: Vec<f64>,
    pub color: Vec<Vec3>,
    /// Norm of the accumulated screen-space positional gradient, per
    /// Gaussian; feeds the densification accumulator.
    pub view_pos_grad: Vec<f64>,
    /// Whether the Gaussian produced a splat in this view.
    pub visible: Vec<bool>,
}

impl ParamGrads {
    pub fn zeros(n: usize) -> Self {
        Self {
            center: vec![Vec3::zeros(); n],
            rotation: vec![[0.0; 4]; n],
            scale: vec![Vec3::zeros(); n],
            opacity: vec![0.0; n],
            color: vec![Vec3::zeros(); n],
            view_pos_grad: vec![0.0; n],
            visible: vec![false; n],
        }
    }

    pub fn add(&mut self, other: &ParamGrads) {
        for i in 0..self.center.len() {
            self.center[i] += other.center[i];
            for k in 0..4 {
                self.rotation[i][k] += other.rotation[i][k];
            }
            self.scale[i] += other.scale[i];
            self.opacity[i] += other.opacity[i];
            self.color[i] += other.color[i];
            self.view_pos_grad[i] += other.view_pos_grad[i];
            self.visible[i] = self.visible[i] || other.visible[i];
        }
    }
}

/// Projects and depth-sorts the scene for one view. Ties in depth are broken
/// by a canonical field ordering so the result is input-order independent.
fn sorted_splats(scene: &[GaussianPrimitive], cam: &CameraView) -> Vec<Splat> {
    let mut splats: Vec<Splat> = scene
        .iter()
        .enumerate()
        .filter_map(|(i, g)| {
            project_gaussian(g, cam).map(|mut s| {
                s.gauss_idx = i;
                s
            })
        })
        .collect();
    splats.sort_by(|a, b| {
        a.depth
            .total_cmp(&b.depth)
            .then_with(|| canonical_cmp(&scene[a.gauss_idx], &scene[b.gauss_idx]))
    });
    splats
}

/// Renders one view. An empty visible set produces the background color,
/// zero depth/normal, and unit transmittance.
pub fn render(scene: &[GaussianPrimitive], cam: &CameraView, opts: &RenderOptions) -> RenderOutput {
    render_forward(scene, cam, opts).0
}

/// Renders one view and keeps the state needed for a backward pass.
pub fn render_forward(
    scene: &[GaussianPrimitive],
    cam: &CameraView,
    opts: &RenderOptions,
) -> (RenderOutput, RenderContext) {
    let (w, h) = (cam.width, cam.height);
    let splats = sorted_splats(scene, cam);
    let bg = opts.background;

    let n_bands = h.div_ceil(BAND_ROWS);
    let bands: Vec<BandOut> = (0..n_bands)
        .into_par_iter()
        .map(|b| {
            let r0 = b * BAND_ROWS;
            let r1 = ((b + 1) * BAND_ROWS).min(h);
            forward_band(&splats, w, r0, r1, bg)
        })
        .collect();

    let mut out = RenderOutput {
        color: RgbImage::new(w, h, [bg.x, bg.y, bg.z]),
        depth: GrayImage::new(w, h, 0.0),
        normal: RgbImage::new(w, h, [0.0; 3]),
        transmittance: GrayImage::new(w, h, 1.0),
    };
    let mut term_pos = Grid2::new(w, h, u32::MAX);
    for (b, band) in bands.into_iter().enumerate() {
        let off = b * BAND_ROWS * w;
        let n = band.color.len();
        out.color.data[off..off + n].copy_from_slice(&band.color);
        out.depth.data[off..off + n].copy_from_slice(&band.depth);
        out.normal.data[off..off + n].copy_from_slice(&band.normal);
        out.transmittance.data[off..off + n].copy_from_slice(&band.trans);
        term_pos.data[off..off + n].copy_from_slice(&band.term);
    }
    (out, RenderContext { splats, term_pos })
}

struct BandOut {
    color: Vec<[f64; 3]>,
    depth: Vec<f64>,
    normal: Vec<[f64; 3]>,
    trans: Vec<f64>,
    term: Vec<u32>,
}

fn forward_band(splats: &[Splat], w: usize, r0: usize, r1: usize, bg: Vec3) -> BandOut {
    let n = (r1 - r0) * w;
    let mut color = vec![[0.0f64; 3]; n];
    let mut depth = vec![0.0f64; n];
    let mut normal = vec![[0.0f64; 3]; n];
    let mut trans = vec![1.0f64; n];
    let mut term = vec![u32::MAX; n];

    for (pos, s) in splats.iter().enumerate() {
        let (c0, b_r0, c1, b_r1) = s.bbox;
        let lo = b_r0.max(r0);
        let hi = b_r1.min(r1 - 1);
        if lo > hi {
            continue;
        }
        for r in lo..=hi {
            let row_off = (r - r0) * w;
            let py = r as f64 + 0.5;
            for c in c0..=c1 {
                let i = row_off + c;
                if term[i] != u32::MAX {
                    continue;
                }
                let p = Vec2::new(c as f64 + 0.5, py);
                let Some((alpha, _, _)) = blend_alpha_parts(s, p) else {
                    continue;
                };
                let t = trans[i];
                let wgt = alpha * t;
                color[i][0] += wgt * s.color.x;
                color[i][1] += wgt * s.color.y;
                color[i][2] += wgt * s.color.z;
                depth[i] += wgt * s.depth;
                normal[i][0] += wgt * s.normal_cam.x;
                normal[i][1] += wgt * s.normal_cam.y;
                normal[i][2] += wgt * s.normal_cam.z;
                trans[i] = t * (1.0 - alpha);
                if trans[i] < TERMINATE_T {
                    term[i] = pos as u32 + 1;
                }
            }
        }
    }
    for i in 0..n {
        let t = trans[i];
        color[i][0] += bg.x * t;
        color[i][1] += bg.y * t;
        color[i][2] += bg.z * t;
    }
    BandOut { color, depth, normal, trans, term }
}

/// Per-splat accumulators of the image-space backward pass.
#[derive(Clone, Copy, Default)]
struct SplatAcc {
    g_mean: [f64; 2],
    g_cov: [f64; 3], // (00, 01, 11)
    g_opacity: f64,
    g_color: [f64; 3],
    g_depth: f64,
    g_normal: [f64; 3],
    touched: bool,
}

/// Backward pass: given adjoints of the composited images, accumulate
/// per-Gaussian parameter gradients. Must be called with the scene, camera,
/// and options used for the forward pass.
pub fn backprop(
    scene: &[GaussianPrimitive],
    cam: &CameraView,
    opts: &RenderOptions,
    ctx: &RenderContext,
    out: &RenderOutput,
    adj: &ImageAdjoints,
) -> ParamGrads {
    let (w, h) = (cam.width, cam.height);
    assert!(adj.d_color.w == w && adj.d_color.h == h, "adjoint size mismatch");
    let splats = &ctx.splats;
    let n_bands = h.div_ceil(BAND_ROWS);

    let band_accs: Vec<Vec<SplatAcc>> = (0..n_bands)
        .into_par_iter()
        .map(|b| {
            let r0 = b * BAND_ROWS;
            let r1 = ((b + 1) * BAND_ROWS).min(h);
            backward_band(splats, cam, opts, ctx, out, adj, r0, r1)
        })
        .collect();

    let mut acc = vec![SplatAcc::default(); splats.len()];
    for band in band_accs {
        for (a, b) in acc.iter_mut().zip(band) {
            a.g_mean[0] += b.g_mean[0];
            a.g_mean[1] += b.g_mean[1];
            for k in 0..3 {
                a.g_cov[k] += b.g_cov[k];
                a.g_color[k] += b.g_color[k];
                a.g_normal[k] += b.g_normal[k];
            }
            a.g_opacity += b.g_opacity;
            a.g_depth += b.g_depth;
            a.touched |= b.touched;
        }
    }

    // Chain splat-space gradients to the 3D parameters.
    let mut grads = ParamGrads::zeros(scene.len());
    let r_cw = cam.pose.rotation.to_rotation_matrix().into_inner();
    let cam_center = cam.center_world();
    for (s, a) in splats.iter().zip(&acc) {
        let gi = s.gauss_idx;
        grads.visible[gi] = true;
        if !a.touched {
            continue;
        }
        let g = &scene[gi];
        let g_mean = Vec2::new(a.g_mean[0], a.g_mean[1]);
        let g_cov = Mat2::new(a.g_cov[0], a.g_cov[1], a.g_cov[1], a.g_cov[2]);
        grads.view_pos_grad[gi] = g_mean.norm();
        grads.color[gi] += Vec3::new(a.g_color[0], a.g_color[1], a.g_color[2]);
        grads.opacity[gi] += a.g_opacity;

        let x = s.x_cam;
        let j = proj_jacobian(cam, x);
        let rot = rot_of(&g.rotation);
        let s2 = Mat3::from_diagonal(&g.scale.component_mul(&g.scale));
        let cov_w = rot * s2 * rot.transpose();
        let cov_cam = r_cw * cov_w * r_cw.transpose();

        // Sigma' = J Sigma_cam J^T + floor.
        let gj = 2.0 * g_cov * j * cov_cam; // dL/dJ, 2x3
        let (fx, fy, z) = (cam.fx, cam.fy, x.z);
        let mut g_xcam = j.transpose() * g_mean; // mean path
        g_xcam.x += gj[(0, 2)] * (-fx / (z * z));
        g_xcam.y += gj[(1, 2)] * (-fy / (z * z));
        g_xcam.z += gj[(0, 0)] * (-fx / (z * z))
            + gj[(0, 2)] * (2.0 * fx * x.x / (z * z * z))
            + gj[(1, 1)] * (-fy / (z * z))
            + gj[(1, 2)] * (2.0 * fy * x.y / (z * z * z));
        g_xcam.z += a.g_depth; // depth composite path
        grads.center[gi] += r_cw.transpose() * g_xcam;

        let g_cov_cam = j.transpose() * g_cov * j;
        let g_cov_w = r_cw.transpose() * g_cov_cam * r_cw;

        // Scale path: dSigma_w/ds_i = R (2 s_i E_ii) R^T.
        let rt_gw_r = rot.transpose() * g_cov_w * rot;
        for i in 0..3 {
            grads.scale[gi][i] += 2.0 * g.scale[i] * rt_gw_r[(i, i)];
        }

        // Rotation path through the covariance and the geometric normal.
        let axis = g.min_scale_axis();
        let mut e_axis = Vec3::zeros();
        e_axis[axis] = 1.0;
        let n_raw = rot.column(axis).into_owned();
        let sign = if n_raw.dot(&(cam_center - g.center)) < 0.0 { -1.0 } else { 1.0 };
        let g_n_world = r_cw.transpose() * Vec3::new(a.g_normal[0], a.g_normal[1], a.g_normal[2]);
        let drs = rot_jacobian(&g.rotation);
        for k in 0..4 {
            let dr = &drs[k];
            let d_cov_half = dr * s2 * rot.transpose();
            let mut v = 2.0 * g_cov_w.component_mul(&d_cov_half).sum();
            v += sign * g_n_world.dot(&(dr * e_axis));
            grads.rotation[gi][k] += v;
        }
    }

    // Anchored primitives expose gradients only for rotation, scale, color.
    for (gi, g) in scene.iter().enumerate() {
        if g.anchored {
            grads.center[gi] = Vec3::zeros();
            grads.opacity[gi] = 0.0;
        }
    }
    grads
}

#[allow(clippy::too_many_arguments)]
fn backward_band(
    splats: &[Splat],
    cam: &CameraView,
    opts: &RenderOptions,
    ctx: &RenderContext,
    out: &RenderOutput,
    adj: &ImageAdjoints,
    r0: usize,
    r1: usize,
) -> Vec<SplatAcc> {
    let w = cam.width;
    let n = (r1 - r0) * w;
    let mut acc = vec![SplatAcc::default(); splats.len()];

    // Running per-pixel state for the reverse sweep. The suffix sums start
    // with the background treated as a final pseudo-layer.
    let mut t_back = vec![0.0f64; n];
    let mut suf_c = vec![[0.0f64; 3]; n];
    let mut suf_d = vec![0.0f64; n];
    let mut suf_n = vec![[0.0f64; 3]; n];
    for r in r0..r1 {
        for c in 0..w {
            let i = (r - r0) * w + c;
            let t_final = out.transmittance.get(r, c);
            t_back[i] = t_final;
            suf_c[i] = [
                opts.background.x * t_final,
                opts.background.y * t_final,
                opts.background.z * t_final,
            ];
        }
    }

    for pos in (0..splats.len()).rev() {
        let s = &splats[pos];
        let (c0, b_r0, c1, b_r1) = s.bbox;
        let lo = b_r0.max(r0);
        let hi = b_r1.min(r1 - 1);
        if lo > hi {
            continue;
        }
        let a = &mut acc[pos];
        for r in lo..=hi {
            let i_row = (r - r0) * w;
            let py = r as f64 + 0.5;
            for c in c0..=c1 {
                let i = i_row + c;
                // Skip contributions the forward pass never composited.
                let tp = ctx.term_pos.get(r, c);
                if tp != u32::MAX && pos as u32 >= tp {
                    continue;
                }
                let p = Vec2::new(c as f64 + 0.5, py);
                let Some((alpha, raw, delta)) = blend_alpha_parts(s, p) else {
                    continue;
                };
                let one_m = 1.0 - alpha;
                let t_k = t_back[i] / one_m;
                let wgt = alpha * t_k;

                let gc = adj.d_color.get(r, c);
                let gd = adj.d_depth.get(r, c);
                let gn = adj.d_normal.get(r, c);

                let mut d_alpha = 0.0;
                d_alpha += gc[0] * (s.color.x * t_k - suf_c[i][0] / one_m);
                d_alpha += gc[1] * (s.color.y * t_k - suf_c[i][1] / one_m);
                d_alpha += gc[2] * (s.color.z * t_k - suf_c[i][2] / one_m);
                d_alpha += gd * (s.depth * t_k - suf_d[i] / one_m);
                d_alpha += gn[0] * (s.normal_cam.x * t_k - suf_n[i][0] / one_m);
                d_alpha += gn[1] * (s.normal_cam.y * t_k - suf_n[i][1] / one_m);
                d_alpha += gn[2] * (s.normal_cam.z * t_k - suf_n[i][2] / one_m);

                a.g_color[0] += gc[0] * wgt;
                a.g_color[1] += gc[1] * wgt;
                a.g_color[2] += gc[2] * wgt;
                a.g_depth += gd * wgt;
                a.g_normal[0] += gn[0] * wgt;
                a.g_normal[1] += gn[1] * wgt;
                a.g_normal[2] += gn[2] * wgt;
                a.touched = true;

                // alpha = min(o * G, clip). Clipped alphas are flat.
                if raw <= ALPHA_CLIP {
                    let gexp = raw / s.opacity.max(1e-300);
                    a.g_opacity += d_alpha * gexp;
                    let si_d = s.cov_inv * delta;
                    let gm = d_alpha * alpha;
                    a.g_mean[0] += gm * si_d.x;
                    a.g_mean[1] += gm * si_d.y;
                    let half = 0.5 * d_alpha * alpha;
                    a.g_cov[0] += half * si_d.x * si_d.x;
                    a.g_cov[1] += half * si_d.x * si_d.y;
                    a.g_cov[2] += half * si_d.y * si_d.y;
                }

                // Move the running state to the layer in front.
                suf_c[i][0] += wgt * s.color.x;
                suf_c[i][1] += wgt * s.color.y;
                suf_c[i][2] += wgt * s.color.z;
                suf_d[i] += wgt * s.depth;
                suf_n[i][0] += wgt * s.normal_cam.x;
                suf_n[i][1] += wgt * s.normal_cam.y;
                suf_n[i][2] += wgt * s.normal_cam.z;
                t_back[i] = t_k;
            }
        }
    }
    acc
}
