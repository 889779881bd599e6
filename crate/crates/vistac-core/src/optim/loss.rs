//! Supervised loss over one view and its analytic parameter gradients.

use super::{LossWeights, SupervisionFrame};
use crate::gaussian::{
    backprop, render_forward, GaussianPrimitive, ImageAdjoints, ParamGrads, RenderOptions,
};
use crate::img::{ssim_rgb_with_grad, GrayImage, RgbImage};
use crate::math::{rot_jacobian, rot_of, Vec3};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub color: f64,
    pub ssim: f64,
    pub depth: f64,
    pub normal: f64,
    pub anchor: f64,
}

const NORMAL_EPS: f64 = 1e-6;

/// Renders the scene into `frame`'s camera and evaluates
/// `w_color L1(C) + w_ssim (1-SSIM) + w_depth L1(D | valid) +
/// w_normal mean(1 - n_hat . n_bar | valid) + w_anchor L_anchor`,
/// returning the breakdown and analytic gradients for every parameter.
/// Anchored primitives receive no center/opacity gradients.
pub fn compute_loss(
    scene: &[GaussianPrimitive],
    frame: &SupervisionFrame,
    weights: &LossWeights,
    opts: &RenderOptions,
) -> Result<(LossBreakdown, ParamGrads)> {
    let cam = &frame.camera;
    let (w, h) = (cam.width, cam.height);
    if frame.color.w != w || frame.color.h != h {
        return Err(Error::DimensionMismatch(format!(
            "frame {} is {}x{}, render target {}x{}",
            frame.id, frame.color.w, frame.color.h, w, h
        )));
    }

    let (out, ctx) = render_forward(scene, cam, opts);
    let npix = (w * h) as f64;
    let mut breakdown = LossBreakdown::default();

    let mut adj = ImageAdjoints {
        d_color: RgbImage::new(w, h, [0.0; 3]),
        d_depth: GrayImage::new(w, h, 0.0),
        d_normal: RgbImage::new(w, h, [0.0; 3]),
    };

    // L1 color over all pixels and channels.
    if weights.color > 0.0 {
        let scale = weights.color / (npix * 3.0);
        let mut sum = 0.0;
        for i in 0..w * h {
            for ch in 0..3 {
                let diff = out.color.data[i][ch] - frame.color.data[i][ch];
                sum += diff.abs();
                adj.d_color.data[i][ch] += scale * diff.signum();
            }
        }
        breakdown.color = sum / (npix * 3.0);
    }

    // Structural term on the rendered color.
    if weights.ssim > 0.0 {
        let (s, grad) = ssim_rgb_with_grad(&out.color, &frame.color)?;
        breakdown.ssim = 1.0 - s;
        for i in 0..w * h {
            for ch in 0..3 {
                adj.d_color.data[i][ch] -= weights.ssim * grad.data[i][ch];
            }
        }
    }

    // L1 depth on the valid mask.
    if weights.depth > 0.0 {
        let n_valid = frame.depth_valid.count();
        if n_valid > 0 {
            let scale = weights.depth / n_valid as f64;
            let mut sum = 0.0;
            for i in 0..w * h {
                if !frame.depth_valid.data[i] {
                    continue;
                }
                let diff = out.depth.data[i] - frame.depth.data[i];
                sum += diff.abs();
                adj.d_depth.data[i] = scale * diff.signum();
            }
            breakdown.depth = sum / n_valid as f64;
        }
    }

    // Cosine normal term on the valid mask. The raw composite is normalized
    // per pixel; pixels with a near-zero composite contribute a constant 1
    // and no gradient.
    if weights.normal > 0.0 {
        let n_valid = frame.normal_valid.count();
        if n_valid > 0 {
            let scale = weights.normal / n_valid as f64;
            let mut sum = 0.0;
            for i in 0..w * h {
                if !frame.normal_valid.data[i] {
                    continue;
                }
                let raw = Vec3::new(
                    out.normal.data[i][0],
                    out.normal.data[i][1],
                    out.normal.data[i][2],
                );
                let norm = raw.norm();
                if norm <= NORMAL_EPS {
                    sum += 1.0;
                    continue;
                }
                let nhat = raw / norm;
                let nbar = Vec3::new(
                    frame.normal.data[i][0],
                    frame.normal.data[i][1],
                    frame.normal.data[i][2],
                );
                sum += 1.0 - nhat.dot(&nbar);
                // d(1 - nhat.nbar)/draw = -(I - nhat nhat^T) nbar / norm
                let g = -(nbar - nhat * nhat.dot(&nbar)) / norm * scale;
                adj.d_normal.data[i] = [g.x, g.y, g.z];
            }
            breakdown.normal = sum / n_valid as f64;
        }
    }

    let mut grads = backprop(scene, cam, opts, &ctx, &out, &adj);

    // Direct normal supervision on anchored Gaussians, independent of the
    // rendered images. The axis sign is arbitrary for a symmetric Gaussian,
    // so the term aligns the axis up to sign: 1 - |n . target|.
    if weights.anchor > 0.0 {
        let anchors: Vec<usize> = scene
            .iter()
            .enumerate()
            .filter(|(_, g)| g.anchored && g.target_normal.is_some())
            .map(|(i, _)| i)
            .collect();
        if !anchors.is_empty() {
            let scale = weights.anchor / anchors.len() as f64;
            let mut sum = 0.0;
            for &gi in &anchors {
                let g = &scene[gi];
                let target = g.target_normal.unwrap();
                let axis = g.min_scale_axis();
                let rot = rot_of(&g.rotation);
                let n = rot.column(axis).into_owned();
                let dot = n.dot(&target);
                sum += 1.0 - dot.abs();
                let sign = if dot < 0.0 { -1.0 } else { 1.0 };
                let mut e_axis = Vec3::zeros();
                e_axis[axis] = 1.0;
                let drs = rot_jacobian(&g.rotation);
                for k in 0..4 {
                    grads.rotation[gi][k] -= scale * sign * target.dot(&(drs[k] * e_axis));
                }
            }
            breakdown.anchor = sum / anchors.len() as f64;
        }
    }

    breakdown.total = weights.color * breakdown.color
        + weights.ssim * breakdown.ssim
        + weights.depth * breakdown.depth
        + weights.normal * breakdown.normal
        + weights.anchor * breakdown.anchor;
    Ok((breakdown, grads))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::gaussian::render;
    use crate::img::Mask;
    use crate::math::Quat;
    use crate::optim::gradcheck::{check_camera, check_frame, check_scene, gradient_check};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn analytic_gradients_match_finite_differences() {
        for seed in [42u64, 43] {
            for (class, err) in gradient_check(seed) {
                assert!(
                    err < 1e-3,
                    "seed {seed}, class {class}: relative error {err:.2e} >= 1e-3"
                );
            }
        }
    }

    #[test]
    fn self_supervision_loss_is_zero() {
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        let cam = check_camera(32, 32);
        let scene = check_scene(10, &mut rng);
        let opts = RenderOptions::default();
        let out = render(&scene, &cam, &opts);
        let (w, h) = (cam.width, cam.height);
        let mut normal = RgbImage::new(w, h, [0.0; 3]);
        let mut normal_valid = Mask::new(w, h, false);
        let mut depth_valid = Mask::new(w, h, false);
        for i in 0..w * h {
            if out.depth.data[i] > 0.0 {
                depth_valid.data[i] = true;
            }
            let raw = Vec3::new(
                out.normal.data[i][0],
                out.normal.data[i][1],
                out.normal.data[i][2],
            );
            if raw.norm() > 1e-3 {
                let n = raw.normalize();
                normal.data[i] = [n.x, n.y, n.z];
                normal_valid.data[i] = true;
            }
        }
        let frame = SupervisionFrame {
            id: "self".into(),
            camera: cam,
            color: out.color,
            depth: out.depth,
            depth_valid,
            normal,
            normal_valid,
        };
        let weights = LossWeights { anchor: 0.0, ..Default::default() };
        let (bd, _) = compute_loss(&scene, &frame, &weights, &opts).unwrap();
        assert!(bd.color < 1e-12, "color {}", bd.color);
        assert!(bd.depth < 1e-12, "depth {}", bd.depth);
        assert!(bd.normal < 1e-12, "normal {}", bd.normal);
        assert!(bd.ssim < 1e-9, "ssim {}", bd.ssim);
    }

    #[test]
    fn color_only_weights_reduce_to_mean_absolute_error() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let cam = check_camera(24, 24);
        let scene = check_scene(6, &mut rng);
        let frame = check_frame(&cam, &mut rng);
        let weights = LossWeights { color: 1.0, ssim: 0.0, depth: 0.0, normal: 0.0, anchor: 0.0 };
        let opts = RenderOptions::default();
        let (bd, _) = compute_loss(&scene, &frame, &weights, &opts).unwrap();
        let out = render(&scene, &cam, &opts);
        let mut mae = 0.0;
        for i in 0..cam.width * cam.height {
            for ch in 0..3 {
                mae += (out.color.data[i][ch] - frame.color.data[i][ch]).abs();
            }
        }
        mae /= (cam.width * cam.height * 3) as f64;
        assert!((bd.total - mae).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let cam = check_camera(24, 24);
        let scene = check_scene(4, &mut rng);
        let mut frame = check_frame(&cam, &mut rng);
        frame.camera = check_camera(32, 24);
        assert!(matches!(
            compute_loss(&scene, &frame, &LossWeights::default(), &RenderOptions::default()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn anchor_term_closed_forms() {
        // Aligned anchor: term 0; orthogonal: term 1.
        let mut g = GaussianPrimitive::new(
            Vec3::new(0.0, 0.0, 1.5),
            Quat::new(1.0, 0.0, 0.0, 0.0),
            Vec3::new(0.001, 0.002, 0.003),
            0.95,
            Vec3::repeat(0.5),
        );
        g.anchored = true;
        // min axis = x, so the geometric normal is R e_x = e_x.
        g.target_normal = Some(Vec3::x());
        let cam = check_camera(24, 24);
        let frame = {
            let mut rng = ChaCha20Rng::seed_from_u64(1);
            check_frame(&cam, &mut rng)
        };
        let weights = LossWeights { color: 0.0, ssim: 0.0, depth: 0.0, normal: 0.0, anchor: 1.0 };
        let opts = RenderOptions::default();
        let (bd, _) = compute_loss(&[g.clone()], &frame, &weights, &opts).unwrap();
        assert!(bd.anchor.abs() < 1e-12, "aligned anchor term {}", bd.anchor);

        g.target_normal = Some(Vec3::y());
        let (bd, _) = compute_loss(&[g], &frame, &weights, &opts).unwrap();
        assert!((bd.anchor - 1.0).abs() < 1e-12, "orthogonal anchor term {}", bd.anchor);
    }
}
