//! Finite-difference verification harness for the loss gradients.
//!
//! Scene/frame generators keep the probe step away from the loss's
//! non-smooth sets: scale components stay separated (stable smallest
//! axis), normals stay away from the facing flip, and the supervision
//! color/depth distributions are disjoint from the scene's so L1 kinks
//! never straddle zero under the central-difference step.

use super::{compute_loss, LossWeights, SupervisionFrame};
use crate::gaussian::{render, CameraView, GaussianPrimitive, ParamGrads, RenderOptions};
use crate::img::{GrayImage, Mask, RgbImage};
use crate::math::{rel_l2_error, Iso3, Quat, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn check_camera(w: usize, h: usize) -> CameraView {
    CameraView::new(Iso3::identity(), 40.0, 40.0, w as f64 / 2.0, h as f64 / 2.0, w, h, 0.05, 100.0)
        .expect("check camera")
}

/// Random scene for gradient checks; the first two Gaussians are anchored
/// with tactile targets so the anchor term is exercised.
pub fn check_scene(n: usize, rng: &mut ChaCha20Rng) -> Vec<GaussianPrimitive> {
    let cam_center = Vec3::zeros();
    (0..n)
        .map(|i| loop {
            let center = Vec3::new(
                rng.gen_range(-0.35..0.35),
                rng.gen_range(-0.35..0.35),
                rng.gen_range(1.2..2.5),
            );
            let q = Quat::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .normalize();
            // Distinct scales; ratios >= 1.5 keep the smallest axis stable.
            let base = rng.gen_range(0.03..0.06);
            let mut scale = Vec3::new(base, base * 1.6, base * 2.6);
            let perm = rng.gen_range(0..3usize);
            scale = match perm {
                0 => scale,
                1 => Vec3::new(scale.z, scale.x, scale.y),
                _ => Vec3::new(scale.y, scale.z, scale.x),
            };
            let mut g = GaussianPrimitive::new(
                center,
                q,
                scale,
                rng.gen_range(0.15..0.85),
                Vec3::new(
                    rng.gen_range(0.05..0.45),
                    rng.gen_range(0.05..0.45),
                    rng.gen_range(0.05..0.45),
                ),
            );
            let ncam = g.geometric_normal(cam_center);
            let view = (cam_center - g.center).normalize();
            if ncam.dot(&view).abs() < 0.1 {
                continue;
            }
            if i < 2 {
                let jitter = Vec3::new(
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.3..0.3),
                );
                let target = (ncam + jitter).normalize();
                if ncam.dot(&target).abs() < 0.2 {
                    continue;
                }
                g.anchored = true;
                g.target_normal = Some(target);
            }
            return g;
        })
        .collect()
}

/// Supervision frame rendered from an unrelated scene with separated
/// color/depth ranges.
pub fn check_frame(cam: &CameraView, rng: &mut ChaCha20Rng) -> SupervisionFrame {
    let target_scene: Vec<GaussianPrimitive> = (0..8)
        .map(|_| {
            GaussianPrimitive::new(
                Vec3::new(
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(3.2..4.5),
                ),
                Quat::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
                .normalize(),
                Vec3::new(
                    rng.gen_range(0.08..0.2),
                    rng.gen_range(0.08..0.2),
                    rng.gen_range(0.08..0.2),
                ),
                rng.gen_range(0.5..0.9),
                Vec3::new(
                    rng.gen_range(0.55..0.95),
                    rng.gen_range(0.55..0.95),
                    rng.gen_range(0.55..0.95),
                ),
            )
        })
        .collect();
    let opts = RenderOptions { background: Vec3::repeat(0.9) };
    let out = render(&target_scene, cam, &opts);
    let (w, h) = (cam.width, cam.height);
    let mut depth = GrayImage::new(w, h, 0.0);
    let mut depth_valid = Mask::new(w, h, false);
    let mut normal = RgbImage::new(w, h, [0.0; 3]);
    let mut normal_valid = Mask::new(w, h, false);
    for i in 0..w * h {
        if out.transmittance.data[i] < 0.5 {
            depth.data[i] = out.depth.data[i] + 1.5;
            depth_valid.data[i] = true;
            let raw = Vec3::new(out.normal.data[i][0], out.normal.data[i][1], out.normal.data[i][2]);
            if raw.norm() > 0.3 {
                let n = raw.normalize();
                normal.data[i] = [n.x, n.y, n.z];
                normal_valid.data[i] = true;
            }
        }
    }
    SupervisionFrame {
        id: "grad-check".into(),
        camera: cam.clone(),
        color: out.color,
        depth,
        depth_valid,
        normal,
        normal_valid,
    }
}

struct ParamSlot {
    class: &'static str,
    gauss: usize,
    apply: fn(&mut GaussianPrimitive, usize, f64),
    comp: usize,
}

fn slots(scene: &[GaussianPrimitive]) -> Vec<ParamSlot> {
    let mut v = Vec::new();
    for gi in 0..scene.len() {
        if !scene[gi].anchored {
            for c in 0..3 {
                v.push(ParamSlot {
                    class: "position",
                    gauss: gi,
                    apply: |g, c, h| g.center[c] += h,
                    comp: c,
                });
            }
            v.push(ParamSlot {
                class: "opacity",
                gauss: gi,
                apply: |g, _, h| g.opacity += h,
                comp: 0,
            });
        }
        for c in 0..4 {
            v.push(ParamSlot {
                class: "rotation",
                gauss: gi,
                apply: |g, c, h| g.rotation[c] += h,
                comp: c,
            });
        }
        for c in 0..3 {
            v.push(ParamSlot { class: "scale", gauss: gi, apply: |g, c, h| g.scale[c] += h, comp: c });
            v.push(ParamSlot { class: "color", gauss: gi, apply: |g, c, h| g.color[c] += h, comp: c });
        }
    }
    v
}

fn analytic_of(slot: &ParamSlot, grads: &ParamGrads) -> f64 {
    match slot.class {
        "position" => grads.center[slot.gauss][slot.comp],
        "rotation" => grads.rotation[slot.gauss][slot.comp],
        "scale" => grads.scale[slot.gauss][slot.comp],
        "opacity" => grads.opacity[slot.gauss],
        "color" => grads.color[slot.gauss][slot.comp],
        _ => unreachable!(),
    }
}

/// Central finite differences (h = 1e-4) of the full loss against the
/// analytic gradients on one random scene; returns per-class relative L2
/// errors.
pub fn gradient_check(seed: u64) -> Vec<(String, f64)> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let cam = check_camera(32, 32);
    let scene = check_scene(10, &mut rng);
    let frame = check_frame(&cam, &mut rng);
    let weights = LossWeights::default();
    let opts = RenderOptions::default();

    let (_, grads) = compute_loss(&scene, &frame, &weights, &opts).expect("loss");
    let h = 1e-4;
    let mut per_class: std::collections::BTreeMap<&str, (Vec<f64>, Vec<f64>)> = Default::default();
    for slot in slots(&scene) {
        let mut plus = scene.to_vec();
        (slot.apply)(&mut plus[slot.gauss], slot.comp, h);
        let (lp, _) = compute_loss(&plus, &frame, &weights, &opts).expect("loss+");
        let mut minus = scene.to_vec();
        (slot.apply)(&mut minus[slot.gauss], slot.comp, -h);
        let (lm, _) = compute_loss(&minus, &frame, &weights, &opts).expect("loss-");
        let fd = (lp.total - lm.total) / (2.0 * h);
        let an = analytic_of(&slot, &grads);
        let e = per_class.entry(slot.class).or_default();
        e.0.push(an);
        e.1.push(fd);
    }
    per_class
        .into_iter()
        .map(|(class, (an, fd))| (class.to_string(), rel_l2_error(&an, &fd, 1e-8)))
        .collect()
}
