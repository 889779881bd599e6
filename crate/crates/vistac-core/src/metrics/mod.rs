//! Quantitative evaluation: PSNR, SSIM (full-frame and object-masked),
//! Chamfer distance, and surface extraction from a trained scene.

mod chamfer;

pub use chamfer::{chamfer_brute_force, chamfer_mm, KdTree3};

use crate::gaussian::GaussianPrimitive;
use crate::hull::HullShell;
use crate::img::{dilate_n, Mask, RgbImage};
use crate::io::PointCloud;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// PSNR is capped here when images are identical (the "identical" sentinel).
pub const PSNR_CAP_DB: f64 = 99.0;

/// Peak signal-to-noise ratio in dB over [0,1] images, optionally masked.
pub fn psnr(a: &RgbImage, b: &RgbImage, mask: Option<&Mask>) -> Result<f64> {
    if !a.same_size(b) {
        return Err(Error::DimensionMismatch(format!(
            "psnr: {}x{} vs {}x{}",
            a.w, a.h, b.w, b.h
        )));
    }
    let mut se = 0.0;
    let mut n = 0usize;
    for i in 0..a.w * a.h {
        if let Some(m) = mask {
            if !m.data[i] {
                continue;
            }
        }
        for ch in 0..3 {
            let d = a.data[i][ch] - b.data[i][ch];
            se += d * d;
        }
        n += 3;
    }
    if n == 0 {
        return Err(Error::DimensionMismatch("psnr: empty mask".into()));
    }
    let mse = se / n as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// Mean SSIM (canonical constants), optionally masked.
pub fn ssim(a: &RgbImage, b: &RgbImage, mask: Option<&Mask>) -> Result<f64> {
    crate::img::ssim_rgb(a, b, mask)
}

/// Object masks are dilated by 2 px before masked metrics so boundary
/// pixels count.
pub fn object_metric_mask(mask: &Mask) -> Mask {
    dilate_n(mask, 2)
}

/// Extracts a surface point cloud: centers of Gaussians with opacity at or
/// above the threshold, restricted to the hull permitted region when one
/// is given. Anchored Gaussians are always included.
pub fn extract_surface(
    scene: &[GaussianPrimitive],
    opacity_threshold: f64,
    region: Option<&HullShell>,
) -> Result<PointCloud> {
    let mut positions = Vec::new();
    for g in scene {
        if g.anchored {
            positions.push(g.center);
            continue;
        }
        if g.opacity < opacity_threshold {
            continue;
        }
        if let Some(shell) = region {
            if !shell.permitted(g.center) {
                continue;
            }
        }
        positions.push(g.center);
    }
    if positions.is_empty() {
        return Err(Error::Numerical(
            "surface extraction produced no points; lower the opacity threshold".into(),
        ));
    }
    Ok(PointCloud::from_positions(positions))
}

/// Evaluation summary written as stable-keyed JSON for CI diffing.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub scene: String,
    pub views: usize,
    pub touches: usize,
    pub gaussians: usize,
    pub psnr_per_view: Vec<f64>,
    pub ssim_per_view: Vec<f64>,
    pub psnr_object_per_view: Vec<f64>,
    pub ssim_object_per_view: Vec<f64>,
    pub psnr_mean: f64,
    pub ssim_mean: f64,
    pub psnr_object_mean: f64,
    pub ssim_object_mean: f64,
    /// Chamfer distance against the ground-truth cloud, millimeters.
    pub chamfer_mm: Option<f64>,
    pub config_hash: String,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::img::GrayImage;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn psnr_identical_hits_cap() {
        let a = RgbImage::new(16, 16, [0.3; 3]);
        assert_eq!(psnr(&a, &a, None).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn psnr_closed_form_20db() {
        // Uniform 0 vs uniform 0.1: MSE 0.01 -> 20 dB exactly.
        let a = RgbImage::new(8, 8, [0.0; 3]);
        let b = RgbImage::new(8, 8, [0.1; 3]);
        let v = psnr(&a, &b, None).unwrap();
        assert!((v - 20.0).abs() < 1e-12, "psnr {v}");
    }

    #[test]
    fn masked_psnr_uses_masked_mse() {
        let mut a = RgbImage::new(8, 8, [0.0; 3]);
        let b = RgbImage::new(8, 8, [0.0; 3]);
        // Error confined to the left half.
        for r in 0..8 {
            for c in 0..4 {
                a.set(r, c, [0.2; 3]);
            }
        }
        let mut left = Mask::new(8, 8, false);
        let mut right = Mask::new(8, 8, false);
        for r in 0..8 {
            for c in 0..4 {
                left.set(r, c, true);
                right.set(r, 4 + c, true);
            }
        }
        let p_left = psnr(&a, &b, Some(&left)).unwrap();
        let p_right = psnr(&a, &b, Some(&right)).unwrap();
        let expect_left = 10.0 * (1.0 / 0.04f64).log10();
        assert!((p_left - expect_left).abs() < 1e-12);
        assert_eq!(p_right, PSNR_CAP_DB);
    }

    #[test]
    fn psnr_monotone_in_noise_amplitude() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let base = RgbImage::new(24, 24, [0.5; 3]);
        let noise: Vec<[f64; 3]> = (0..24 * 24)
            .map(|_| [rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5])
            .collect();
        let mut prev = f64::INFINITY;
        for amp in [0.01, 0.02, 0.05, 0.1, 0.2] {
            let noisy = RgbImage {
                w: 24,
                h: 24,
                data: noise
                    .iter()
                    .map(|n| [0.5 + amp * n[0], 0.5 + amp * n[1], 0.5 + amp * n[2]])
                    .collect(),
            };
            let p = psnr(&base, &noisy, None).unwrap();
            assert!(p < prev, "psnr must strictly decrease: {p} !< {prev}");
            prev = p;
        }
    }

    #[test]
    fn extract_surface_rules() {
        let mk = |o: f64| {
            GaussianPrimitive::isotropic(
                crate::math::Vec3::new(o, 0.0, 0.0),
                0.01,
                o,
                crate::math::Vec3::repeat(0.5),
            )
        };
        let mut anchor = mk(0.95);
        anchor.anchored = true;
        anchor.target_normal = Some(crate::math::Vec3::x());
        let scene = vec![mk(0.2), mk(0.7), anchor.clone()];

        // Threshold over 1: anchors only.
        let pc = extract_surface(&scene, 1.01, None).unwrap();
        assert_eq!(pc.len(), 1);
        // Threshold 0: everything.
        let pc = extract_surface(&scene, 0.0, None).unwrap();
        assert_eq!(pc.len(), 3);
        // Default-style threshold: drops the faint one.
        let pc = extract_surface(&scene, 0.5, None).unwrap();
        assert_eq!(pc.len(), 2);
        // Anchors-only scene: all centers.
        let pc = extract_surface(&[anchor], 0.99, None).unwrap();
        assert_eq!(pc.len(), 1);
    }

    #[test]
    fn object_mask_dilation_includes_boundary() {
        let mut m = Mask::new(10, 10, false);
        m.set(5, 5, true);
        let d = object_metric_mask(&m);
        assert!(d.get(3, 3));
        assert!(!d.get(2, 2));
        let _ = GrayImage::new(1, 1, 0.0);
    }
}
