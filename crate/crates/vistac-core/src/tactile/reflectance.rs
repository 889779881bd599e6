//! Forward reflectance model of the gel: per-pixel linear-Lambertian
//! response under three virtual colored lights plus a small positional
//! bias. Synthetic presses rendered with this model make the calibration
//! in [`super::calibrate`] a solvable inverse problem.

use super::{GradientMap, TACTILE_H, TACTILE_W};
use crate::img::RgbImage;
use crate::math::Vec3;

/// Light directions (unit, toward the light) in the sensor frame, tilted
/// 30 degrees off the gel plane, azimuths 120 degrees apart. Their z is
/// negative so a flat gel (normal (0,0,-1)) is lit by all three.
fn lights() -> [Vec3; 3] {
    let (s, q) = (0.5, 0.75f64.sqrt());
    [
        Vec3::new(s, 0.0, -q),
        Vec3::new(s * (-0.5), s * (0.75f64.sqrt()), -q),
        Vec3::new(s * (-0.5), s * (-0.75f64.sqrt()), -q),
    ]
}

const BASE: f64 = 0.35;
const GAIN: f64 = 0.5;
const BIAS: f64 = 0.03;

/// Channel response for a unit surface normal at normalized position
/// (u, v) in [-1, 1]^2. No shadowing term: the response stays affine in
/// the normal across the calibrated slope range.
pub fn reflectance_rgb(normal: Vec3, u: f64, v: f64) -> [f64; 3] {
    let ls = lights();
    [
        (BASE + GAIN * normal.dot(&ls[0]) + BIAS * u).clamp(0.0, 1.0),
        (BASE + GAIN * normal.dot(&ls[1]) + BIAS * v).clamp(0.0, 1.0),
        (BASE + GAIN * normal.dot(&ls[2]) + BIAS * u * v).clamp(0.0, 1.0),
    ]
}

/// Normalized position of a pixel center in [-1, 1]^2.
pub(crate) fn pixel_uv(row: usize, col: usize, w: usize, h: usize) -> (f64, f64) {
    (
        2.0 * (col as f64 + 0.5) / w as f64 - 1.0,
        2.0 * (row as f64 + 0.5) / h as f64 - 1.0,
    )
}

/// Renders a tactile RGB image from a gradient field.
pub fn render_tactile_rgb(gm: &GradientMap) -> RgbImage {
    let (w, h) = (gm.w(), gm.h());
    debug_assert!(w == TACTILE_W && h == TACTILE_H || cfg!(test));
    let mut out = RgbImage::new(w, h, [0.0; 3]);
    for r in 0..h {
        for c in 0..w {
            let n = Vec3::new(gm.gx.get(r, c), gm.gy.get(r, c), -1.0).normalize();
            let (u, v) = pixel_uv(r, c, w, h);
            out.set(r, c, reflectance_rgb(n, u, v));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_gel_is_uniform_up_to_bias() {
        let gm = GradientMap::zeros(TACTILE_W, TACTILE_H);
        let img = render_tactile_rgb(&gm);
        let a = img.get(10, 10);
        let b = img.get(200, 300);
        // Same normal, different positional bias.
        for ch in 0..3 {
            assert!((a[ch] - b[ch]).abs() < 0.15);
            assert!(a[ch] > 0.5 && a[ch] < 0.95);
        }
        assert!(a != b);
    }

    #[test]
    fn tilted_surface_changes_channel_balance() {
        let n_flat = Vec3::new(0.0, 0.0, -1.0);
        let n_tilt = Vec3::new(0.5, 0.0, -1.0).normalize();
        let flat = reflectance_rgb(n_flat, 0.0, 0.0);
        let tilt = reflectance_rgb(n_tilt, 0.0, 0.0);
        // Tilting toward light 0 (at +x) brightens the red channel.
        assert!(tilt[0] > flat[0]);
        assert!(tilt[1] < flat[1]);
    }
}
