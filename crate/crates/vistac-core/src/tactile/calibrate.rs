//! RGB-to-gradient calibration from known-radius ball presses.
//!
//! The regressor is a degree-2 polynomial over (r, g, b, x, y) fitted by
//! linear least squares; deterministic and dependency-free.

use super::{GradientMap, TactileFrame};
use crate::img::GrayImage;
use crate::math::Vec2;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::io::{BufRead, Write};
use std::path::Path;

const MIN_LABELED: usize = 500;
const GRAD_CLAMP: f64 = 5.0;
const N_FEATURES: usize = 21; // 1 + 5 + 15 quadratic terms

/// One calibration press: the frame, the contact circle in pixels, and the
/// physical ball radius.
#[derive(Debug, Clone)]
pub struct BallPress {
    pub frame: TactileFrame,
    /// Contact circle center, continuous pixel coordinates.
    pub center_px: Vec2,
    /// Contact circle radius, pixels.
    pub contact_radius_px: f64,
    /// Ball radius, meters.
    pub ball_radius_m: f64,
}

/// Fitted regressor from (r, g, b, x, y) to (gx, gy) with residual stats.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationModel {
    pub coeff_gx: [f64; N_FEATURES],
    pub coeff_gy: [f64; N_FEATURES],
    /// Root-mean-square fit residual, slope units.
    pub rmse: f64,
}

fn features(r: f64, g: f64, b: f64, u: f64, v: f64) -> [f64; N_FEATURES] {
    let z = [r, g, b, u, v];
    let mut f = [0.0; N_FEATURES];
    f[0] = 1.0;
    f[1..6].copy_from_slice(&z);
    let mut k = 6;
    for i in 0..5 {
        for j in i..5 {
            f[k] = z[i] * z[j];
            k += 1;
        }
    }
    f
}

/// Fits the gradient regressor to analytic sphere gradients inside the
/// labeled contact circles, plus subsampled flat-gel reference pixels
/// (target gradient zero) outside them so the positional terms are
/// constrained across the whole patch. Fails with fewer than 500 labeled
/// contact pixels.
pub fn calibrate(presses: &[BallPress]) -> Result<CalibrationModel> {
    let mut rows: Vec<[f64; N_FEATURES]> = Vec::new();
    let mut t_gx: Vec<f64> = Vec::new();
    let mut t_gy: Vec<f64> = Vec::new();
    let mut labeled = 0usize;
    const FLAT_STRIDE: usize = 8;
    for press in presses {
        let frame = &press.frame;
        let pitch = frame.spec.pixel_pitch;
        let (w, h) = (frame.rgb.w, frame.rgb.h);
        let radius_m = press.ball_radius_m;
        for row in 0..h {
            for col in 0..w {
                let px = Vec2::new(col as f64 + 0.5, row as f64 + 0.5);
                let in_contact = (px - press.center_px).norm() <= press.contact_radius_px;
                let c = frame.rgb.get(row, col);
                let (un, vn) = super::reflectance::pixel_uv(row, col, w, h);
                if in_contact {
                    let dx = (px.x - press.center_px.x) * pitch;
                    let dy = (px.y - press.center_px.y) * pitch;
                    let u2 = dx * dx + dy * dy;
                    if u2 >= radius_m * radius_m {
                        continue;
                    }
                    // Spherical cap f = t - R + sqrt(R^2 - u^2):
                    // df/dx = -dx / sqrt(R^2 - u^2); (0,0) at the apex.
                    let denom = (radius_m * radius_m - u2).sqrt();
                    rows.push(features(c[0], c[1], c[2], un, vn));
                    t_gx.push(-dx / denom);
                    t_gy.push(-dy / denom);
                    labeled += 1;
                } else if row % FLAT_STRIDE == 0 && col % FLAT_STRIDE == 0 {
                    rows.push(features(c[0], c[1], c[2], un, vn));
                    t_gx.push(0.0);
                    t_gy.push(0.0);
                }
            }
        }
    }
    if labeled < MIN_LABELED {
        return Err(Error::Calibration(format!(
            "insufficient labeled pixels: {labeled} < {MIN_LABELED}"
        )));
    }

    // Normal equations with a small ridge for conditioning.
    let n = rows.len();
    let x = DMatrix::from_fn(n, N_FEATURES, |i, j| rows[i][j]);
    let xtx = x.transpose() * &x + DMatrix::identity(N_FEATURES, N_FEATURES) * 1e-9;
    let chol = xtx
        .cholesky()
        .ok_or_else(|| Error::Calibration("singular normal equations".into()))?;
    let ygx = DVector::from_vec(t_gx.clone());
    let ygy = DVector::from_vec(t_gy.clone());
    let cx = chol.solve(&(x.transpose() * &ygx));
    let cy = chol.solve(&(x.transpose() * &ygy));

    let mut coeff_gx = [0.0; N_FEATURES];
    let mut coeff_gy = [0.0; N_FEATURES];
    for i in 0..N_FEATURES {
        coeff_gx[i] = cx[i];
        coeff_gy[i] = cy[i];
    }
    let mut sq = 0.0;
    for (i, row) in rows.iter().enumerate() {
        let (mut px, mut py) = (0.0, 0.0);
        for j in 0..N_FEATURES {
            px += coeff_gx[j] * row[j];
            py += coeff_gy[j] * row[j];
        }
        sq += (px - t_gx[i]).powi(2) + (py - t_gy[i]).powi(2);
    }
    let rmse = (sq / (2 * n) as f64).sqrt();
    Ok(CalibrationModel { coeff_gx, coeff_gy, rmse })
}

impl CalibrationModel {
    /// Evaluates the regressor at one sample; outputs clamp to |g| <= 5.
    pub fn eval(&self, r: f64, g: f64, b: f64, u: f64, v: f64) -> (f64, f64) {
        let f = features(r, g, b, u, v);
        let (mut gx, mut gy) = (0.0, 0.0);
        for j in 0..N_FEATURES {
            gx += self.coeff_gx[j] * f[j];
            gy += self.coeff_gy[j] * f[j];
        }
        (gx.clamp(-GRAD_CLAMP, GRAD_CLAMP), gy.clamp(-GRAD_CLAMP, GRAD_CLAMP))
    }

    /// Portable text serialization with a version tag.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "vistac-calibration 1")?;
        writeln!(out, "rmse {:e}", self.rmse)?;
        for c in &self.coeff_gx {
            writeln!(out, "{c:e}")?;
        }
        for c in &self.coeff_gy {
            writeln!(out, "{c:e}")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut lines = file.lines();
        let bad = |msg: &str| Error::Calibration(format!("{}: {msg}", path.display()));
        let header = lines.next().ok_or_else(|| bad("empty file"))??;
        if header != "vistac-calibration 1" {
            return Err(bad(&format!("unsupported version line '{header}'")));
        }
        let rmse_line = lines.next().ok_or_else(|| bad("missing rmse"))??;
        let rmse: f64 = rmse_line
            .strip_prefix("rmse ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad rmse line"))?;
        let mut values = Vec::with_capacity(2 * N_FEATURES);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            values.push(line.trim().parse::<f64>().map_err(|_| bad("bad coefficient"))?);
        }
        if values.len() != 2 * N_FEATURES {
            return Err(bad(&format!("expected {} coefficients, got {}", 2 * N_FEATURES, values.len())));
        }
        let mut coeff_gx = [0.0; N_FEATURES];
        let mut coeff_gy = [0.0; N_FEATURES];
        coeff_gx.copy_from_slice(&values[..N_FEATURES]);
        coeff_gy.copy_from_slice(&values[N_FEATURES..]);
        Ok(Self { coeff_gx, coeff_gy, rmse })
    }
}

/// Per-pixel model evaluation over a frame.
pub fn rgb_to_gradients(frame: &TactileFrame, model: &CalibrationModel) -> GradientMap {
    let (w, h) = (frame.rgb.w, frame.rgb.h);
    let mut gm = GradientMap {
        gx: GrayImage::new(w, h, 0.0),
        gy: GrayImage::new(w, h, 0.0),
    };
    for r in 0..h {
        for c in 0..w {
            let p = frame.rgb.get(r, c);
            let (u, v) = super::reflectance::pixel_uv(r, c, w, h);
            let (gx, gy) = model.eval(p[0], p[1], p[2], u, v);
            gm.gx.set(r, c, gx);
            gm.gy.set(r, c, gy);
        }
    }
    gm
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::math::Iso3;
    use crate::tactile::{render_tactile_rgb, SensorSpec, TACTILE_H, TACTILE_W};

    /// Analytic sphere-press gradient map: ball of radius `r_m` pressed
    /// `depth_m` with its apex at pixel `center`.
    pub(crate) fn sphere_press_gradients(
        center: Vec2,
        r_m: f64,
        depth_m: f64,
        spec: &SensorSpec,
    ) -> (GradientMap, f64) {
        let contact_r_m = (2.0 * r_m * depth_m - depth_m * depth_m).sqrt();
        let mut gm = GradientMap::zeros(TACTILE_W, TACTILE_H);
        for row in 0..TACTILE_H {
            for col in 0..TACTILE_W {
                let dx = (col as f64 + 0.5 - center.x) * spec.pixel_pitch;
                let dy = (row as f64 + 0.5 - center.y) * spec.pixel_pitch;
                let u2 = dx * dx + dy * dy;
                if u2 < contact_r_m * contact_r_m {
                    let denom = (r_m * r_m - u2).sqrt();
                    gm.gx.set(row, col, -dx / denom);
                    gm.gy.set(row, col, -dy / denom);
                }
            }
        }
        (gm, contact_r_m / spec.pixel_pitch)
    }

    pub(crate) fn synthetic_presses(n: usize) -> Vec<BallPress> {
        let spec = SensorSpec::default();
        let r_m = 0.004;
        let depth = 0.0005;
        (0..n)
            .map(|i| {
                let center = Vec2::new(
                    80.0 + 40.0 * (i % 5) as f64,
                    60.0 + 30.0 * (i / 5) as f64,
                );
                let (gm, contact_px) = sphere_press_gradients(center, r_m, depth, &spec);
                let rgb = render_tactile_rgb(&gm);
                BallPress {
                    frame: TactileFrame::new(rgb, Iso3::identity(), spec).unwrap(),
                    center_px: center,
                    contact_radius_px: contact_px,
                    ball_radius_m: r_m,
                }
            })
            .collect()
    }

    #[test]
    fn calibration_recovers_forward_model_gradients() {
        let presses = synthetic_presses(10);
        let model = calibrate(&presses).unwrap();
        assert!(model.rmse < 0.01, "fit rmse {}", model.rmse);

        // Held-out press: per-pixel prediction matches the analytic sphere.
        let spec = SensorSpec::default();
        let center = Vec2::new(170.0, 130.0);
        let (gm_true, contact_px) = sphere_press_gradients(center, 0.004, 0.0005, &spec);
        let frame =
            TactileFrame::new(render_tactile_rgb(&gm_true), Iso3::identity(), spec).unwrap();
        let gm_pred = rgb_to_gradients(&frame, &model);
        let mut sq = 0.0;
        let mut n = 0usize;
        for row in 0..TACTILE_H {
            for col in 0..TACTILE_W {
                let px = Vec2::new(col as f64 + 0.5, row as f64 + 0.5);
                if (px - center).norm() > contact_px {
                    continue;
                }
                sq += (gm_pred.gx.get(row, col) - gm_true.gx.get(row, col)).powi(2)
                    + (gm_pred.gy.get(row, col) - gm_true.gy.get(row, col)).powi(2);
                n += 2;
            }
        }
        let rmse = (sq / n as f64).sqrt();
        assert!(rmse < 0.02, "held-out rmse {rmse}");
    }

    #[test]
    fn flat_frame_has_near_zero_gradients() {
        let presses = synthetic_presses(10);
        let model = calibrate(&presses).unwrap();
        let spec = SensorSpec::default();
        let flat = GradientMap::zeros(TACTILE_W, TACTILE_H);
        let frame =
            TactileFrame::new(render_tactile_rgb(&flat), Iso3::identity(), spec).unwrap();
        let gm = rgb_to_gradients(&frame, &model);
        for row in (0..TACTILE_H).step_by(17) {
            for col in (0..TACTILE_W).step_by(13) {
                assert!(gm.gx.get(row, col).abs() < 0.02);
                assert!(gm.gy.get(row, col).abs() < 0.02);
            }
        }
    }

    #[test]
    fn apex_pixel_target_is_zero_gradient() {
        // The analytic target at the contact apex is (0, 0).
        let spec = SensorSpec::default();
        let center = Vec2::new(160.0, 120.0);
        let (gm, _) = sphere_press_gradients(center, 0.004, 0.0005, &spec);
        assert_eq!(gm.gx.get(119, 159), {
            let dx = (159.5 - center.x) * spec.pixel_pitch;
            let u2 = dx * dx + ((119.5 - center.y) * spec.pixel_pitch).powi(2);
            -dx / (0.004f64 * 0.004 - u2).sqrt()
        });
        // Exactly at the apex the offset is zero.
        let (gm2, _) = sphere_press_gradients(Vec2::new(160.5, 120.5), 0.004, 0.0005, &spec);
        assert_eq!(gm2.gx.get(120, 160), 0.0);
        assert_eq!(gm2.gy.get(120, 160), 0.0);
    }

    #[test]
    fn flat_only_input_fails_insufficient_labels() {
        let spec = SensorSpec::default();
        let flat = GradientMap::zeros(TACTILE_W, TACTILE_H);
        let frame =
            TactileFrame::new(render_tactile_rgb(&flat), Iso3::identity(), spec).unwrap();
        let press = BallPress {
            frame,
            center_px: Vec2::new(160.0, 120.0),
            contact_radius_px: 0.0,
            ball_radius_m: 0.004,
        };
        match calibrate(&[press]) {
            Err(Error::Calibration(msg)) => assert!(msg.contains("insufficient")),
            other => panic!("expected calibration error, got {other:?}"),
        }
    }

    #[test]
    fn position_dependence_of_the_mapping() {
        let presses = synthetic_presses(10);
        let model = calibrate(&presses).unwrap();
        // Same RGB at two different positions generally maps differently.
        let (a_gx, _) = model.eval(0.7, 0.7, 0.7, -0.5, -0.5);
        let (b_gx, _) = model.eval(0.7, 0.7, 0.7, 0.5, 0.5);
        assert!((a_gx - b_gx).abs() > 1e-6);
    }

    #[test]
    fn model_serialization_roundtrip() {
        let presses = synthetic_presses(10);
        let model = calibrate(&presses).unwrap();
        let dir = crate::test_dir("calib");
        let path = dir.join("calib.txt");
        model.save(&path).unwrap();
        let back = CalibrationModel::load(&path).unwrap();
        assert_eq!(model, back);
    }
}
