//! Poisson integration of gradient fields by a cosine-transform solver.
//!
//! Minimizes || grad f - (gx, gy) ||^2 with homogeneous Neumann boundary
//! conditions: the normal equations of the forward-difference objective
//! are a 5-point Neumann Laplacian, diagonalized exactly by the DCT-II.

use super::GradientMap;
use crate::img::{GrayImage, Mask};

/// Orthonormal DCT-II matrix of size n (rows = frequencies).
fn dct_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    let norm0 = (1.0 / n as f64).sqrt();
    let norm = (2.0 / n as f64).sqrt();
    for k in 0..n {
        for j in 0..n {
            let c = (std::f64::consts::PI / n as f64 * (j as f64 + 0.5) * k as f64).cos();
            m[k * n + j] = if k == 0 { norm0 * c } else { norm * c };
        }
    }
    m
}

/// out[k, c] = sum_j m[k, j] img[j, c]  (apply along rows of a w x h grid).
fn apply_rows(m: &[f64], n: usize, img: &GrayImage) -> GrayImage {
    let (w, h) = (img.w, img.h);
    debug_assert_eq!(n, h);
    let mut out = GrayImage::new(w, h, 0.0);
    for k in 0..h {
        for j in 0..h {
            let coef = m[k * n + j];
            if coef == 0.0 {
                continue;
            }
            let src = &img.data[j * w..(j + 1) * w];
            let dst = &mut out.data[k * w..(k + 1) * w];
            for c in 0..w {
                dst[c] += coef * src[c];
            }
        }
    }
    out
}

/// out[r, k] = sum_c m[k, c] img[r, c]  (apply along columns).
fn apply_cols(m: &[f64], n: usize, img: &GrayImage) -> GrayImage {
    let (w, h) = (img.w, img.h);
    debug_assert_eq!(n, w);
    let mut out = GrayImage::new(w, h, 0.0);
    for r in 0..h {
        let src = &img.data[r * w..(r + 1) * w];
        let dst = &mut out.data[r * w..(r + 1) * w];
        for k in 0..w {
            let mut acc = 0.0;
            for c in 0..w {
                acc += m[k * n + c] * src[c];
            }
            dst[k] = acc;
        }
    }
    out
}

fn transpose_matrix(m: &[f64], n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            t[a * n + b] = m[b * n + a];
        }
    }
    t
}

/// Integrates a gradient field into a height field, unique up to a
/// constant. The gauge is fixed to zero mean over the non-contact region
/// when a mask is supplied (mask = contact), otherwise over the whole
/// image.
pub fn poisson_integrate(gm: &GradientMap, contact_mask: Option<&Mask>) -> GrayImage {
    let (w, h) = (gm.w(), gm.h());
    // Divergence of the forward-difference objective: backward difference
    // of the gradient images with the last column/row dropped.
    let mut div = GrayImage::new(w, h, 0.0);
    for r in 0..h {
        for c in 0..w {
            let mut b = 0.0;
            if c + 1 < w {
                b += gm.gx.get(r, c);
            }
            if c > 0 {
                b -= gm.gx.get(r, c - 1);
            }
            if r + 1 < h {
                b += gm.gy.get(r, c);
            }
            if r > 0 {
                b -= gm.gy.get(r - 1, c);
            }
            div.set(r, c, b);
        }
    }

    let mw = dct_matrix(w);
    let mh = dct_matrix(h);
    let hat = apply_cols(&mw, w, &apply_rows(&mh, h, &div));

    // Laplacian eigenvalues 2cos(pi k / n) - 2 per axis.
    let mut f_hat = GrayImage::new(w, h, 0.0);
    for r in 0..h {
        let ly = 2.0 * (std::f64::consts::PI * r as f64 / h as f64).cos() - 2.0;
        for c in 0..w {
            if r == 0 && c == 0 {
                continue; // gauge mode
            }
            let lx = 2.0 * (std::f64::consts::PI * c as f64 / w as f64).cos() - 2.0;
            f_hat.set(r, c, hat.get(r, c) / (lx + ly));
        }
    }

    let mwt = transpose_matrix(&mw, w);
    let mht = transpose_matrix(&mh, h);
    let mut f = apply_cols(&mwt, w, &apply_rows(&mht, h, &f_hat));

    // Gauge fix.
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..w * h {
        let in_free = contact_mask.map_or(true, |m| !m.data[i]);
        if in_free {
            sum += f.data[i];
            n += 1;
        }
    }
    if n > 0 {
        let mean = sum / n as f64;
        for v in &mut f.data {
            *v -= mean;
        }
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_mean(img: &GrayImage) -> GrayImage {
        let mean = img.data.iter().sum::<f64>() / img.data.len() as f64;
        GrayImage { w: img.w, h: img.h, data: img.data.iter().map(|v| v - mean).collect() }
    }

    #[test]
    fn constant_gx_integrates_to_a_ramp() {
        let (w, h) = (48, 32);
        let c = 0.02;
        let mut gm = GradientMap::zeros(w, h);
        for v in &mut gm.gx.data {
            *v = c;
        }
        let f = poisson_integrate(&gm, None);
        // f = c x + const: check discrete slope in the interior.
        for r in [0, h / 2, h - 1] {
            for col in 1..w - 1 {
                let slope = f.get(r, col + 1) - f.get(r, col);
                assert!((slope - c).abs() < 1e-9, "slope {slope} at ({r},{col})");
            }
        }
    }

    #[test]
    fn zero_gradients_integrate_to_a_constant() {
        let gm = GradientMap::zeros(20, 16);
        let f = poisson_integrate(&gm, None);
        for v in &f.data {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn linearity_up_to_gauge() {
        let (w, h) = (40, 30);
        let mut g1 = GradientMap::zeros(w, h);
        let mut g2 = GradientMap::zeros(w, h);
        for r in 0..h {
            for c in 0..w {
                g1.gx.set(r, c, (0.3 * c as f64).sin() * 0.05);
                g1.gy.set(r, c, (0.2 * r as f64).cos() * 0.04);
                g2.gx.set(r, c, (0.15 * (r + c) as f64).cos() * 0.03);
                g2.gy.set(r, c, (0.25 * r as f64).sin() * 0.06);
            }
        }
        let (a, b) = (2.0, -0.7);
        let mut gsum = GradientMap::zeros(w, h);
        for i in 0..w * h {
            gsum.gx.data[i] = a * g1.gx.data[i] + b * g2.gx.data[i];
            gsum.gy.data[i] = a * g1.gy.data[i] + b * g2.gy.data[i];
        }
        let f1 = poisson_integrate(&g1, None);
        let f2 = poisson_integrate(&g2, None);
        let fsum = poisson_integrate(&gsum, None);
        let combo = GrayImage {
            w,
            h,
            data: (0..w * h).map(|i| a * f1.data[i] + b * f2.data[i]).collect(),
        };
        let (za, zb) = (zero_mean(&fsum), zero_mean(&combo));
        for i in 0..w * h {
            assert!((za.data[i] - zb.data[i]).abs() < 1e-8);
        }
    }

    /// Smooth random height fields with analytic gradients: the roundtrip
    /// must recover the field up to a constant within 1% of its range.
    #[test]
    fn analytic_heightfield_roundtrip() {
        use rand::{Rng, SeedableRng};
        let (w, h) = (320, 240);
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(123);
        for trial in 0..5 {
            // f(x, y) = sum_k a_k sin(kx x + ky y + phi): closed-form
            // gradients, smooth at pixel scale.
            let terms: Vec<(f64, f64, f64, f64)> = (0..5)
                .map(|_| {
                    let wavelength = rng.gen_range(60.0..200.0);
                    let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    let k = std::f64::consts::TAU / wavelength;
                    (
                        rng.gen_range(0.1..0.5),
                        k * theta.cos(),
                        k * theta.sin(),
                        rng.gen_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect();
            let mut truth = GrayImage::new(w, h, 0.0);
            let mut gm = GradientMap::zeros(w, h);
            for r in 0..h {
                for c in 0..w {
                    let (x, y) = (c as f64, r as f64);
                    let mut f = 0.0;
                    let mut gx = 0.0;
                    let mut gy = 0.0;
                    for &(a, kx, ky, phi) in &terms {
                        let arg = kx * x + ky * y + phi;
                        f += a * arg.sin();
                        gx += a * kx * arg.cos();
                        gy += a * ky * arg.cos();
                    }
                    truth.set(r, c, f);
                    gm.gx.set(r, c, gx);
                    gm.gy.set(r, c, gy);
                }
            }
            let rec = poisson_integrate(&gm, None);
            let (zt, zr) = (zero_mean(&truth), zero_mean(&rec));
            let range = zt.data.iter().cloned().fold(f64::MIN, f64::max)
                - zt.data.iter().cloned().fold(f64::MAX, f64::min);
            let rmse = (zt
                .data
                .iter()
                .zip(&zr.data)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / (w * h) as f64)
                .sqrt();
            assert!(
                rmse < 0.01 * range,
                "trial {trial}: rmse {rmse} vs 1% of range {range}"
            );
        }
    }
}
