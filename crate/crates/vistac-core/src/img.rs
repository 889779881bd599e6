//! Row-major image containers, SSIM (value and gradient), and binary
//! morphology shared by the loss, the metrics, and tactile processing.

use crate::{Error, Result};

/// Row-major 2D grid. `(row, col)` indexing, `row` in `0..h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2<T> {
    pub w: usize,
    pub h: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Grid2<T> {
    pub fn new(w: usize, h: usize, fill: T) -> Self {
        Self { w, h, data: vec![fill; w * h] }
    }

    pub fn from_vec(w: usize, h: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), w * h);
        Self { w, h, data }
    }

    #[inline]
    pub fn idx(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.h && col < self.w);
        row * self.w + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[self.idx(row, col)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: T) {
        let i = self.idx(row, col);
        self.data[i] = v;
    }

    pub fn same_size<U>(&self, other: &Grid2<U>) -> bool {
        self.w == other.w && self.h == other.h
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid2<U> {
        Grid2 { w: self.w, h: self.h, data: self.data.iter().map(|&v| f(v)).collect() }
    }
}

/// Scalar f64 image (depth, height fields, single channels).
pub type GrayImage = Grid2<f64>;
/// Three-channel f64 image (color, normals).
pub type RgbImage = Grid2<[f64; 3]>;
/// Binary mask.
pub type Mask = Grid2<bool>;

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// 3x3 box erosion (border pixels erode against an implicit false frame).
pub fn erode3(m: &Mask) -> Mask {
    let mut out = Mask::new(m.w, m.h, false);
    for r in 0..m.h {
        for c in 0..m.w {
            if !m.get(r, c) {
                continue;
            }
            let mut keep = r > 0 && c > 0 && r + 1 < m.h && c + 1 < m.w;
            if keep {
                'n: for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        if !m.get((r as i64 + dr) as usize, (c as i64 + dc) as usize) {
                            keep = false;
                            break 'n;
                        }
                    }
                }
            }
            if keep {
                out.set(r, c, true);
            }
        }
    }
    out
}

/// 3x3 box dilation.
pub fn dilate3(m: &Mask) -> Mask {
    let mut out = Mask::new(m.w, m.h, false);
    for r in 0..m.h {
        for c in 0..m.w {
            if !m.get(r, c) {
                continue;
            }
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    if rr >= 0 && cc >= 0 && (rr as usize) < m.h && (cc as usize) < m.w {
                        out.set(rr as usize, cc as usize, true);
                    }
                }
            }
        }
    }
    out
}

/// Morphological opening with a 3x3 element, removing isolated speckle.
pub fn open3(m: &Mask) -> Mask {
    dilate3(&erode3(m))
}

/// Dilation by `n` pixels (Chebyshev radius n).
pub fn dilate_n(m: &Mask, n: usize) -> Mask {
    let mut out = m.clone();
    for _ in 0..n {
        out = dilate3(&out);
    }
    out
}

// ---------------------------------------------------------------------------
// SSIM
// ---------------------------------------------------------------------------

pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn ssim_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable convolution; only pixels whose full window fits are meaningful.
/// Border pixels of the output are left at zero.
fn conv_full_window(src: &GrayImage, kernel: &[f64; SSIM_WINDOW]) -> GrayImage {
    let half = SSIM_WINDOW / 2;
    let (w, h) = (src.w, src.h);
    let mut tmp = GrayImage::new(w, h, 0.0);
    for r in 0..h {
        for c in half..w.saturating_sub(half) {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * src.get(r, c + k - half);
            }
            tmp.set(r, c, acc);
        }
    }
    let mut out = GrayImage::new(w, h, 0.0);
    for r in half..h.saturating_sub(half) {
        for c in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * tmp.get(r + k - half, c);
            }
            out.set(r, c, acc);
        }
    }
    out
}

fn channel(img: &RgbImage, ch: usize) -> GrayImage {
    GrayImage { w: img.w, h: img.h, data: img.data.iter().map(|p| p[ch]).collect() }
}

/// Per-channel SSIM map at full-window pixels, plus the window margin.
/// The map is zero (and must be ignored) inside the margin.
pub struct SsimMap {
    pub map: [GrayImage; 3],
    pub margin: usize,
}

fn ssim_channel_fields(
    a: &GrayImage,
    b: &GrayImage,
    kernel: &[f64; SSIM_WINDOW],
) -> (GrayImage, GrayImage, GrayImage, GrayImage, GrayImage) {
    let mu_a = conv_full_window(a, kernel);
    let mu_b = conv_full_window(b, kernel);
    let a2 = GrayImage { w: a.w, h: a.h, data: a.data.iter().map(|v| v * v).collect() };
    let b2 = GrayImage { w: b.w, h: b.h, data: b.data.iter().map(|v| v * v).collect() };
    let ab = GrayImage {
        w: a.w,
        h: a.h,
        data: a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
    };
    (mu_a, mu_b, conv_full_window(&a2, kernel), conv_full_window(&b2, kernel), {
        conv_full_window(&ab, kernel)
    })
}

/// SSIM map of two RGB images (canonical constants, 11x11 Gaussian window).
pub fn ssim_map_rgb(a: &RgbImage, b: &RgbImage) -> Result<SsimMap> {
    if !a.same_size(b) {
        return Err(Error::DimensionMismatch(format!(
            "ssim: {}x{} vs {}x{}",
            a.w, a.h, b.w, b.h
        )));
    }
    if a.w < SSIM_WINDOW || a.h < SSIM_WINDOW {
        return Err(Error::DimensionMismatch(format!(
            "ssim: image {}x{} smaller than {}x{} window",
            a.w, a.h, SSIM_WINDOW, SSIM_WINDOW
        )));
    }
    let kernel = ssim_kernel();
    let margin = SSIM_WINDOW / 2;
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut maps = [
        GrayImage::new(a.w, a.h, 0.0),
        GrayImage::new(a.w, a.h, 0.0),
        GrayImage::new(a.w, a.h, 0.0),
    ];
    for ch in 0..3 {
        let ca = channel(a, ch);
        let cb = channel(b, ch);
        let (mu_a, mu_b, ea2, eb2, eab) = ssim_channel_fields(&ca, &cb, &kernel);
        for r in margin..a.h - margin {
            for c in margin..a.w - margin {
                let (ma, mb) = (mu_a.get(r, c), mu_b.get(r, c));
                let va = ea2.get(r, c) - ma * ma;
                let vb = eb2.get(r, c) - mb * mb;
                let cov = eab.get(r, c) - ma * mb;
                let s = ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                maps[ch].set(r, c, s);
            }
        }
    }
    Ok(SsimMap { map: maps, margin })
}

/// Mean SSIM over full-window pixels, optionally restricted to a mask.
pub fn ssim_rgb(a: &RgbImage, b: &RgbImage, mask: Option<&Mask>) -> Result<f64> {
    let sm = ssim_map_rgb(a, b)?;
    let m = sm.margin;
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in m..a.h - m {
        for c in m..a.w - m {
            if let Some(mk) = mask {
                if !mk.get(r, c) {
                    continue;
                }
            }
            for ch in 0..3 {
                sum += sm.map[ch].get(r, c);
            }
            n += 3;
        }
    }
    if n == 0 {
        return Err(Error::DimensionMismatch("ssim: empty mask region".into()));
    }
    Ok(sum / n as f64)
}

/// Mean SSIM and its gradient with respect to image `a`.
///
/// The mean runs over all full-window pixels and the three channels; the
/// returned gradient has the same shape as `a`.
pub fn ssim_rgb_with_grad(a: &RgbImage, b: &RgbImage) -> Result<(f64, RgbImage)> {
    if !a.same_size(b) {
        return Err(Error::DimensionMismatch("ssim grad: size mismatch".into()));
    }
    if a.w < SSIM_WINDOW || a.h < SSIM_WINDOW {
        return Err(Error::DimensionMismatch("ssim grad: image below window size".into()));
    }
    let kernel = ssim_kernel();
    let margin = SSIM_WINDOW / 2;
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let valid = (a.h - 2 * margin) * (a.w - 2 * margin);
    let total = (valid * 3) as f64;

    let mut mean = 0.0;
    let mut grad = RgbImage::new(a.w, a.h, [0.0; 3]);
    for ch in 0..3 {
        let ca = channel(a, ch);
        let cb = channel(b, ch);
        let (mu_a, mu_b, ea2, eb2, eab) = ssim_channel_fields(&ca, &cb, &kernel);

        // Per-center partials w.r.t. the window accumulators (mu_a, Ea2, Eab),
        // already scaled by 1/total for the mean.
        let mut p_mu = GrayImage::new(a.w, a.h, 0.0);
        let mut p_ea2 = GrayImage::new(a.w, a.h, 0.0);
        let mut p_eab = GrayImage::new(a.w, a.h, 0.0);
        for r in margin..a.h - margin {
            for c in margin..a.w - margin {
                let (ma, mb) = (mu_a.get(r, c), mu_b.get(r, c));
                let va = ea2.get(r, c) - ma * ma;
                let vb = eb2.get(r, c) - mb * mb;
                let cov = eab.get(r, c) - ma * mb;
                let a1 = 2.0 * ma * mb + c1;
                let a2t = 2.0 * cov + c2;
                let b1 = ma * ma + mb * mb + c1;
                let b2t = va + vb + c2;
                let d = b1 * b2t;
                mean += a1 * a2t / d / total;

                // N = a1*a2t, D = b1*b2t with sigma terms expressed through
                // the raw accumulators: cov = Eab - ma*mb, va = Ea2 - ma^2.
                let dn_dmu = 2.0 * mb * a2t - 2.0 * mb * a1;
                let dd_dmu = 2.0 * ma * b2t - 2.0 * ma * b1;
                let ds_dmu = (dn_dmu * d - a1 * a2t * dd_dmu) / (d * d);
                let ds_dea2 = -a1 * a2t * b1 / (d * d);
                let ds_deab = 2.0 * a1 / d;
                p_mu.set(r, c, ds_dmu / total);
                p_ea2.set(r, c, ds_dea2 / total);
                p_eab.set(r, c, ds_deab / total);
            }
        }
        // Adjoint of the window averaging: the kernel is symmetric, so the
        // scatter is another full-window convolution of the partial fields.
        let g_mu = conv_full_window_adjoint(&p_mu, &kernel);
        let g_ea2 = conv_full_window_adjoint(&p_ea2, &kernel);
        let g_eab = conv_full_window_adjoint(&p_eab, &kernel);
        for r in 0..a.h {
            for c in 0..a.w {
                let i = grad.idx(r, c);
                grad.data[i][ch] = g_mu.get(r, c)
                    + 2.0 * ca.get(r, c) * g_ea2.get(r, c)
                    + cb.get(r, c) * g_eab.get(r, c);
            }
        }
    }
    Ok((mean, grad))
}

/// Scatter the per-center fields back over their windows. Because centers
/// are restricted to the full-window interior (fields are zero outside) and
/// the kernel is symmetric, this is a zero-padded convolution.
fn conv_full_window_adjoint(src: &GrayImage, kernel: &[f64; SSIM_WINDOW]) -> GrayImage {
    let half = (SSIM_WINDOW / 2) as i64;
    let (w, h) = (src.w as i64, src.h as i64);
    let mut tmp = GrayImage::new(src.w, src.h, 0.0);
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let cc = c + k as i64 - half;
                if cc >= 0 && cc < w {
                    acc += kv * src.get(r as usize, cc as usize);
                }
            }
            tmp.set(r as usize, c as usize, acc);
        }
    }
    let mut out = GrayImage::new(src.w, src.h, 0.0);
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let rr = r + k as i64 - half;
                if rr >= 0 && rr < h {
                    acc += kv * tmp.get(rr as usize, c as usize);
                }
            }
            out.set(r as usize, c as usize, acc);
        }
    }
    out
}
