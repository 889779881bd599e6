//! PNG and PFM codecs for the dataset image formats.
//!
//! Depth: 16-bit grayscale PNG in millimeters, 0 = invalid. Normals:
//! 16-bit RGB PNG via v = (n + 1) / 2, invalid pixels encoded as the
//! mid-value (decodes to a near-zero vector). Masks: 8-bit grayscale,
//! 0 = outside, 255 = inside. PFM: grayscale float maps (meters).

use crate::img::{GrayImage, Mask, RgbImage};
use crate::{Error, Result};
use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use std::io::{Read, Write};
use std::path::Path;

pub fn write_rgb8(path: &Path, img: &RgbImage) -> Result<()> {
    let buf = ImageBuffer::from_fn(img.w as u32, img.h as u32, |x, y| {
        let p = img.get(y as usize, x as usize);
        Rgb([
            (p[0].clamp(0.0, 1.0) * 255.0).round() as u8,
            (p[1].clamp(0.0, 1.0) * 255.0).round() as u8,
            (p[2].clamp(0.0, 1.0) * 255.0).round() as u8,
        ])
    });
    buf.save(path)?;
    Ok(())
}

pub fn read_rgb8(path: &Path) -> Result<RgbImage> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = RgbImage::new(w, h, [0.0; 3]);
    for (x, y, p) in img.enumerate_pixels() {
        out.set(
            y as usize,
            x as usize,
            [
                f64::from(p[0]) / 255.0,
                f64::from(p[1]) / 255.0,
                f64::from(p[2]) / 255.0,
            ],
        );
    }
    Ok(out)
}

/// Depth in meters -> 16-bit millimeters; invalid pixels write 0.
pub fn write_depth_png16(path: &Path, depth: &GrayImage, valid: &Mask) -> Result<()> {
    let buf = ImageBuffer::from_fn(depth.w as u32, depth.h as u32, |x, y| {
        let (r, c) = (y as usize, x as usize);
        if valid.get(r, c) {
            let mm = (depth.get(r, c) * 1000.0).round().clamp(0.0, 65535.0) as u16;
            Luma([mm.max(1)])
        } else {
            Luma([0u16])
        }
    });
    buf.save(path)?;
    Ok(())
}

/// 16-bit millimeter PNG -> meters plus a validity mask (0 = invalid).
pub fn read_depth_png16(path: &Path) -> Result<(GrayImage, Mask)> {
    let img = image::open(path)?;
    let img = match img {
        DynamicImage::ImageLuma16(b) => b,
        other => other.to_luma16(),
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut depth = GrayImage::new(w, h, 0.0);
    let mut valid = Mask::new(w, h, false);
    for (x, y, p) in img.enumerate_pixels() {
        let (r, c) = (y as usize, x as usize);
        if p[0] != 0 {
            depth.set(r, c, f64::from(p[0]) / 1000.0);
            valid.set(r, c, true);
        }
    }
    Ok((depth, valid))
}

pub fn write_normal_png16(path: &Path, normal: &RgbImage, valid: &Mask) -> Result<()> {
    let enc = |v: f64| (((v + 1.0) / 2.0).clamp(0.0, 1.0) * 65535.0).round() as u16;
    let mid = enc(0.0);
    let buf = ImageBuffer::from_fn(normal.w as u32, normal.h as u32, |x, y| {
        let (r, c) = (y as usize, x as usize);
        if valid.get(r, c) {
            let n = normal.get(r, c);
            Rgb([enc(n[0]), enc(n[1]), enc(n[2])])
        } else {
            Rgb([mid, mid, mid])
        }
    });
    buf.save(path)?;
    Ok(())
}

/// Decodes n = 2v - 1 and renormalizes; near-zero vectors mark invalid.
pub fn read_normal_png16(path: &Path) -> Result<(RgbImage, Mask)> {
    let img = image::open(path)?.to_rgb16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut normal = RgbImage::new(w, h, [0.0; 3]);
    let mut valid = Mask::new(w, h, false);
    for (x, y, p) in img.enumerate_pixels() {
        let (r, c) = (y as usize, x as usize);
        let n = [
            2.0 * f64::from(p[0]) / 65535.0 - 1.0,
            2.0 * f64::from(p[1]) / 65535.0 - 1.0,
            2.0 * f64::from(p[2]) / 65535.0 - 1.0,
        ];
        let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if norm > 0.1 {
            normal.set(r, c, [n[0] / norm, n[1] / norm, n[2] / norm]);
            valid.set(r, c, true);
        }
    }
    Ok((normal, valid))
}

pub fn write_mask_png(path: &Path, mask: &Mask) -> Result<()> {
    let buf = ImageBuffer::from_fn(mask.w as u32, mask.h as u32, |x, y| {
        Luma([if mask.get(y as usize, x as usize) { 255u8 } else { 0u8 }])
    });
    buf.save(path)?;
    Ok(())
}

pub fn read_mask_png(path: &Path) -> Result<Mask> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut mask = Mask::new(w, h, false);
    for (x, y, p) in img.enumerate_pixels() {
        mask.set(y as usize, x as usize, p[0] > 127);
    }
    Ok(mask)
}

/// Grayscale PFM (little-endian, rows bottom-to-top per the format spec).
pub fn write_pfm(path: &Path, img: &GrayImage) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "Pf\n{} {}\n-1.0\n", img.w, img.h)?;
    for r in (0..img.h).rev() {
        for c in 0..img.w {
            out.write_all(&(img.get(r, c) as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<GrayImage> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let header_err = |msg: &str| Error::Dataset(format!("pfm {}: {msg}", path.display()));
    let mut pos = 0usize;
    let mut token = || -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Dataset(format!("pfm {}: truncated header", path.display())));
        }
        let s = std::str::from_utf8(&bytes[start..pos]).map_err(|_| {
            Error::Dataset(format!("pfm {}: bad header", path.display()))
        })?;
        pos += 1; // single whitespace after token
        Ok(s.to_string())
    };
    if token()? != "Pf" {
        return Err(header_err("expected grayscale 'Pf'"));
    }
    let w: usize = token()?.parse().map_err(|_| header_err("bad width"))?;
    let h: usize = token()?.parse().map_err(|_| header_err("bad height"))?;
    let scale: f64 = token()?.parse().map_err(|_| header_err("bad scale"))?;
    if scale >= 0.0 {
        return Err(header_err("big-endian pfm unsupported"));
    }
    if bytes.len() < pos + w * h * 4 {
        return Err(header_err("truncated body"));
    }
    let mut img = GrayImage::new(w, h, 0.0);
    let mut at = pos;
    for r in (0..h).rev() {
        for c in 0..w {
            let v = f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
            img.set(r, c, f64::from(v));
            at += 4;
        }
    }
    Ok(img)
}
