//! Binary little-endian PLY reader/writer for Gaussian scenes and point
//! clouds.
//!
//! Gaussian property layout (the compatibility contract):
//! `x y z qw qx qy qz sx sy sz opacity r g b` as doubles, `anchored` as
//! uchar, `nx ny nz` (target normal) as doubles. Files missing `anchored`
//! import with `anchored = false`; files missing the normal import with no
//! target normal.

use super::PointCloud;
use crate::gaussian::GaussianPrimitive;
use crate::math::{Quat, Vec3};
use crate::{Error, Result};
use std::io::Write;
use std::path::Path;

const GAUSS_PROPS: [&str; 18] = [
    "x", "y", "z", "qw", "qx", "qy", "qz", "sx", "sy", "sz", "opacity", "r", "g", "b",
    "anchored", "nx", "ny", "nz",
];

pub fn export_gaussians_ply(path: &Path, scene: &[GaussianPrimitive]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "ply")?;
    writeln!(out, "format binary_little_endian 1.0")?;
    writeln!(out, "element vertex {}", scene.len())?;
    for p in GAUSS_PROPS {
        if p == "anchored" {
            writeln!(out, "property uchar anchored")?;
        } else {
            writeln!(out, "property double {p}")?;
        }
    }
    writeln!(out, "end_header")?;
    for g in scene {
        let q = g.rotation;
        let n = g.target_normal.unwrap_or_else(Vec3::zeros);
        let doubles = [
            g.center.x, g.center.y, g.center.z, q.w, q.i, q.j, q.k, g.scale.x, g.scale.y,
            g.scale.z, g.opacity, g.color.x, g.color.y, g.color.z,
        ];
        for v in doubles {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&[u8::from(g.anchored)])?;
        for v in [n.x, n.y, n.z] {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn export_points_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    let has_color = !cloud.colors.is_empty();
    let has_normal = !cloud.normals.is_empty();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "ply")?;
    writeln!(out, "format binary_little_endian 1.0")?;
    writeln!(out, "element vertex {}", cloud.len())?;
    for p in ["x", "y", "z"] {
        writeln!(out, "property double {p}")?;
    }
    if has_color {
        for p in ["r", "g", "b"] {
            writeln!(out, "property double {p}")?;
        }
    }
    if has_normal {
        for p in ["nx", "ny", "nz"] {
            writeln!(out, "property double {p}")?;
        }
    }
    writeln!(out, "end_header")?;
    for i in 0..cloud.len() {
        let p = cloud.positions[i];
        for v in [p.x, p.y, p.z] {
            out.write_all(&v.to_le_bytes())?;
        }
        if has_color {
            for v in cloud.colors[i] {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        if has_normal {
            let n = cloud.normals[i];
            for v in [n.x, n.y, n.z] {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PropKind {
    Double,
    Float,
    Uchar,
}

impl PropKind {
    fn size(self) -> usize {
        match self {
            PropKind::Double => 8,
            PropKind::Float => 4,
            PropKind::Uchar => 1,
        }
    }
}

struct PlyData {
    names: Vec<String>,
    count: usize,
    /// Row-major property values widened to f64.
    values: Vec<f64>,
}

impl PlyData {
    fn column(&self, name: &str) -> Option<Vec<f64>> {
        let ci = self.names.iter().position(|n| n == name)?;
        let stride = self.names.len();
        Some((0..self.count).map(|r| self.values[r * stride + ci]).collect())
    }
}

fn parse_err(offset: usize, msg: impl Into<String>) -> Error {
    Error::PlyParse { offset: offset as u64, msg: msg.into() }
}

fn parse_ply(bytes: &[u8]) -> Result<PlyData> {
    // Header is ASCII lines terminated by '\n'.
    let mut offset = 0usize;
    let line_at = |off: &mut usize| -> Result<String> {
        let start = *off;
        let end = bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|p| start + p)
            .ok_or_else(|| parse_err(start, "unterminated header line"))?;
        let s = std::str::from_utf8(&bytes[start..end])
            .map_err(|_| parse_err(start, "non-utf8 header"))?
            .trim_end_matches('\r')
            .to_string();
        *off = end + 1;
        Ok(s)
    };

    if line_at(&mut offset)? != "ply" {
        return Err(parse_err(0, "missing 'ply' magic"));
    }
    let fmt = line_at(&mut offset)?;
    if fmt != "format binary_little_endian 1.0" {
        return Err(parse_err(4, format!("unsupported format: {fmt}")));
    }
    let mut names = Vec::new();
    let mut kinds = Vec::new();
    let mut count = None;
    loop {
        let at = offset;
        let line = line_at(&mut offset)?;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("comment") => {}
            Some("element") => {
                let kind = it.next().ok_or_else(|| parse_err(at, "element without name"))?;
                if kind != "vertex" {
                    return Err(parse_err(at, format!("unsupported element '{kind}'")));
                }
                if count.is_some() {
                    return Err(parse_err(at, "multiple vertex elements"));
                }
                count = Some(
                    it.next()
                        .and_then(|s| s.parse::<usize>().ok())
                        .ok_or_else(|| parse_err(at, "bad element count"))?,
                );
            }
            Some("property") => {
                let ty = it.next().ok_or_else(|| parse_err(at, "property without type"))?;
                let kind = match ty {
                    "double" | "float64" => PropKind::Double,
                    "float" | "float32" => PropKind::Float,
                    "uchar" | "uint8" => PropKind::Uchar,
                    other => return Err(parse_err(at, format!("unsupported type '{other}'"))),
                };
                let name = it.next().ok_or_else(|| parse_err(at, "property without name"))?;
                names.push(name.to_string());
                kinds.push(kind);
            }
            Some("end_header") => break,
            other => return Err(parse_err(at, format!("unexpected header token {other:?}"))),
        }
    }
    let count = count.ok_or_else(|| parse_err(offset, "no vertex element declared"))?;
    let row_size: usize = kinds.iter().map(|k| k.size()).sum();
    let need = count * row_size;
    if bytes.len() < offset + need {
        return Err(parse_err(
            bytes.len(),
            format!(
                "truncated body: need {} bytes for {} vertices, have {}",
                need,
                count,
                bytes.len() - offset
            ),
        ));
    }
    let mut values = Vec::with_capacity(count * names.len());
    let mut at = offset;
    for _ in 0..count {
        for kind in &kinds {
            let v = match kind {
                PropKind::Double => {
                    f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
                }
                PropKind::Float => {
                    f64::from(f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()))
                }
                PropKind::Uchar => f64::from(bytes[at]),
            };
            at += kind.size();
            values.push(v);
        }
    }
    Ok(PlyData { names, count, values })
}

pub fn import_gaussians_ply(path: &Path) -> Result<Vec<GaussianPrimitive>> {
    let bytes = std::fs::read(path)?;
    let data = parse_ply(&bytes)?;
    let col = |name: &str| -> Result<Vec<f64>> {
        data.column(name)
            .ok_or_else(|| parse_err(0, format!("missing required property '{name}'")))
    };
    let (x, y, z) = (col("x")?, col("y")?, col("z")?);
    let (qw, qx, qy, qz) = (col("qw")?, col("qx")?, col("qy")?, col("qz")?);
    let (sx, sy, sz) = (col("sx")?, col("sy")?, col("sz")?);
    let opacity = col("opacity")?;
    let (r, g, b) = (col("r")?, col("g")?, col("b")?);
    // Back-compat: files without 'anchored' load as plain Gaussians.
    let anchored = data.column("anchored");
    let nx = data.column("nx");
    let ny = data.column("ny");
    let nz = data.column("nz");

    let mut out = Vec::with_capacity(data.count);
    for i in 0..data.count {
        let is_anchored = anchored.as_ref().is_some_and(|a| a[i] != 0.0);
        let target_normal = if is_anchored {
            match (&nx, &ny, &nz) {
                (Some(nx), Some(ny), Some(nz)) => {
                    let n = Vec3::new(nx[i], ny[i], nz[i]);
                    (n.norm() > 1e-9).then_some(n)
                }
                _ => None,
            }
        } else {
            None
        };
        out.push(GaussianPrimitive {
            center: Vec3::new(x[i], y[i], z[i]),
            rotation: Quat::new(qw[i], qx[i], qy[i], qz[i]),
            scale: Vec3::new(sx[i], sy[i], sz[i]),
            opacity: opacity[i],
            color: Vec3::new(r[i], g[i], b[i]),
            anchored: is_anchored,
            target_normal,
        });
    }
    Ok(out)
}

pub fn import_points_ply(path: &Path) -> Result<PointCloud> {
    let bytes = std::fs::read(path)?;
    let data = parse_ply(&bytes)?;
    let col = |name: &str| -> Result<Vec<f64>> {
        data.column(name)
            .ok_or_else(|| parse_err(0, format!("missing required property '{name}'")))
    };
    let (x, y, z) = (col("x")?, col("y")?, col("z")?);
    let positions = (0..data.count).map(|i| Vec3::new(x[i], y[i], z[i])).collect();
    let colors = match (data.column("r"), data.column("g"), data.column("b")) {
        (Some(r), Some(g), Some(b)) => (0..data.count).map(|i| [r[i], g[i], b[i]]).collect(),
        _ => Vec::new(),
    };
    let normals = match (data.column("nx"), data.column("ny"), data.column("nz")) {
        (Some(nx), Some(ny), Some(nz)) => {
            (0..data.count).map(|i| Vec3::new(nx[i], ny[i], nz[i])).collect()
        }
        _ => Vec::new(),
    };
    Ok(PointCloud { positions, colors, normals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_gaussians(n: usize, seed: u64) -> Vec<GaussianPrimitive> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let mut g = GaussianPrimitive::new(
                    Vec3::new(rng.gen(), rng.gen(), rng.gen()),
                    Quat::new(rng.gen(), rng.gen(), rng.gen(), rng.gen()).normalize(),
                    Vec3::new(
                        rng.gen_range(1e-4..0.1),
                        rng.gen_range(1e-4..0.1),
                        rng.gen_range(1e-4..0.1),
                    ),
                    rng.gen(),
                    Vec3::new(rng.gen(), rng.gen(), rng.gen()),
                );
                if i % 5 == 0 {
                    g.anchored = true;
                    g.target_normal =
                        Some(Vec3::new(rng.gen(), rng.gen(), rng.gen()).normalize());
                }
                g
            })
            .collect()
    }

    #[test]
    fn gaussian_roundtrip_is_bit_exact() {
        let dir = crate::test_dir("ply");
        let path = dir.join("scene.ply");
        let scene = random_gaussians(1000, 7);
        export_gaussians_ply(&path, &scene).unwrap();
        let back = import_gaussians_ply(&path).unwrap();
        assert_eq!(scene.len(), back.len());
        for (a, b) in scene.iter().zip(&back) {
            assert_eq!(a.center, b.center);
            assert_eq!(a.rotation, b.rotation);
            assert_eq!(a.scale, b.scale);
            assert_eq!(a.opacity.to_bits(), b.opacity.to_bits());
            assert_eq!(a.color, b.color);
            assert_eq!(a.anchored, b.anchored);
            assert_eq!(a.target_normal, b.target_normal);
        }
    }

    #[test]
    fn missing_anchored_defaults_to_false() {
        let dir = crate::test_dir("ply");
        let path = dir.join("plain.ply");
        // Gaussian layout minus anchored/normals, written by hand.
        let mut body = Vec::new();
        let mut header = String::from("ply\nformat binary_little_endian 1.0\nelement vertex 1\n");
        for p in &["x", "y", "z", "qw", "qx", "qy", "qz", "sx", "sy", "sz", "opacity", "r", "g", "b"]
        {
            header.push_str(&format!("property double {p}\n"));
        }
        header.push_str("end_header\n");
        for v in [0.1, 0.2, 0.3, 1.0, 0.0, 0.0, 0.0, 0.01, 0.01, 0.01, 0.5, 0.9, 0.8, 0.7] {
            body.extend_from_slice(&f64::to_le_bytes(v));
        }
        let mut bytes = header.into_bytes();
        bytes.extend(body);
        std::fs::write(&path, bytes).unwrap();
        let scene = import_gaussians_ply(&path).unwrap();
        assert_eq!(scene.len(), 1);
        assert!(!scene[0].anchored);
        assert!(scene[0].target_normal.is_none());
    }

    #[test]
    fn truncated_file_reports_offset() {
        let dir = crate::test_dir("ply");
        let path = dir.join("scene.ply");
        let scene = random_gaussians(10, 3);
        export_gaussians_ply(&path, &scene).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let cut = &bytes[..bytes.len() - 37];
        let tpath = dir.join("truncated.ply");
        std::fs::write(&tpath, cut).unwrap();
        match import_gaussians_ply(&tpath) {
            Err(Error::PlyParse { offset, msg }) => {
                assert!(offset > 0);
                assert!(msg.contains("truncated"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn point_cloud_roundtrip_with_optionals() {
        let dir = crate::test_dir("ply");
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let cloud = PointCloud {
            positions: (0..100).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect(),
            colors: (0..100).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect(),
            normals: (0..100)
                .map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()).normalize())
                .collect(),
        };
        let path = dir.join("cloud.ply");
        export_points_ply(&path, &cloud).unwrap();
        let back = import_points_ply(&path).unwrap();
        assert_eq!(back.positions, cloud.positions);
        assert_eq!(back.colors, cloud.colors);
        assert_eq!(back.normals, cloud.normals);

        // Positions only.
        let bare = PointCloud::from_positions(cloud.positions.clone());
        export_points_ply(&path, &bare).unwrap();
        let back = import_points_ply(&path).unwrap();
        assert_eq!(back.positions, bare.positions);
        assert!(back.colors.is_empty());
        assert!(back.normals.is_empty());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = crate::test_dir("ply");
        let path = dir.join("bad.ply");
        std::fs::write(&path, b"not a ply\n").unwrap();
        assert!(matches!(import_points_ply(&path), Err(Error::PlyParse { .. })));
    }

}
