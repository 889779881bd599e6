//! Primary-ray rendering of oracle scenes: color, depth, camera-frame
//! normals, and the object mask.

use super::{Material, OracleScene};
use crate::gaussian::CameraView;
use crate::img::{GrayImage, Mask, RgbImage};
use crate::math::{fnv1a64, Vec3};
use crate::Result;
use rayon::prelude::*;

pub struct OracleRender {
    pub color: RgbImage,
    /// Camera-space z of the first hit, meters; 0 where nothing was hit.
    pub depth: GrayImage,
    pub depth_valid: Mask,
    /// Unit camera-frame normals, oriented toward the camera.
    pub normal: RgbImage,
    pub normal_valid: Mask,
    /// Object-hit pixels.
    pub mask: Mask,
}

const SKY: [f64; 3] = [0.72, 0.78, 0.88];
const AMBIENT: f64 = 0.25;

fn shade_lambert(albedo: Vec3, normal: Vec3, light_dir: Vec3) -> [f64; 3] {
    let l = (AMBIENT + (1.0 - AMBIENT) * normal.dot(&-light_dir).max(0.0)).min(1.0);
    [albedo.x * l, albedo.y * l, albedo.z * l]
}

fn background_albedo(normal: Vec3) -> Vec3 {
    if normal.z.abs() > 0.5 {
        Vec3::new(0.55, 0.52, 0.48) // ground
    } else {
        Vec3::new(0.42, 0.46, 0.52) // walls
    }
}

fn object_albedo(material: Material) -> Vec3 {
    match material {
        Material::Lambertian => Vec3::new(0.70, 0.35, 0.25),
        Material::Dark => Vec3::new(0.030, 0.030, 0.035),
        Material::MirrorLike => Vec3::new(0.55, 0.57, 0.60),
        Material::TransparentProxy => Vec3::zeros(),
    }
}

/// Hash-based view-dependent speckle in [-1, 1]; deterministic.
fn highlight_noise(dir: Vec3) -> f64 {
    let q = |v: f64| (v * 512.0).round() as i64 as u64;
    let bytes = [q(dir.x).to_le_bytes(), q(dir.y).to_le_bytes(), q(dir.z).to_le_bytes()].concat();
    let h = fnv1a64(&bytes);
    (h % 10_000) as f64 / 5_000.0 - 1.0
}

pub fn render_oracle(scene: &OracleScene, cam: &CameraView) -> Result<OracleRender> {
    let (w, h) = (cam.width, cam.height);
    let origin = cam.center_world();
    let r_cw = cam.pose.rotation.to_rotation_matrix().into_inner();

    let rows: Vec<Vec<PixelOut>> = (0..h)
        .into_par_iter()
        .map(|r| {
            (0..w)
                .map(|c| {
                    let px = crate::math::Vec2::new(c as f64 + 0.5, r as f64 + 0.5);
                    let dir = (cam.back_project(px, 1.0) - origin).normalize();
                    trace_pixel(scene, cam, origin, dir, &r_cw)
                })
                .collect()
        })
        .collect();

    let mut out = OracleRender {
        color: RgbImage::new(w, h, SKY),
        depth: GrayImage::new(w, h, 0.0),
        depth_valid: Mask::new(w, h, false),
        normal: RgbImage::new(w, h, [0.0; 3]),
        normal_valid: Mask::new(w, h, false),
        mask: Mask::new(w, h, false),
    };
    for (r, row) in rows.into_iter().enumerate() {
        for (c, p) in row.into_iter().enumerate() {
            out.color.set(r, c, p.color);
            if let Some(z) = p.depth {
                out.depth.set(r, c, z);
                out.depth_valid.set(r, c, true);
            }
            if let Some(n) = p.normal {
                out.normal.set(r, c, [n.x, n.y, n.z]);
                out.normal_valid.set(r, c, true);
            }
            out.mask.set(r, c, p.object);
        }
    }
    Ok(out)
}

struct PixelOut {
    color: [f64; 3],
    depth: Option<f64>,
    normal: Option<Vec3>,
    object: bool,
}

fn trace_pixel(
    scene: &OracleScene,
    cam: &CameraView,
    origin: Vec3,
    dir: Vec3,
    r_cw: &crate::math::Mat3,
) -> PixelOut {
    let obj = scene.object_bvh.raycast(&scene.object, origin, dir, cam.near);
    let bg = scene.background_bvh.raycast(&scene.background, origin, dir, cam.near);
    let (hit_obj, first) = match (obj, bg) {
        (Some(o), Some(b)) => (o.t <= b.t, if o.t <= b.t { o } else { b }),
        (Some(o), None) => (true, o),
        (None, Some(b)) => (false, b),
        (None, None) => {
            return PixelOut { color: SKY, depth: None, normal: None, object: false };
        }
    };
    let point = origin + dir * first.t;
    let mesh = if hit_obj { &scene.object } else { &scene.background };
    let mut n_world = mesh.face_normal(first.tri);
    if n_world.dot(&dir) > 0.0 {
        n_world = -n_world;
    }
    // Camera frame, facing the camera.
    let n_cam = r_cw * n_world;
    let depth = cam.world_to_cam(point).z;

    let color = if hit_obj {
        match scene.material {
            Material::Lambertian | Material::Dark => {
                shade_lambert(object_albedo(scene.material), n_world, scene.light_dir)
            }
            Material::MirrorLike => {
                let base = shade_lambert(object_albedo(scene.material), n_world, scene.light_dir);
                let s = 0.25 * highlight_noise(dir);
                [
                    (base[0] + s).clamp(0.0, 1.0),
                    (base[1] + s).clamp(0.0, 1.0),
                    (base[2] + s).clamp(0.0, 1.0),
                ]
            }
            Material::TransparentProxy => {
                // Appearance comes from whatever lies behind the object;
                // depth/normal/mask remain geometric.
                match bg {
                    Some(b) => {
                        let bp = origin + dir * b.t;
                        let mut bn = scene.background.face_normal(b.tri);
                        if bn.dot(&dir) > 0.0 {
                            bn = -bn;
                        }
                        let _ = bp;
                        shade_lambert(background_albedo(bn), bn, scene.light_dir)
                    }
                    None => SKY,
                }
            }
        }
    } else {
        shade_lambert(background_albedo(n_world), n_world, scene.light_dir)
    };
    PixelOut { color, depth: Some(depth), normal: Some(n_cam), object: hit_obj }
}

/// Deterministic hemisphere rig: `n` poses looking at `target` from radius
/// `dist`, golden-angle azimuths, elevations cycling over three bands.
#[allow(clippy::too_many_arguments)]
pub fn camera_rig(
    target: Vec3,
    n: usize,
    dist: f64,
    width: usize,
    height: usize,
    focal: f64,
) -> Vec<CameraView> {
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..n)
        .map(|i| {
            let az = golden * i as f64;
            let elev = 0.28 + 0.22 * ((i % 3) as f64);
            let eye = target
                + Vec3::new(
                    dist * az.cos() * elev.cos(),
                    dist * az.sin() * elev.cos(),
                    dist * elev.sin(),
                );
            CameraView::look_at(eye, target, Vec3::z(), focal, focal, width, height, 0.02, 20.0)
                .expect("rig camera")
        })
        .collect()
}
