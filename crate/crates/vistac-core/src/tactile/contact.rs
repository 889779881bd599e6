//! Normals from gradients, contact mask/point extraction, world transforms,
//! and the full frame-to-patch pipeline.

use super::{
    poisson_integrate, rgb_to_gradients, CalibrationModel, GradientMap, SensorSpec, TactileFrame,
};
use crate::img::{open3, GrayImage, Mask, RgbImage};
use crate::math::{Iso3, Vec3};

/// Processed tactile patch: per-pixel normals and gel depth, the contact
/// mask, and the contact points (sensor frame; world frame after
/// [`to_world`]).
#[derive(Debug, Clone)]
pub struct TactilePatch {
    /// Unit normals, sensor frame, per pixel.
    pub normals: RgbImage,
    /// Gel indentation height field, meters, zero-mean over non-contact.
    pub depth: GrayImage,
    pub mask: Mask,
    /// Pixel (row, col) of each contact point.
    pub point_pixels: Vec<(usize, usize)>,
    pub points_sensor: Vec<Vec3>,
    /// Filled by [`to_world`].
    pub points_world: Vec<Vec3>,
    /// Per contact point, world frame; filled by [`to_world`].
    pub normals_world: Vec<Vec3>,
}

impl TactilePatch {
    pub fn to_anchor_source(&self) -> crate::optim::AnchorSource {
        crate::optim::AnchorSource {
            points: self.points_world.clone(),
            normals: self.normals_world.clone(),
        }
    }
}

/// n = normalize((gx, gy, -1)) per pixel; z component is always negative.
pub fn gradients_to_normals(gm: &GradientMap) -> RgbImage {
    let (w, h) = (gm.w(), gm.h());
    let mut out = RgbImage::new(w, h, [0.0; 3]);
    for r in 0..h {
        for c in 0..w {
            let n = Vec3::new(gm.gx.get(r, c), gm.gy.get(r, c), -1.0).normalize();
            out.set(r, c, [n.x, n.y, n.z]);
        }
    }
    out
}

/// Thresholds the gel depth into a contact mask (3x3 opening removes
/// speckle) and lifts masked pixels into sensor-frame 3D points.
pub fn extract_contact(
    f: &GrayImage,
    threshold: f64,
    spec: &SensorSpec,
) -> (Mask, Vec<(usize, usize)>, Vec<Vec3>) {
    let mut mask = Mask::new(f.w, f.h, false);
    for i in 0..f.w * f.h {
        mask.data[i] = f.data[i] > threshold;
    }
    let mask = open3(&mask);
    let mut pixels = Vec::new();
    let mut points = Vec::new();
    for r in 0..f.h {
        for c in 0..f.w {
            if mask.get(r, c) {
                let (x, y) = spec.pixel_to_sensor(r, c);
                pixels.push((r, c));
                points.push(Vec3::new(x, y, f.get(r, c)));
            }
        }
    }
    (mask, pixels, points)
}

/// Applies the sensor pose (world -> sensor) to express contact points and
/// their normals in the world frame. Rigid: rotation-only for normals.
pub fn to_world(patch: &TactilePatch, pose: &Iso3) -> TactilePatch {
    let inv = pose.inverse();
    let mut out = patch.clone();
    out.points_world = patch
        .points_sensor
        .iter()
        .map(|p| inv.transform_point(&nalgebra::Point3::from(*p)).coords)
        .collect();
    out.normals_world = patch
        .point_pixels
        .iter()
        .map(|&(r, c)| {
            let n = patch.normals.get(r, c);
            inv.rotation * Vec3::new(n[0], n[1], n[2])
        })
        .collect();
    out
}

/// Default contact threshold: 0.1 mm of indentation.
pub const CONTACT_THRESHOLD: f64 = 1e-4;

/// Full pipeline: RGB frame -> gradients -> normals -> Poisson depth ->
/// contact mask/points (sensor and world frame).
pub fn process_frame(
    frame: &TactileFrame,
    model: &CalibrationModel,
    threshold: f64,
) -> TactilePatch {
    let gm = rgb_to_gradients(frame, model);
    let normals = gradients_to_normals(&gm);
    // The solver works on the pixel grid (slope * pixel units); scale by
    // the pitch to get meters. First pass fixes the gauge against the
    // image median (the free gel dominates the frame), then re-fixes over
    // the detected non-contact region.
    let pitch = frame.spec.pixel_pitch;
    let in_meters = |f: GrayImage| GrayImage {
        w: f.w,
        h: f.h,
        data: f.data.iter().map(|v| v * pitch).collect(),
    };
    let f0 = in_meters(poisson_integrate(&gm, None));
    let mut sorted = f0.data.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let shifted = GrayImage {
        w: f0.w,
        h: f0.h,
        data: f0.data.iter().map(|v| v - median).collect(),
    };
    let (mask0, _, _) = extract_contact(&shifted, threshold, &frame.spec);
    let f = in_meters(poisson_integrate(&gm, Some(&mask0)));
    let (mask, point_pixels, points_sensor) = extract_contact(&f, threshold, &frame.spec);
    let patch = TactilePatch {
        normals,
        depth: f,
        mask,
        point_pixels,
        points_sensor,
        points_world: Vec::new(),
        normals_world: Vec::new(),
    };
    to_world(&patch, &frame.pose)
}
