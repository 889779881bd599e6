//! Dataset manifest: a single JSON file binding camera frames, silhouette
//! masks, depth/normal priors, tactile captures, and the labeled cloud.
//! Units are meters; poses are 4x4 row-major world-to-camera (or
//! world-to-sensor) rigid transforms.

use super::{read_depth_png16, read_mask_png, read_normal_png16, read_pfm, read_rgb8};
use crate::gaussian::CameraView;
use crate::hull::SilhouetteMask;
use crate::img::Mask;
use crate::math::{Iso3, Mat3};
use crate::optim::SupervisionFrame;
use crate::tactile::{SensorSpec, TactileFrame};
use crate::{Error, Result};
use nalgebra::{Rotation3, Translation3, UnitQuaternion};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFrame {
    pub id: String,
    pub color: PathBuf,
    /// 16-bit millimeter PNG or grayscale PFM (by extension).
    pub depth: PathBuf,
    pub normal: PathBuf,
    pub mask: PathBuf,
    /// Row-major 4x4 world-to-camera rigid transform.
    pub pose: [[f64; 4]; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestTactile {
    pub id: String,
    pub rgb: PathBuf,
    /// Row-major 4x4 world-to-sensor rigid transform.
    pub pose: [[f64; 4]; 4],
    pub pixel_pitch: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub scene: String,
    /// Must be "meters".
    pub units: String,
    pub intrinsics: ManifestIntrinsics,
    pub frames: Vec<ManifestFrame>,
    #[serde(default)]
    pub tactile: Vec<ManifestTactile>,
    #[serde(default)]
    pub labeled_cloud: Option<PathBuf>,
    #[serde(default)]
    pub gt_cloud: Option<PathBuf>,
}

/// Fully loaded dataset, images validated against the intrinsics.
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub frames: Vec<SupervisionFrame>,
    pub silhouettes: Vec<SilhouetteMask>,
    pub tactile: Vec<TactileFrame>,
}

/// Parses a 4x4 row-major matrix into a rigid transform, rejecting
/// non-orthonormal rotations.
pub fn pose_from_matrix(m: &[[f64; 4]; 4], what: &str) -> Result<Iso3> {
    let r = Mat3::new(
        m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
    );
    let rtr = r.transpose() * r;
    if (rtr - Mat3::identity()).norm() > 1e-6 || (r.determinant() - 1.0).abs() > 1e-6 {
        return Err(Error::Dataset(format!("{what}: pose rotation is not rigid")));
    }
    if m[3] != [0.0, 0.0, 0.0, 1.0] {
        return Err(Error::Dataset(format!("{what}: bottom row must be [0,0,0,1]")));
    }
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    let t = Translation3::new(m[0][3], m[1][3], m[2][3]);
    Ok(Iso3::from_parts(t, q))
}

pub fn pose_to_matrix(iso: &Iso3) -> [[f64; 4]; 4] {
    let r = iso.rotation.to_rotation_matrix().into_inner();
    let t = iso.translation.vector;
    let mut m = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = r[(i, j)];
        }
        m[i][3] = t[i];
    }
    m[3][3] = 1.0;
    m
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read_depth_any(path: &Path) -> Result<(crate::img::GrayImage, Mask)> {
    if path.extension().and_then(|e| e.to_str()) == Some("pfm") {
        let depth = read_pfm(path)?;
        let valid = Mask {
            w: depth.w,
            h: depth.h,
            data: depth.data.iter().map(|&d| d > 0.0).collect(),
        };
        Ok((depth, valid))
    } else {
        read_depth_png16(path)
    }
}

/// Loads and validates a dataset manifest and every file it references.
/// Errors name the offending entry.
pub fn load_manifest(path: &Path) -> Result<LoadedDataset> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Dataset(format!("manifest {}: {e}", path.display())))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Dataset(format!("manifest {}: {e}", path.display())))?;
    if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(Error::Dataset(format!(
            "manifest schema version {} unsupported (expected {MANIFEST_SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }
    if manifest.units != "meters" {
        return Err(Error::Dataset(format!(
            "units declaration must be 'meters', got '{}'",
            manifest.units
        )));
    }
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let intr = &manifest.intrinsics;

    let mut frames = Vec::new();
    let mut silhouettes = Vec::new();
    for mf in &manifest.frames {
        let fail = |what: &str, detail: String| {
            Error::Dataset(format!("frame '{}' {what}: {detail}", mf.id))
        };
        let pose = pose_from_matrix(&mf.pose, &format!("frame '{}'", mf.id))?;
        let camera = CameraView::new(
            pose,
            intr.fx,
            intr.fy,
            intr.cx,
            intr.cy,
            intr.width,
            intr.height,
            intr.near,
            intr.far,
        )?;
        let color = read_rgb8(&resolve(&base, &mf.color))
            .map_err(|e| fail("color", e.to_string()))?;
        let (depth, depth_valid) = read_depth_any(&resolve(&base, &mf.depth))
            .map_err(|e| fail("depth", e.to_string()))?;
        let (normal, normal_valid) = read_normal_png16(&resolve(&base, &mf.normal))
            .map_err(|e| fail("normal", e.to_string()))?;
        let mask = read_mask_png(&resolve(&base, &mf.mask))
            .map_err(|e| fail("mask", e.to_string()))?;
        let frame = SupervisionFrame {
            id: mf.id.clone(),
            camera: camera.clone(),
            color,
            depth,
            depth_valid,
            normal,
            normal_valid,
        };
        frame.validate()?;
        silhouettes.push(SilhouetteMask::new(mask, camera)?);
        frames.push(frame);
    }

    let mut tactile = Vec::new();
    for mt in &manifest.tactile {
        let pose = pose_from_matrix(&mt.pose, &format!("tactile '{}'", mt.id))?;
        let rgb = read_rgb8(&resolve(&base, &mt.rgb))
            .map_err(|e| Error::Dataset(format!("tactile '{}' rgb: {e}", mt.id)))?;
        tactile.push(TactileFrame::new(rgb, pose, SensorSpec { pixel_pitch: mt.pixel_pitch })?);
    }

    Ok(LoadedDataset { manifest, frames, silhouettes, tactile })
}
