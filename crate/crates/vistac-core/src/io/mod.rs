//! Dataset ingestion and serialization: PLY export/import, PNG codecs for
//! color/depth/normal/mask images, and the dataset manifest.

mod manifest;
mod ply;
mod png_io;

pub use manifest::{
    load_manifest, pose_from_matrix, pose_to_matrix, DatasetManifest, LoadedDataset,
    ManifestFrame, ManifestIntrinsics, ManifestTactile, MANIFEST_SCHEMA_VERSION,
};
pub use ply::{
    export_gaussians_ply, export_points_ply, import_gaussians_ply, import_points_ply,
};
pub use png_io::{
    read_depth_png16, read_mask_png, read_normal_png16, read_pfm, read_rgb8, write_depth_png16,
    write_mask_png, write_normal_png16, write_pfm, write_rgb8,
};

use crate::math::Vec3;

/// Point set with optional per-point colors and normals (either empty or
/// one entry per point).
#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub positions: Vec<Vec3>,
    pub colors: Vec<[f64; 3]>,
    pub normals: Vec<Vec3>,
}

impl PointCloud {
    pub fn from_positions(positions: Vec<Vec3>) -> Self {
        Self { positions, colors: Vec::new(), normals: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}
