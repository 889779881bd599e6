//! Visuo-tactile sparse-view 3D reconstruction on Gaussian primitives.
//!
//! The crate is organized around one pipeline:
//!
//! 1. [`hull`] carves a voxel visual hull from silhouettes and fuses it with
//!    depth priors into seed points.
//! 2. [`gaussian`] renders a scene of 3D Gaussians (color/depth/normal) by
//!    global depth sorting and alpha compositing; [`optim`] trains it with
//!    photometric, depth, and normal losses, densification, and hull pruning.
//! 3. [`touch`] picks touch points from high-gradient Gaussians, clusters
//!    them, and orders them by part priority and geometric rank.
//! 4. [`tactile`] turns gel-sensor RGB images into normals, depth, and
//!    contact points via calibrated photometric stereo and Poisson
//!    integration; [`optim`] anchors those points in the scene.
//! 5. [`metrics`] evaluates PSNR/SSIM/Chamfer against ground truth from
//!    [`oracle`], which synthesizes datasets for the whole loop.
//!
//! [`pipeline`] wires the stages together behind versioned artifact
//! directories; `vistac-cli` exposes them as subcommands.

pub mod gaussian;
pub mod hull;
pub mod img;
pub mod io;
pub mod math;
pub mod metrics;
pub mod optim;
pub mod oracle;
pub mod pipeline;
pub mod tactile;
pub mod touch;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("ply parse error at byte {offset}: {msg}")]
    PlyParse { offset: u64, msg: String },
    #[error("degenerate carving: {msg}\n{diagnostics}")]
    DegenerateCarving { msg: String, diagnostics: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("calibration error: {0}")]
    Calibration(String),
    #[error("selection error: {0}")]
    Selection(String),
    #[error("stage input error: {0}")]
    StageInput(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Per-test scratch directory under the system temp dir.
#[cfg(test)]
pub(crate) fn test_dir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "vistac-{tag}-{}-{:?}",
        std::process::id(),
        std::thread::current().id()
    ));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
