//! Training: photometric/depth/normal losses with analytic gradients, an
//! Adam-style optimizer, densification, hull pruning, and anchor insertion.

mod adam;
mod densify;
pub mod gradcheck;
pub(crate) mod loss;

pub use adam::{step, AdamState, LearningRates};
pub use densify::{densify, hull_prune, insert_anchors, AnchorSource, DensifyStats};
pub use loss::{compute_loss, LossBreakdown};

use crate::gaussian::{CameraView, ParamGrads};
use crate::img::{GrayImage, Mask, RgbImage};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Loss term weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub color: f64,
    pub ssim: f64,
    pub depth: f64,
    pub normal: f64,
    pub anchor: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        // L1 color + 0.2 (1 - SSIM), depth/normal regularizers in the
        // DN-Splatter style.
        Self { color: 1.0, ssim: 0.2, depth: 0.2, normal: 0.1, anchor: 0.2 }
    }
}

/// Training schedule and optimizer constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub total_iterations: u64,
    pub densify_start: u64,
    pub anchor_insert_iteration: u64,
    pub densify_interval: u64,
    pub hull_prune_interval: u64,
    pub lr: LearningRates,
    pub weights: LossWeights,
    /// Gaussians with a larger max scale split (children scales / 1.6);
    /// smaller ones clone.
    pub split_scale_threshold: f64,
    /// Near-transparent Gaussians below this opacity are removed.
    pub prune_opacity: f64,
    /// Isotropic scale of inserted anchor Gaussians, meters.
    pub anchor_scale: f64,
    pub anchor_opacity: f64,
    /// Contact points kept per tactile patch (farthest-point subsample).
    pub anchor_budget_per_patch: usize,
    /// Densification stops growing the scene beyond this.
    pub max_gaussians: usize,
    /// Checkpoint cadence in iterations; 0 disables.
    pub checkpoint_interval: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_iterations: 15_000,
            densify_start: 800,
            anchor_insert_iteration: 1_000,
            densify_interval: 100,
            hull_prune_interval: 100,
            lr: LearningRates::default(),
            weights: LossWeights::default(),
            split_scale_threshold: 0.01,
            prune_opacity: 0.005,
            anchor_scale: 0.0005,
            anchor_opacity: 0.95,
            anchor_budget_per_patch: 256,
            max_gaussians: 200_000,
            checkpoint_interval: 0,
        }
    }
}

impl TrainConfig {
    /// Reduced preset for CI-scale runs.
    pub fn desk_scale() -> Self {
        Self { total_iterations: 3_000, max_gaussians: 12_000, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.densify_start < self.anchor_insert_iteration
            && self.anchor_insert_iteration < self.total_iterations)
        {
            return Err(Error::Config(format!(
                "schedule must satisfy densify_start < anchor_insert < total: {} {} {}",
                self.densify_start, self.anchor_insert_iteration, self.total_iterations
            )));
        }
        let w = &self.weights;
        if [w.color, w.ssim, w.depth, w.normal, w.anchor].iter().any(|v| *v < 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if self.densify_interval == 0 || self.hull_prune_interval == 0 {
            return Err(Error::Config("intervals must be positive".into()));
        }
        Ok(())
    }
}

/// One posed supervision image set: color, depth with validity, and unit
/// camera-frame prior normals with validity.
#[derive(Debug, Clone)]
pub struct SupervisionFrame {
    pub id: String,
    pub camera: CameraView,
    pub color: RgbImage,
    /// Meters; consult `depth_valid`.
    pub depth: GrayImage,
    pub depth_valid: Mask,
    /// Unit vectors, camera frame; consult `normal_valid`.
    pub normal: RgbImage,
    pub normal_valid: Mask,
}

impl SupervisionFrame {
    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.camera.width, self.camera.height);
        for (name, ok) in [
            ("color", self.color.w == w && self.color.h == h),
            ("depth", self.depth.w == w && self.depth.h == h),
            ("depth_valid", self.depth_valid.w == w && self.depth_valid.h == h),
            ("normal", self.normal.w == w && self.normal.h == h),
            ("normal_valid", self.normal_valid.w == w && self.normal_valid.h == h),
        ] {
            if !ok {
                return Err(Error::DimensionMismatch(format!(
                    "frame {}: {name} does not match camera {}x{}",
                    self.id, w, h
                )));
            }
        }
        for i in 0..w * h {
            if self.depth_valid.data[i] && !(self.depth.data[i] > 0.0) {
                return Err(Error::Dataset(format!(
                    "frame {}: valid depth must be positive",
                    self.id
                )));
            }
            if self.normal_valid.data[i] {
                let n = self.normal.data[i];
                let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
                if (norm - 1.0).abs() > 1e-3 {
                    return Err(Error::Dataset(format!(
                        "frame {}: valid normal not unit (norm {norm})",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-Gaussian running mean of the view-space positional gradient
/// magnitude, reset at each densification event.
#[derive(Debug, Clone, Default)]
pub struct GradientAccumulator {
    pub sum: Vec<f64>,
    pub count: Vec<u32>,
}

impl GradientAccumulator {
    pub fn new(n: usize) -> Self {
        Self { sum: vec![0.0; n], count: vec![0; n] }
    }

    pub fn len(&self) -> usize {
        self.sum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sum.is_empty()
    }

    /// Folds one view's gradients in; only visible Gaussians count as
    /// observations.
    pub fn observe(&mut self, grads: &ParamGrads) {
        assert_eq!(grads.view_pos_grad.len(), self.sum.len());
        for i in 0..self.sum.len() {
            if grads.visible[i] {
                self.sum[i] += grads.view_pos_grad[i];
                self.count[i] += 1;
            }
        }
    }

    /// Mean accumulated gradient magnitude of one Gaussian.
    pub fn mean(&self, i: usize) -> f64 {
        if self.count[i] == 0 {
            0.0
        } else {
            self.sum[i] / self.count[i] as f64
        }
    }

    pub fn reset(&mut self, n: usize) {
        self.sum.clear();
        self.sum.resize(n, 0.0);
        self.count.clear();
        self.count.resize(n, 0);
    }
}
