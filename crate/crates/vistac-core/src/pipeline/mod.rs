//! Pipeline orchestration: configuration, versioned stage artifacts, and
//! the stage functions behind the CLI subcommands.
//!
//! Stage flow: synth -> carve -> train (to the anchor-insert pause) ->
//! select-touches -> touch-sim -> refine (anchors + remaining iterations)
//! -> eval. Each stage writes a self-describing artifact directory that
//! the next stage consumes.

mod artifacts;
mod stages;
mod trainer;

pub use artifacts::{
    load_hull as load_hull_artifact, read_stage_meta, StageMeta, ARTIFACT_VERSION,
};
pub use stages::{
    run_all, stage_carve, stage_eval, stage_refine, stage_select_touches, stage_synth,
    stage_touch_sim, stage_train, RunSummary,
};
pub use trainer::{init_scene_from_seeds, TrainState, Trainer};

use crate::math::fnv1a64;
use crate::optim::TrainConfig;
use crate::oracle::{Material, Shape};
use crate::touch::TouchParams;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Synthetic dataset request (the stand-in for robot data collection).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub shape: Shape,
    pub material: Material,
    pub views: usize,
    pub image_size: usize,
    /// Ground-truth cloud sample count.
    pub gt_samples: usize,
    /// Part-labeled cloud sample count.
    pub labeled_samples: usize,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            shape: Shape::Bunny,
            material: Material::Dark,
            views: 9,
            image_size: 128,
            gt_samples: 10_000,
            labeled_samples: 2_000,
        }
    }
}

/// Hull carving and seeding parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HullParams {
    /// Voxel edge, meters.
    pub resolution: f64,
    pub t_interior: f64,
    pub t_exterior: f64,
    /// Depth-prior points closer than this to the hull surface are not
    /// background seeds.
    pub tau_d: f64,
    /// Conservative silhouette rasterization margin before carving.
    pub mask_dilation_px: usize,
    pub max_background_seeds: usize,
}

impl Default for HullParams {
    fn default() -> Self {
        Self {
            resolution: 0.005,
            t_interior: 0.005,
            t_exterior: 0.02,
            tau_d: 0.01,
            mask_dilation_px: 2,
            max_background_seeds: 100_000,
        }
    }
}

/// Which common-sense ranker backs touch selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RankerMode {
    #[default]
    Mock,
    /// Chat-completions endpoint from `VISTAC_RANKER_URL` etc.
    Remote,
    /// Geometric ordering only.
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TouchStageParams {
    #[serde(flatten)]
    pub params: TouchParams,
    pub ranker: RankerMode,
    /// Meters of gel indentation per simulated press.
    pub press_depth: f64,
    /// Contact mask threshold, meters.
    pub contact_threshold: f64,
}

impl Default for TouchStageParams {
    fn default() -> Self {
        Self {
            params: TouchParams::default(),
            ranker: RankerMode::Mock,
            press_depth: 0.0008,
            contact_threshold: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalParams {
    pub opacity_threshold: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self { opacity_threshold: 0.5 }
    }
}

/// Full pipeline configuration. Defaults are the paper-scale profile;
/// [`PipelineConfig::desk_scale`] is the CI preset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Existing dataset manifest; exclusive with `oracle`.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub oracle: Option<OracleSpec>,
    pub train: TrainConfig,
    pub hull: HullParams,
    pub touch: TouchStageParams,
    pub eval: EvalParams,
    /// Train on the first k frames, evaluate on the rest (all frames train
    /// and evaluate when unset).
    #[serde(default)]
    pub train_views: Option<usize>,
    /// Evaluate on exactly the last k frames (fixed held-out set shared
    /// across runs with different training view counts).
    #[serde(default)]
    pub eval_views: Option<usize>,
    /// Iteration metrics cadence.
    pub log_interval: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            dataset: None,
            oracle: Some(OracleSpec {
                image_size: 1280 / 2, // paper images are 1280x720; square proxy
                ..OracleSpec::default()
            }),
            train: TrainConfig::default(),
            hull: HullParams::default(),
            touch: TouchStageParams::default(),
            eval: EvalParams::default(),
            train_views: None,
            eval_views: None,
            log_interval: 50,
        }
    }
}

impl PipelineConfig {
    /// CI preset: 128x128 images, 3000 iterations, bounded seed budget.
    pub fn desk_scale() -> Self {
        Self {
            oracle: Some(OracleSpec::default()),
            train: TrainConfig::desk_scale(),
            hull: HullParams { max_background_seeds: 6_000, ..HullParams::default() },
            ..Self::default()
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.dataset.is_some() == self.oracle.is_some() {
            return Err(Error::Config(
                "exactly one of `dataset` or `oracle` must be set".into(),
            ));
        }
        if self.hull.resolution <= 0.0 || self.hull.t_exterior <= 0.0 {
            return Err(Error::Config("hull parameters must be positive".into()));
        }
        if self.hull.t_interior < self.hull.resolution {
            return Err(Error::Config(
                "hull interior thickness must be at least the voxel resolution".into(),
            ));
        }
        if self.touch.params.min_pts == 0 || self.touch.params.eps <= 0.0 {
            return Err(Error::Config("touch clustering parameters must be positive".into()));
        }
        if self.touch.press_depth > 0.001 {
            return Err(Error::Config("press depth is limited to 1 mm".into()));
        }
        Ok(())
    }

    /// Stable hash of the full configuration, for artifact stamping.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a64(canonical.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_declared_constants() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.train.total_iterations, 15_000);
        assert_eq!(cfg.train.densify_start, 800);
        assert_eq!(cfg.train.anchor_insert_iteration, 1_000);
        assert_eq!(cfg.hull.resolution, 0.005);
        assert_eq!(cfg.hull.t_interior, 0.005);
        assert_eq!(cfg.hull.t_exterior, 0.02);
        assert_eq!(cfg.hull.tau_d, 0.01);
        assert_eq!(cfg.touch.params.n_touches, 10);
        assert_eq!(cfg.touch.params.eps, 0.01);
        assert_eq!(cfg.touch.params.min_pts, 5);
        assert_eq!(cfg.train.anchor_scale, 0.0005);
        assert_eq!(cfg.train.anchor_budget_per_patch, 256);
        let desk = PipelineConfig::desk_scale();
        assert_eq!(desk.train.total_iterations, 3_000);
        assert_eq!(desk.oracle.as_ref().unwrap().image_size, 128);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v = serde_json::to_value(PipelineConfig::desk_scale()).unwrap();
        v["mystery"] = serde_json::json!(true);
        let parsed: std::result::Result<PipelineConfig, _> = serde_json::from_value(v);
        assert!(parsed.is_err());
    }

    #[test]
    fn dataset_and_oracle_are_exclusive() {
        let mut cfg = PipelineConfig::desk_scale();
        cfg.dataset = Some("x.json".into());
        assert!(cfg.validate().is_err());
        cfg.oracle = None;
        assert!(cfg.validate().is_ok());
        cfg.dataset = None;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = PipelineConfig::desk_scale();
        let b = PipelineConfig::desk_scale();
        assert_eq!(a.hash(), b.hash());
        let mut c = PipelineConfig::desk_scale();
        c.seed = 8;
        assert_ne!(a.hash(), c.hash());
    }
}
