//! The training loop shared by the global (train) and refinement stages.

use crate::gaussian::{GaussianPrimitive, RenderOptions};
use crate::hull::HullShell;
use crate::io::PointCloud;
use crate::math::{Aabb, Vec3};
use crate::metrics::KdTree3;
use crate::optim::{
    compute_loss, densify, hull_prune, step, AdamState, GradientAccumulator, LossBreakdown,
    SupervisionFrame, TrainConfig,
};
use crate::Result;
use std::io::Write;

/// Scene plus optimizer/accumulator state at some iteration.
pub struct TrainState {
    pub scene: Vec<GaussianPrimitive>,
    pub adam: AdamState,
    pub accum: GradientAccumulator,
    pub iteration: u64,
    /// Last densification thresholds (all Gaussians / object region).
    pub tau_g_all: f64,
    pub tau_g_object: f64,
    /// Per-Gaussian window means captured when a run pauses, aligned with
    /// `scene`; touch selection consumes these together with `tau_g_object`.
    pub window_means: Vec<f64>,
}

impl TrainState {
    pub fn fresh(scene: Vec<GaussianPrimitive>) -> Self {
        let n = scene.len();
        Self {
            adam: AdamState::new(n),
            accum: GradientAccumulator::new(n),
            scene,
            iteration: 0,
            tau_g_all: 0.0,
            tau_g_object: 0.0,
            window_means: vec![0.0; n],
        }
    }
}

/// Initial Gaussians from seed clouds: isotropic scales from local point
/// spacing, low opacity, seed colors.
pub fn init_scene_from_seeds(object: &PointCloud, background: &PointCloud) -> Vec<GaussianPrimitive> {
    let mut scene = Vec::with_capacity(object.len() + background.len());
    for (cloud, sigma_cap) in [(object, 0.01), (background, 0.08)] {
        if cloud.is_empty() {
            continue;
        }
        let tree = KdTree3::build(&cloud.positions);
        for (i, &p) in cloud.positions.iter().enumerate() {
            // Nearest other point sets the footprint; the query point itself
            // is in the tree, so probe from a tiny offset.
            let d = nearest_other(&tree, p);
            let sigma = (d * 0.7).clamp(1e-4, sigma_cap);
            let color = cloud.colors.get(i).copied().unwrap_or([0.5; 3]);
            scene.push(GaussianPrimitive::isotropic(
                p,
                sigma,
                0.1,
                Vec3::new(color[0], color[1], color[2]),
            ));
        }
    }
    scene
}

fn nearest_other(tree: &KdTree3, p: Vec3) -> f64 {
    // Nudge the query so the point itself (distance 0) does not win.
    let eps = 1e-9;
    let d = tree.nearest_sq(p + Vec3::new(eps, 0.0, 0.0)).sqrt();
    if d > 1e-7 {
        d
    } else {
        // Coincident points: fall back to a small default footprint.
        0.003
    }
}

/// One training driver. Frames are visited round-robin; densification and
/// hull pruning run on their configured cadences once past
/// `densify_start`.
pub struct Trainer<'a> {
    pub config: &'a TrainConfig,
    pub frames: &'a [SupervisionFrame],
    pub shell: &'a HullShell,
    pub roi: Aabb,
    pub opts: RenderOptions,
    /// Line-delimited iteration metrics sink.
    pub metrics_log: Option<std::fs::File>,
    pub log_interval: u64,
}

impl<'a> Trainer<'a> {
    pub fn new(
        config: &'a TrainConfig,
        frames: &'a [SupervisionFrame],
        shell: &'a HullShell,
    ) -> Result<Self> {
        let roi = shell
            .hull
            .occupied_bounds()
            .ok_or_else(|| crate::Error::StageInput("empty hull".into()))?
            .dilated(0.10);
        Ok(Self {
            config,
            frames,
            shell,
            roi,
            opts: RenderOptions::default(),
            metrics_log: None,
            log_interval: 50,
        })
    }

    /// Runs iterations [state.iteration, until), mutating the state.
    pub fn run_until(&mut self, state: &mut TrainState, until: u64) -> Result<LossBreakdown> {
        assert!(until <= self.config.total_iterations);
        let mut last = LossBreakdown::default();
        while state.iteration < until {
            let iter = state.iteration;
            let frame = &self.frames[(iter as usize) % self.frames.len()];
            let (breakdown, grads) =
                compute_loss(&state.scene, frame, &self.config.weights, &self.opts)?;
            state.accum.observe(&grads);
            step(
                &mut state.scene,
                &mut state.adam,
                &grads,
                &self.config.lr,
                iter,
                self.config.total_iterations,
            );
            state.iteration += 1;
            last = breakdown;

            // Maintenance runs strictly before the pause boundary; at the
            // boundary the gradient window is captured unmutated so touch
            // selection sees the same data a densification event would.
            let due = |start: u64, interval: u64| {
                state.iteration < until
                    && state.iteration >= start
                    && state.iteration % interval == 0
            };
            if state.iteration == until {
                let n = state.scene.len();
                let means: Vec<f64> = (0..n).map(|i| state.accum.mean(i)).collect();
                state.tau_g_all =
                    if n == 0 { 0.0 } else { means.iter().sum::<f64>() / n as f64 };
                let shell = self.shell;
                let obj: Vec<f64> = (0..n)
                    .filter(|&i| shell.permitted(state.scene[i].center))
                    .map(|i| means[i])
                    .collect();
                state.tau_g_object = if obj.is_empty() {
                    state.tau_g_all
                } else {
                    obj.iter().sum::<f64>() / obj.len() as f64
                };
                state.window_means = means;
            }
            if due(self.config.densify_start, self.config.densify_interval) {
                let shell = self.shell;
                let region = |p: Vec3| shell.permitted(p);
                let stats = densify(
                    &mut state.scene,
                    &mut state.accum,
                    &mut state.adam,
                    self.config,
                    Some(&region),
                );
                state.tau_g_all = stats.tau_all;
                state.tau_g_object = stats.tau_object.unwrap_or(stats.tau_all);
            }
            if due(self.config.densify_start, self.config.hull_prune_interval) {
                hull_prune(
                    &mut state.scene,
                    &mut state.accum,
                    &mut state.adam,
                    self.shell,
                    &self.roi,
                )?;
            }
            if state.iteration % self.log_interval == 0 || state.iteration == until {
                let record = serde_json::json!({
                    "iter": state.iteration,
                    "loss": breakdown.total,
                    "color": breakdown.color,
                    "ssim": breakdown.ssim,
                    "depth": breakdown.depth,
                    "normal": breakdown.normal,
                    "anchor": breakdown.anchor,
                    "gaussians": state.scene.len(),
                });
                if let Some(f) = &mut self.metrics_log {
                    writeln!(f, "{record}")?;
                }
                log::info!("{record}");
            }
        }
        Ok(last)
    }
}
