//! Adam-style per-parameter-class optimizer.

use crate::gaussian::{GaussianPrimitive, ParamGrads};
use serde::{Deserialize, Serialize};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-15;
const MIN_SCALE: f64 = 1e-7;

/// Per-class learning rates, 3DGS-flavored defaults scaled for desk scenes.
/// The position rate decays exponentially from `position` to
/// `position_final` over the configured total iterations.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearningRates {
    pub position: f64,
    pub position_final: f64,
    pub rotation: f64,
    pub scale: f64,
    pub opacity: f64,
    pub color: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        // Adam step sizes are in parameter units (the moments normalize the
        // gradients), so these are meters / unit-interval steps per
        // iteration on direct parameterizations.
        Self {
            position: 1.6e-4,
            position_final: 1.6e-6,
            rotation: 1e-3,
            scale: 1e-3,
            opacity: 5e-3,
            color: 2.5e-3,
        }
    }
}

impl LearningRates {
    pub fn position_at(&self, iter: u64, total: u64) -> f64 {
        if total == 0 {
            return self.position;
        }
        let t = (iter as f64 / total as f64).clamp(0.0, 1.0);
        self.position * (self.position_final / self.position).powf(t)
    }
}

/// First/second moment state, aligned with the scene vector. Rows are
/// dropped and appended in lockstep with densification edits.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    pub t: u64,
    pub m_center: Vec<[f64; 3]>,
    pub v_center: Vec<[f64; 3]>,
    pub m_rotation: Vec<[f64; 4]>,
    pub v_rotation: Vec<[f64; 4]>,
    pub m_scale: Vec<[f64; 3]>,
    pub v_scale: Vec<[f64; 3]>,
    pub m_opacity: Vec<f64>,
    pub v_opacity: Vec<f64>,
    pub m_color: Vec<[f64; 3]>,
    pub v_color: Vec<[f64; 3]>,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        let mut s = Self::default();
        s.resize_push(n);
        s
    }

    pub fn len(&self) -> usize {
        self.m_opacity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m_opacity.is_empty()
    }

    /// Appends `n` zeroed rows (fresh Gaussians start with empty moments).
    pub fn resize_push(&mut self, n: usize) {
        let new = self.len() + n;
        self.m_center.resize(new, [0.0; 3]);
        self.v_center.resize(new, [0.0; 3]);
        self.m_rotation.resize(new, [0.0; 4]);
        self.v_rotation.resize(new, [0.0; 4]);
        self.m_scale.resize(new, [0.0; 3]);
        self.v_scale.resize(new, [0.0; 3]);
        self.m_opacity.resize(new, 0.0);
        self.v_opacity.resize(new, 0.0);
        self.m_color.resize(new, [0.0; 3]);
        self.v_color.resize(new, [0.0; 3]);
    }

    /// Keeps rows where `keep[i]`, preserving order.
    pub fn retain(&mut self, keep: &[bool]) {
        macro_rules! retain_vec {
            ($field:ident) => {
                let mut idx = 0;
                self.$field.retain(|_| {
                    let k = keep[idx];
                    idx += 1;
                    k
                });
            };
        }
        retain_vec!(m_center);
        retain_vec!(v_center);
        retain_vec!(m_rotation);
        retain_vec!(v_rotation);
        retain_vec!(m_scale);
        retain_vec!(v_scale);
        retain_vec!(m_opacity);
        retain_vec!(v_opacity);
        retain_vec!(m_color);
        retain_vec!(v_color);
    }
}

#[inline]
fn adam_delta(m: &mut f64, v: &mut f64, g: f64, lr: f64, bc1: f64, bc2: f64) -> f64 {
    *m = BETA1 * *m + (1.0 - BETA1) * g;
    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
    let mh = *m / bc1;
    let vh = *v / bc2;
    -lr * mh / (vh.sqrt() + EPS)
}

/// One optimizer step. Anchored primitives keep center and opacity
/// bit-identical; quaternions are renormalized and scale/opacity/color
/// clamped to their valid ranges afterwards.
pub fn step(
    scene: &mut [GaussianPrimitive],
    state: &mut AdamState,
    grads: &ParamGrads,
    lrs: &LearningRates,
    iter: u64,
    total_iterations: u64,
) {
    assert_eq!(scene.len(), state.len());
    assert_eq!(scene.len(), grads.opacity.len());
    state.t += 1;
    let bc1 = 1.0 - BETA1.powi(state.t as i32);
    let bc2 = 1.0 - BETA2.powi(state.t as i32);
    let lr_pos = lrs.position_at(iter, total_iterations);

    for i in 0..scene.len() {
        let g = &mut scene[i];
        if !g.anchored {
            for c in 0..3 {
                g.center[c] += adam_delta(
                    &mut state.m_center[i][c],
                    &mut state.v_center[i][c],
                    grads.center[i][c],
                    lr_pos,
                    bc1,
                    bc2,
                );
            }
            g.opacity += adam_delta(
                &mut state.m_opacity[i],
                &mut state.v_opacity[i],
                grads.opacity[i],
                lrs.opacity,
                bc1,
                bc2,
            );
            g.opacity = g.opacity.clamp(0.0, 1.0);
        }
        for c in 0..4 {
            g.rotation[c] += adam_delta(
                &mut state.m_rotation[i][c],
                &mut state.v_rotation[i][c],
                grads.rotation[i][c],
                lrs.rotation,
                bc1,
                bc2,
            );
        }
        let norm = g.rotation.norm();
        if norm > 0.0 {
            g.rotation /= norm;
        } else {
            g.rotation = crate::math::Quat::new(1.0, 0.0, 0.0, 0.0);
        }
        for c in 0..3 {
            g.scale[c] += adam_delta(
                &mut state.m_scale[i][c],
                &mut state.v_scale[i][c],
                grads.scale[i][c],
                lrs.scale,
                bc1,
                bc2,
            );
            g.scale[c] = g.scale[c].max(MIN_SCALE);
            g.color[c] += adam_delta(
                &mut state.m_color[i][c],
                &mut state.v_color[i][c],
                grads.color[i][c],
                lrs.color,
                bc1,
                bc2,
            );
            g.color[c] = g.color[c].clamp(0.0, 1.0);
        }
    }
}
