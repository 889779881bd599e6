//! Densification (clone/split on accumulated gradients), opacity pruning,
//! hull pruning, and anchor insertion. All scene edits keep the optimizer
//! state and gradient accumulator aligned.

use super::{AdamState, GradientAccumulator, TrainConfig};
use crate::gaussian::GaussianPrimitive;
use crate::hull::HullShell;
use crate::math::{rot_of, Aabb, Quat, UnitQuat, Vec3};
use crate::{Error, Result};

const SPLIT_SCALE_SHRINK: f64 = 1.6;

/// Thresholds produced by a densification event. `tau_object` is present
/// when an object region was supplied; touch selection consumes it.
#[derive(Debug, Clone, Copy)]
pub struct DensifyStats {
    /// Mean accumulated gradient magnitude over all Gaussians.
    pub tau_all: f64,
    /// Mean over Gaussians inside the object region.
    pub tau_object: Option<f64>,
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

/// One densification event: Gaussians whose accumulated mean gradient
/// strictly exceeds the all-Gaussian mean are cloned (small) or split
/// (large, children scales / 1.6); near-transparent ones are removed.
/// Anchored Gaussians are never densified or pruned. The accumulator is
/// reset afterwards.
pub fn densify(
    scene: &mut Vec<GaussianPrimitive>,
    accum: &mut GradientAccumulator,
    adam: &mut AdamState,
    cfg: &TrainConfig,
    object_region: Option<&dyn Fn(Vec3) -> bool>,
) -> DensifyStats {
    assert_eq!(scene.len(), accum.len());
    assert_eq!(scene.len(), adam.len());
    let n = scene.len();
    let means: Vec<f64> = (0..n).map(|i| accum.mean(i)).collect();
    let tau_all = if n == 0 { 0.0 } else { means.iter().sum::<f64>() / n as f64 };
    let tau_object = object_region.map(|inside| {
        let sel: Vec<f64> = (0..n)
            .filter(|&i| inside(scene[i].center))
            .map(|i| means[i])
            .collect();
        if sel.is_empty() {
            0.0
        } else {
            sel.iter().sum::<f64>() / sel.len() as f64
        }
    });

    // Candidates over the threshold, strongest first, respecting the cap.
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&i| !scene[i].anchored && means[i] > tau_all)
        .collect();
    candidates.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(a.cmp(&b)));
    let headroom = cfg.max_gaussians.saturating_sub(n);
    candidates.truncate(headroom);
    let candidate_set: std::collections::BTreeSet<usize> = candidates.into_iter().collect();

    let mut keep = vec![true; n];
    let mut children: Vec<GaussianPrimitive> = Vec::new();
    let mut cloned = 0usize;
    let mut split = 0usize;
    let mut pruned = 0usize;
    for i in 0..n {
        let g = &scene[i];
        if !g.anchored && g.opacity < cfg.prune_opacity {
            keep[i] = false;
            pruned += 1;
            continue;
        }
        if !candidate_set.contains(&i) {
            continue;
        }
        let s_max = g.scale.max();
        if s_max > cfg.split_scale_threshold {
            // Split: two children along the principal axis, scales / 1.6.
            let axis = (0..3).max_by(|&a, &b| g.scale[a].total_cmp(&g.scale[b])).unwrap();
            let dir = rot_of(&g.rotation).column(axis).into_owned();
            let offset = dir * (0.5 * s_max);
            for sgn in [-1.0, 1.0] {
                let mut child = g.clone();
                child.center += offset * sgn;
                child.scale /= SPLIT_SCALE_SHRINK;
                children.push(child);
            }
            keep[i] = false;
            split += 1;
        } else {
            children.push(g.clone());
            cloned += 1;
        }
    }

    let mut idx = 0;
    scene.retain(|_| {
        let k = keep[idx];
        idx += 1;
        k
    });
    adam.retain(&keep);
    let added = children.len();
    scene.extend(children);
    adam.resize_push(added);
    accum.reset(scene.len());
    DensifyStats { tau_all, tau_object, cloned, split, pruned }
}

/// Deletes non-anchored Gaussians inside the region of interest whose
/// signed distance to the hull surface exceeds the exterior thickness.
/// Gaussians outside the roi (background) and anchored ones are untouched.
pub fn hull_prune(
    scene: &mut Vec<GaussianPrimitive>,
    accum: &mut GradientAccumulator,
    adam: &mut AdamState,
    shell: &HullShell,
    roi: &Aabb,
) -> Result<usize> {
    let hull_bb = shell
        .hull
        .occupied_bounds()
        .ok_or_else(|| Error::Config("hull pruning against an empty hull".into()))?;
    if !(roi.contains(hull_bb.min) && roi.contains(hull_bb.max)) {
        return Err(Error::Config(
            "roi does not enclose the hull; shell/roi frames mismatch the scene".into(),
        ));
    }
    let keep: Vec<bool> = scene
        .iter()
        .map(|g| {
            g.anchored
                || !roi.contains(g.center)
                || shell.signed_distance(g.center) <= shell.t_exterior
        })
        .collect();
    let removed = keep.iter().filter(|&&k| !k).count();
    let mut idx = 0;
    scene.retain(|_| {
        let k = keep[idx];
        idx += 1;
        k
    });
    // Accumulator rows follow the scene; drop in lockstep.
    let mut idx2 = 0;
    accum.sum.retain(|_| {
        let k = keep[idx2];
        idx2 += 1;
        k
    });
    let mut idx3 = 0;
    accum.count.retain(|_| {
        let k = keep[idx3];
        idx3 += 1;
        k
    });
    adam.retain(&keep);
    Ok(removed)
}

/// World-frame contact points and normals of one tactile patch, ready for
/// anchoring.
#[derive(Debug, Clone, Default)]
pub struct AnchorSource {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
}

/// Farthest-point subsampling, seeded at the lowest index; deterministic.
fn farthest_point_subsample(points: &[Vec3], budget: usize) -> Vec<usize> {
    if points.len() <= budget {
        return (0..points.len()).collect();
    }
    let mut chosen = Vec::with_capacity(budget);
    let mut dist = vec![f64::INFINITY; points.len()];
    let mut current = 0usize;
    chosen.push(current);
    for _ in 1..budget {
        let mut best = 0usize;
        let mut best_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            let d = (p - points[current]).norm_squared();
            if d < dist[i] {
                dist[i] = d;
            }
            if dist[i] > best_d {
                best_d = dist[i];
                best = i;
            }
        }
        current = best;
        chosen.push(current);
    }
    chosen
}

/// Adds one anchored Gaussian per (subsampled) contact point: frozen center
/// at the point, fixed opacity, isotropic scale, rotation aligning the
/// geometric normal with the tactile normal. Empty input is a no-op.
pub fn insert_anchors(
    scene: &mut Vec<GaussianPrimitive>,
    accum: &mut GradientAccumulator,
    adam: &mut AdamState,
    patches: &[AnchorSource],
    cfg: &TrainConfig,
) -> usize {
    let mut added = 0usize;
    for patch in patches {
        debug_assert_eq!(patch.points.len(), patch.normals.len());
        if patch.points.is_empty() {
            continue;
        }
        for idx in farthest_point_subsample(&patch.points, cfg.anchor_budget_per_patch) {
            let target = patch.normals[idx].normalize();
            // Isotropic scale: the smallest-axis tie resolves to x, so align
            // the local x axis with the target normal.
            let rotation = UnitQuat::rotation_between(&Vec3::x(), &target)
                .map(|q| *q.quaternion())
                .unwrap_or_else(|| Quat::new(0.0, 0.0, 0.0, 1.0));
            scene.push(GaussianPrimitive {
                center: patch.points[idx],
                rotation,
                scale: Vec3::repeat(cfg.anchor_scale),
                opacity: cfg.anchor_opacity,
                color: Vec3::repeat(0.5),
                anchored: true,
                target_normal: Some(target),
            });
            added += 1;
        }
    }
    adam.resize_push(added);
    accum.reset(scene.len());
    added
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hull::carve::tests::sphere_masks;
    use crate::hull::{build_shell, carve, fit_grid};

    fn plain(center: Vec3, sigma: f64, opacity: f64) -> GaussianPrimitive {
        GaussianPrimitive::isotropic(center, sigma, opacity, Vec3::repeat(0.5))
    }

    fn setup(n: usize) -> (Vec<GaussianPrimitive>, GradientAccumulator, AdamState) {
        let scene: Vec<GaussianPrimitive> =
            (0..n).map(|i| plain(Vec3::new(i as f64 * 0.1, 0.0, 1.0), 0.005, 0.5)).collect();
        let accum = GradientAccumulator::new(n);
        let adam = AdamState::new(n);
        (scene, accum, adam)
    }

    #[test]
    fn equal_gradients_mean_no_densification() {
        let (mut scene, mut accum, mut adam) = setup(5);
        for i in 0..5 {
            accum.sum[i] = 2.5;
            accum.count[i] = 1;
        }
        let stats = densify(&mut scene, &mut accum, &mut adam, &TrainConfig::default(), None);
        assert_eq!(stats.tau_all, 2.5);
        assert_eq!(stats.cloned + stats.split, 0);
        assert_eq!(scene.len(), 5);
    }

    #[test]
    fn outlier_gradient_is_densified() {
        let (mut scene, mut accum, mut adam) = setup(5);
        for i in 0..5 {
            accum.sum[i] = 1.0;
            accum.count[i] = 1;
        }
        accum.sum[2] = 10.0;
        // Small scale -> clone.
        let stats = densify(&mut scene, &mut accum, &mut adam, &TrainConfig::default(), None);
        assert_eq!(stats.cloned, 1);
        assert_eq!(stats.split, 0);
        assert_eq!(scene.len(), 6);
        assert_eq!(adam.len(), 6);
        assert_eq!(accum.len(), 6);

        // Large scale -> split into two smaller children.
        let (mut scene, mut accum, mut adam) = setup(5);
        scene[2].scale = Vec3::new(0.05, 0.02, 0.02);
        for i in 0..5 {
            accum.sum[i] = 1.0;
            accum.count[i] = 1;
        }
        accum.sum[2] = 10.0;
        let stats = densify(&mut scene, &mut accum, &mut adam, &TrainConfig::default(), None);
        assert_eq!(stats.split, 1);
        assert_eq!(scene.len(), 6); // 5 - 1 parent + 2 children
        let children: Vec<&GaussianPrimitive> =
            scene.iter().filter(|g| (g.scale.x - 0.05 / 1.6).abs() < 1e-12).collect();
        assert_eq!(children.len(), 2);
    }

    #[test]
    fn anchored_low_opacity_is_retained() {
        let (mut scene, mut accum, mut adam) = setup(3);
        scene[1].anchored = true;
        scene[1].target_normal = Some(Vec3::x());
        scene[1].opacity = 0.001;
        scene[2].opacity = 0.001;
        let stats = densify(&mut scene, &mut accum, &mut adam, &TrainConfig::default(), None);
        assert_eq!(stats.pruned, 1);
        assert_eq!(scene.len(), 2);
        assert!(scene.iter().any(|g| g.anchored && g.opacity == 0.001));
    }

    #[test]
    fn hull_prune_removes_exterior_floaters_only() {
        let center = Vec3::new(0.0, 0.0, 0.4);
        let radius = 0.05;
        let masks = sphere_masks(9, center, radius, 72);
        let spec = fit_grid(&masks, 0.005).unwrap();
        let hull = carve(&masks, &spec).unwrap();
        let shell = build_shell(&hull, 0.005, 0.02).unwrap();
        let roi = shell.hull.occupied_bounds().unwrap().dilated(0.1);

        let floater = plain(center + Vec3::new(radius + 0.05, 0.0, 0.0), 0.005, 0.5);
        let on_surface = plain(center + Vec3::new(radius, 0.0, 0.0), 0.005, 0.5);
        let background = plain(center + Vec3::new(1.0, 0.0, 0.0), 0.005, 0.5);
        let mut anchored_floater = plain(center + Vec3::new(0.0, radius + 0.05, 0.0), 0.005, 0.95);
        anchored_floater.anchored = true;
        anchored_floater.target_normal = Some(Vec3::y());

        let mut scene = vec![floater, on_surface, background, anchored_floater];
        let mut accum = GradientAccumulator::new(4);
        let mut adam = AdamState::new(4);
        let removed =
            hull_prune(&mut scene, &mut accum, &mut adam, &shell, &roi).unwrap();
        assert_eq!(removed, 1);
        assert_eq!(scene.len(), 3);
        assert_eq!(adam.len(), 3);
        // Survivors: surface Gaussian, background outside roi, anchored.
        assert!(scene.iter().any(|g| !g.anchored && (g.center - center).norm() < radius + 0.01));
        assert!(scene.iter().any(|g| g.center.x > 0.9));
        assert!(scene.iter().any(|g| g.anchored));

        // After pruning, no non-anchored Gaussian in the roi exceeds t_ext.
        for g in &scene {
            if !g.anchored && roi.contains(g.center) {
                assert!(shell.signed_distance(g.center) <= shell.t_exterior);
            }
        }

        // A roi that does not cover the hull is a frame mismatch.
        let bad_roi = Aabb::new(Vec3::zeros(), Vec3::repeat(0.01));
        assert!(hull_prune(&mut scene, &mut accum, &mut adam, &shell, &bad_roi).is_err());
    }

    #[test]
    fn insert_anchors_freezes_targets_and_respects_budget() {
        let (mut scene, mut accum, mut adam) = setup(2);
        let cfg = TrainConfig { anchor_budget_per_patch: 16, ..TrainConfig::default() };
        let patch = AnchorSource {
            points: (0..100)
                .map(|i| Vec3::new(i as f64 * 0.001, 0.0, 0.5))
                .collect(),
            normals: (0..100).map(|_| Vec3::new(0.0, 0.0, -1.0)).collect(),
        };
        let added = insert_anchors(&mut scene, &mut accum, &mut adam, &[patch], &cfg);
        assert_eq!(added, 16);
        assert_eq!(scene.len(), 18);
        assert_eq!(adam.len(), 18);
        for g in scene.iter().skip(2) {
            assert!(g.anchored);
            assert_eq!(g.opacity, cfg.anchor_opacity);
            assert_eq!(g.scale, Vec3::repeat(cfg.anchor_scale));
            let t = g.target_normal.unwrap();
            // Rotation aligns the geometric normal with the target.
            let n = g.geometric_normal(g.center + t);
            assert!((n.dot(&t) - 1.0).abs() < 1e-9);
            g.validate().unwrap();
        }

        // Empty patch set: no-op.
        let before = scene.len();
        let added = insert_anchors(&mut scene, &mut accum, &mut adam, &[], &cfg);
        assert_eq!(added, 0);
        assert_eq!(scene.len(), before);
    }

    #[test]
    fn farthest_point_subsample_spreads() {
        let points: Vec<Vec3> = (0..50).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let idx = farthest_point_subsample(&points, 3);
        assert_eq!(idx.len(), 3);
        assert_eq!(idx[0], 0);
        assert_eq!(idx[1], 49); // farthest from 0
        assert_eq!(idx[2], 24); // midpoint next (ties to lower index: 24 or 25)
    }
}
