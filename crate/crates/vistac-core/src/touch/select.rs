//! Candidate selection, ranking, and touch ordering.

use super::{cluster, PartLabeledCloud, PartRanking, TouchCandidate, TouchParams};
use crate::gaussian::GaussianPrimitive;
use crate::hull::HullShell;
use crate::math::Vec3;
use crate::optim::GradientAccumulator;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Gaussians inside the region whose accumulated mean gradient strictly
/// exceeds `tau_g`. An empty strict selection relaxes to the top 5% of
/// region members by gradient (stable index order); an empty region is an
/// error.
pub fn select_high_gradient(
    scene: &[GaussianPrimitive],
    accum: &GradientAccumulator,
    tau_g: f64,
    region: &dyn Fn(Vec3) -> bool,
) -> Result<Vec<usize>> {
    assert_eq!(scene.len(), accum.len());
    let in_region: Vec<usize> = (0..scene.len())
        .filter(|&i| !scene[i].anchored && region(scene[i].center))
        .collect();
    if in_region.is_empty() {
        return Err(Error::Selection(
            "no Gaussians inside the object region; carve/seed the object first".into(),
        ));
    }
    let strict: Vec<usize> =
        in_region.iter().copied().filter(|&i| accum.mean(i) > tau_g).collect();
    if !strict.is_empty() {
        return Ok(strict);
    }
    // Fallback: top-5% quantile by gradient, ties by stable index.
    let mut by_grad = in_region.clone();
    by_grad.sort_by(|&a, &b| accum.mean(b).total_cmp(&accum.mean(a)).then(a.cmp(&b)));
    let k = (in_region.len() as f64 * 0.05).ceil().max(1.0) as usize;
    let mut fallback: Vec<usize> = by_grad.into_iter().take(k).collect();
    fallback.sort_unstable();
    Ok(fallback)
}

/// Per-cluster geometric ranks (1-based): clusters sorted by descending
/// mean accumulated gradient, ties by larger size, then lowest member
/// index.
pub fn rank_geometric(
    assignments: &[Option<usize>],
    gradients: &[f64],
) -> std::collections::BTreeMap<usize, (u32, f64)> {
    let mut stats: std::collections::BTreeMap<usize, (f64, usize, usize)> = Default::default();
    for (i, a) in assignments.iter().enumerate() {
        if let Some(c) = a {
            let e = stats.entry(*c).or_insert((0.0, 0, usize::MAX));
            e.0 += gradients[i];
            e.1 += 1;
            e.2 = e.2.min(i);
        }
    }
    let mut order: Vec<(usize, f64, usize, usize)> = stats
        .into_iter()
        .map(|(c, (sum, count, lowest))| (c, sum / count as f64, count, lowest))
        .collect();
    order.sort_by(|a, b| {
        b.1.total_cmp(&a.1).then(b.2.cmp(&a.2)).then(a.3.cmp(&b.3))
    });
    order
        .into_iter()
        .enumerate()
        .map(|(rank, (c, mean, _, _))| (c, (rank as u32 + 1, mean)))
        .collect()
}

/// Per-candidate part labels and R_C ranks from the nearest labeled point
/// (ties to the lower point index). An empty ranking degrades every R_C to
/// 1 so ordering falls to the geometric rank alone.
pub fn rank_common_sense(
    positions: &[Vec3],
    labeled: &PartLabeledCloud,
    ranking: &PartRanking,
) -> Vec<(Option<String>, u32)> {
    let unknown_rank = ranking.parts.len() as u32 + 1;
    positions
        .iter()
        .map(|p| {
            if ranking.is_empty() || labeled.is_empty() {
                return (None, 1);
            }
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (j, q) in labeled.points.iter().enumerate() {
                let d = (p - q).norm_squared();
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            let label = labeled.labels[best].clone();
            let rank = ranking.rank_of(&label).unwrap_or(unknown_rank);
            (Some(label), rank)
        })
        .collect()
}

/// One planned touch.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Touch {
    pub position: [f64; 3],
    /// Outward approach direction at the touch point.
    pub normal: [f64; 3],
    pub cluster: usize,
    pub rank_part: u32,
    pub rank_geom: u32,
    pub part: Option<String>,
}

/// Ordered touch plan plus bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TouchSelection {
    pub touches: Vec<Touch>,
    /// Set when fewer candidates than requested touches existed.
    pub shortfall: bool,
    pub tau_g: f64,
    pub candidates: usize,
    pub clusters: usize,
}

/// Builds ranked candidates from the scene and emits the ordered touch
/// list: selection spreads over clusters (one per cluster until all are
/// represented, then round-robin), and the emitted list is sorted
/// lexicographically by (R_C, R_G, index).
pub fn plan_touches(
    scene: &[GaussianPrimitive],
    accum: &GradientAccumulator,
    tau_g: f64,
    shell: &HullShell,
    labeled: &PartLabeledCloud,
    ranking: &PartRanking,
    params: &TouchParams,
) -> Result<TouchSelection> {
    let region = |p: Vec3| shell.permitted(p);
    let selected = select_high_gradient(scene, accum, tau_g, &region)?;
    let positions: Vec<Vec3> = selected.iter().map(|&i| scene[i].center).collect();
    let gradients: Vec<f64> = selected.iter().map(|&i| accum.mean(i)).collect();

    let assignments = cluster(&positions, params.eps, params.min_pts);
    let geo = rank_geometric(&assignments, &gradients);
    let parts = rank_common_sense(&positions, labeled, ranking);

    let mut candidates = Vec::new();
    for (k, assignment) in assignments.iter().enumerate() {
        let Some(c) = assignment else { continue }; // outliers never emitted
        let (rank_geom, cluster_mean) = geo[c];
        let position = positions[k];
        let normal = shell
            .outward_normal(position)
            .unwrap_or_else(|| Vec3::new(0.0, 0.0, 1.0));
        candidates.push(TouchCandidate {
            position,
            gauss_idx: selected[k],
            cluster: *c,
            cluster_mean_gradient: cluster_mean,
            part: parts[k].0.clone(),
            rank_part: parts[k].1,
            rank_geom,
            normal,
        });
    }
    let n_clusters = geo.len();
    let (touches, shortfall) = order_touches(&candidates, params.n_touches);
    Ok(TouchSelection {
        touches,
        shortfall,
        tau_g,
        candidates: candidates.len(),
        clusters: n_clusters,
    })
}

/// Selects up to `n` candidates and orders them. Selection: walk candidates
/// in lexicographic (R_C, R_G, index) order taking at most one per cluster
/// until every cluster is represented, then round-robin further members.
/// The emitted list is re-sorted lexicographically, so earlier touches
/// never have larger keys.
pub fn order_touches(candidates: &[TouchCandidate], n: usize) -> (Vec<Touch>, bool) {
    assert!(n >= 1, "touch count must be at least 1");
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    let key = |i: usize| (candidates[i].rank_part, candidates[i].rank_geom, i);
    order.sort_by_key(|&i| key(i));

    // Group per cluster, preserving sorted order inside each.
    let mut clusters: Vec<usize> = Vec::new();
    let mut members: std::collections::BTreeMap<usize, std::collections::VecDeque<usize>> =
        Default::default();
    for &i in &order {
        let c = candidates[i].cluster;
        if !members.contains_key(&c) {
            clusters.push(c);
        }
        members.entry(c).or_default().push_back(i);
    }

    let mut picked = Vec::new();
    while picked.len() < n {
        let mut any = false;
        for &c in &clusters {
            if picked.len() >= n {
                break;
            }
            if let Some(i) = members.get_mut(&c).unwrap().pop_front() {
                picked.push(i);
                any = true;
            }
        }
        if !any {
            break;
        }
    }
    let shortfall = picked.len() < n;
    picked.sort_by_key(|&i| key(i));
    let touches = picked
        .into_iter()
        .map(|i| {
            let c = &candidates[i];
            Touch {
                position: [c.position.x, c.position.y, c.position.z],
                normal: [c.normal.x, c.normal.y, c.normal.z],
                cluster: c.cluster,
                rank_part: c.rank_part,
                rank_geom: c.rank_geom,
                part: c.part.clone(),
            }
        })
        .collect();
    (touches, shortfall)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn candidate(rank_part: u32, rank_geom: u32, cluster: usize) -> TouchCandidate {
        TouchCandidate {
            position: Vec3::zeros(),
            gauss_idx: 0,
            cluster,
            cluster_mean_gradient: 0.0,
            part: None,
            rank_part,
            rank_geom,
            normal: Vec3::z(),
        }
    }

    #[test]
    fn lexicographic_example() {
        // (R_C, R_G) = (1,2), (2,1), (1,1) in separate clusters.
        let cands = vec![candidate(1, 2, 0), candidate(2, 1, 1), candidate(1, 1, 2)];
        let (touches, shortfall) = order_touches(&cands, 3);
        assert!(!shortfall);
        let keys: Vec<(u32, u32)> =
            touches.iter().map(|t| (t.rank_part, t.rank_geom)).collect();
        assert_eq!(keys, vec![(1, 1), (1, 2), (2, 1)]);
    }

    #[test]
    fn shortfall_flagged() {
        let cands = vec![candidate(1, 1, 0), candidate(1, 2, 1)];
        let (touches, shortfall) = order_touches(&cands, 3);
        assert_eq!(touches.len(), 2);
        assert!(shortfall);
    }

    #[test]
    fn single_cluster_round_robin_degenerates() {
        let cands: Vec<TouchCandidate> =
            (0..12).map(|i| candidate(1, 1, 0).tap_idx(i)).collect();
        let (touches, shortfall) = order_touches(&cands, 10);
        assert_eq!(touches.len(), 10);
        assert!(!shortfall);
        assert!(touches.iter().all(|t| t.cluster == 0));
    }

    impl TouchCandidate {
        fn tap_idx(mut self, i: usize) -> Self {
            self.position = Vec3::new(i as f64, 0.0, 0.0);
            self
        }
    }

    #[test]
    fn emitted_keys_are_lexicographically_sorted_randomized() {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for _ in 0..200 {
            let n_cands = rng.gen_range(1..40);
            let cands: Vec<TouchCandidate> = (0..n_cands)
                .map(|i| {
                    candidate(
                        rng.gen_range(1..5),
                        rng.gen_range(1..5),
                        rng.gen_range(0..6),
                    )
                    .tap_idx(i)
                })
                .collect();
            let n = rng.gen_range(1..20);
            let (touches, _) = order_touches(&cands, n);
            for w in touches.windows(2) {
                let ka = (w[0].rank_part, w[0].rank_geom);
                let kb = (w[1].rank_part, w[1].rank_geom);
                assert!(ka <= kb, "emitted touches out of order: {ka:?} > {kb:?}");
            }
            // Determinism: same inputs, same output.
            let (again, _) = order_touches(&cands, n);
            assert_eq!(touches, again);
        }
    }

    #[test]
    fn empty_part_ranking_degrades_to_geometric_order() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let cands: Vec<TouchCandidate> = (0..20)
            .map(|i| {
                let mut c = candidate(1, rng.gen_range(1..6), rng.gen_range(0..4));
                // Empty ranking: every R_C is 1 already.
                c.position = Vec3::new(i as f64, 0.0, 0.0);
                c
            })
            .collect();
        let (with_flat_rc, _) = order_touches(&cands, 10);
        // Geometric-only reference: identical candidates sorted by R_G.
        let mut geo_sorted = with_flat_rc.clone();
        geo_sorted.sort_by_key(|t| t.rank_geom);
        let a: Vec<u32> = with_flat_rc.iter().map(|t| t.rank_geom).collect();
        let b: Vec<u32> = geo_sorted.iter().map(|t| t.rank_geom).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn rank_geometric_ties() {
        // Cluster means 5.0 and 3.0: ranks 1 and 2.
        let assignments = vec![Some(0), Some(0), Some(1), Some(1)];
        let gradients = vec![5.0, 5.0, 3.0, 3.0];
        let ranks = rank_geometric(&assignments, &gradients);
        assert_eq!(ranks[&0].0, 1);
        assert_eq!(ranks[&1].0, 2);

        // Equal means: the larger cluster ranks first.
        let assignments = vec![
            Some(0),
            Some(0),
            Some(0),
            Some(1),
            Some(1),
            Some(0),
            Some(0),
            Some(0),
            Some(0),
            Some(0),
            Some(1),
        ];
        let gradients = vec![2.0; 11];
        let ranks = rank_geometric(&assignments, &gradients);
        assert_eq!(ranks[&0].0, 1); // 8 members vs 3
        assert_eq!(ranks[&1].0, 2);

        // Single cluster: rank 1.
        let ranks = rank_geometric(&[Some(0), Some(0)], &[1.0, 2.0]);
        assert_eq!(ranks[&0].0, 1);
    }

    #[test]
    fn rank_common_sense_rules() {
        let labeled = PartLabeledCloud {
            points: vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)],
            labels: vec!["ear".into(), "body".into()],
        };
        let ranking = PartRanking::new("bunny", vec!["ear".into(), "body".into()]).unwrap();
        // Coincident with the "ear" point.
        let out = rank_common_sense(&[Vec3::zeros()], &labeled, &ranking);
        assert_eq!(out[0], (Some("ear".into()), 1));
        // Equidistant: lower point index wins.
        let out = rank_common_sense(&[Vec3::new(0.5, 0.0, 0.0)], &labeled, &ranking);
        assert_eq!(out[0], (Some("ear".into()), 1));
        // Unknown label ranks last.
        let labeled2 = PartLabeledCloud {
            points: vec![Vec3::zeros()],
            labels: vec!["tail".into()],
        };
        let out = rank_common_sense(&[Vec3::zeros()], &labeled2, &ranking);
        assert_eq!(out[0], (Some("tail".into()), 3));
        // Empty ranking: degenerate R_C = 1 everywhere.
        let out = rank_common_sense(&[Vec3::zeros()], &labeled, &PartRanking::empty());
        assert_eq!(out[0], (None, 1));
    }

    #[test]
    fn select_high_gradient_rules() {
        let scene: Vec<GaussianPrimitive> = (0..10)
            .map(|i| {
                GaussianPrimitive::isotropic(
                    Vec3::new(i as f64 * 0.01, 0.0, 0.0),
                    0.005,
                    0.5,
                    Vec3::repeat(0.5),
                )
            })
            .collect();
        let mut accum = GradientAccumulator::new(10);
        for i in 0..10 {
            accum.sum[i] = 1.0;
            accum.count[i] = 1;
        }
        accum.sum[3] = 10.0;
        // Region excludes index 9 regardless of gradient.
        accum.sum[9] = 100.0;
        let region = |p: Vec3| p.x < 0.085;
        let sel = select_high_gradient(&scene, &accum, 1.7, &region).unwrap();
        assert_eq!(sel, vec![3]);

        // Equal gradients: strict selection empty, top-5% fallback (1 of 9).
        for i in 0..10 {
            accum.sum[i] = 2.0;
        }
        let sel = select_high_gradient(&scene, &accum, 2.0, &region).unwrap();
        assert_eq!(sel.len(), 1);
        assert_eq!(sel[0], 0); // ties resolve to the stable lowest index

        // Empty region errors.
        let none = |_: Vec3| false;
        assert!(select_high_gradient(&scene, &accum, 2.0, &none).is_err());
    }
}
