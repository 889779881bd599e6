//! DBSCAN over 3D points with a deterministic, input-order-canonical
//! labeling rule.
//!
//! A point is core when its eps-neighborhood (itself included) holds at
//! least `min_pts` points. Clusters are the connected components of core
//! points under eps-adjacency, numbered by their lowest member index.
//! Border points join the cluster of their lowest-index core neighbor;
//! everything else is noise.

use crate::math::Vec3;

/// Cluster assignment per point: `Some(id)` or `None` for outliers.
pub fn cluster(points: &[Vec3], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    assert!(eps > 0.0, "eps must be positive");
    assert!(min_pts >= 1, "min_pts must be at least 1");
    let n = points.len();
    let eps2 = eps * eps;
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| (points[i] - points[j]).norm_squared() <= eps2)
                .collect()
        })
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut next_id = 0usize;
    let mut stack = Vec::new();
    for start in 0..n {
        if !core[start] || label[start].is_some() {
            continue;
        }
        let id = next_id;
        next_id += 1;
        label[start] = Some(id);
        stack.push(start);
        while let Some(p) = stack.pop() {
            for &q in &neighbors[p] {
                if core[q] && label[q].is_none() {
                    label[q] = Some(id);
                    stack.push(q);
                }
            }
        }
    }
    // Border points: lowest-index core neighbor decides.
    for i in 0..n {
        if core[i] || label[i].is_some() {
            continue;
        }
        if let Some(&c) = neighbors[i].iter().find(|&&j| core[j]) {
            label[i] = label[c];
        }
    }
    label
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    /// Independent reference: core points via exhaustive counting,
    /// components via union-find, border points by the documented rule.
    pub(crate) fn brute_force_reference(
        points: &[Vec3],
        eps: f64,
        min_pts: usize,
    ) -> Vec<Option<usize>> {
        let n = points.len();
        let eps2 = eps * eps;
        let near = |i: usize, j: usize| (points[i] - points[j]).norm_squared() <= eps2;
        let core: Vec<bool> = (0..n)
            .map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts)
            .collect();

        // Union-find over core-core adjacency.
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for i in 0..n {
            for j in i + 1..n {
                if core[i] && core[j] && near(i, j) {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri.max(rj)] = ri.min(rj);
                    }
                }
            }
        }
        // Components numbered by lowest core index.
        let mut roots: Vec<usize> =
            (0..n).filter(|&i| core[i] && find(&mut parent, i) == i).collect();
        roots.sort_unstable();
        let id_of_root: std::collections::BTreeMap<usize, usize> =
            roots.iter().enumerate().map(|(k, &r)| (r, k)).collect();

        let mut label = vec![None; n];
        for i in 0..n {
            if core[i] {
                let r = find(&mut parent, i);
                label[i] = Some(id_of_root[&r]);
            }
        }
        for i in 0..n {
            if core[i] {
                continue;
            }
            if let Some(c) = (0..n).find(|&j| core[j] && near(i, j)) {
                label[i] = label[c];
            }
        }
        label
    }

    #[test]
    fn two_well_separated_groups() {
        // Two groups of 10 points, 1 mm spacing inside, 10 cm apart.
        let mut points = Vec::new();
        for i in 0..10 {
            points.push(Vec3::new(i as f64 * 0.001, 0.0, 0.0));
        }
        for i in 0..10 {
            points.push(Vec3::new(0.1 + i as f64 * 0.001, 0.0, 0.0));
        }
        let labels = cluster(&points, 0.01, 5);
        let reference = brute_force_reference(&points, 0.01, 5);
        assert_eq!(labels, reference);
        assert!(labels.iter().all(|l| l.is_some()));
        let ids: std::collections::BTreeSet<usize> = labels.iter().map(|l| l.unwrap()).collect();
        assert_eq!(ids.len(), 2);
        assert_eq!(labels[0], Some(0));
        assert_eq!(labels[10], Some(1));
    }

    #[test]
    fn isolated_point_is_noise() {
        let mut points = vec![Vec3::new(10.0, 0.0, 0.0)];
        for i in 0..6 {
            points.push(Vec3::new(i as f64 * 0.001, 0.0, 0.0));
        }
        let labels = cluster(&points, 0.01, 5);
        assert_eq!(labels[0], None);
        assert!(labels[1..].iter().all(|l| l.is_some()));
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let points = vec![Vec3::new(1.0, 2.0, 3.0); 8];
        let labels = cluster(&points, 0.001, 5);
        assert!(labels.iter().all(|l| *l == Some(0)));
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        let mut rng = ChaCha20Rng::seed_from_u64(2024);
        for trial in 0..100 {
            let n = rng.gen_range(1..=50);
            let points: Vec<Vec3> = (0..n)
                .map(|_| {
                    Vec3::new(
                        rng.gen_range(-0.05..0.05),
                        rng.gen_range(-0.05..0.05),
                        rng.gen_range(-0.05..0.05),
                    )
                })
                .collect();
            let eps = rng.gen_range(0.005..0.03);
            let min_pts = rng.gen_range(1..=6);
            let ours = cluster(&points, eps, min_pts);
            let reference = brute_force_reference(&points, eps, min_pts);
            assert_eq!(ours, reference, "trial {trial}: eps {eps}, min_pts {min_pts}");
        }
    }
}
