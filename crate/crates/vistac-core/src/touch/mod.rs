//! Active touch selection: high-gradient Gaussians, DBSCAN clustering,
//! geometric ranking, part-priority reranking from a pluggable
//! common-sense ranker, and the ordered touch list.

mod dbscan;
mod ranker;
mod select;

pub use dbscan::cluster;
pub use ranker::{CommonSenseRanker, MockRanker, RankQuery, RemoteRanker};
pub use select::{
    order_touches, plan_touches, rank_common_sense, rank_geometric, select_high_gradient, Touch,
    TouchSelection,
};

use crate::math::Vec3;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Clustering/selection parameters. The DBSCAN radius defaults to twice
/// the hull voxel resolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TouchParams {
    pub eps: f64,
    pub min_pts: usize,
    pub n_touches: usize,
}

impl Default for TouchParams {
    fn default() -> Self {
        Self { eps: 0.01, min_pts: 5, n_touches: 10 }
    }
}

/// One selected high-gradient Gaussian with its cluster and both ranks.
#[derive(Debug, Clone)]
pub struct TouchCandidate {
    pub position: Vec3,
    /// Index of the source Gaussian in the scene.
    pub gauss_idx: usize,
    pub cluster: usize,
    pub cluster_mean_gradient: f64,
    pub part: Option<String>,
    /// R_C: part priority rank, 1-based; unknown parts rank last.
    pub rank_part: u32,
    /// R_G: geometric cluster rank, 1-based.
    pub rank_geom: u32,
    /// Outward surface direction at the position (hull SDF gradient).
    pub normal: Vec3,
}

/// Ordered part names by touch priority for one object class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartRanking {
    pub label: String,
    /// Highest priority first; names unique.
    pub parts: Vec<String>,
}

impl PartRanking {
    pub fn new(label: impl Into<String>, parts: Vec<String>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for p in &parts {
            if p.is_empty() || !seen.insert(p.clone()) {
                return Err(Error::Selection(format!(
                    "part ranking has empty or duplicate name '{p}'"
                )));
            }
        }
        Ok(Self { label: label.into(), parts })
    }

    /// Degenerate ranking: ordering falls back to the geometric rank.
    pub fn empty() -> Self {
        Self { label: String::new(), parts: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// 1-based priority of a part name, if ranked.
    pub fn rank_of(&self, part: &str) -> Option<u32> {
        self.parts.iter().position(|p| p == part).map(|i| i as u32 + 1)
    }
}

/// World points with per-point part names (ingested segmentation output).
#[derive(Debug, Clone, Default)]
pub struct PartLabeledCloud {
    pub points: Vec<Vec3>,
    pub labels: Vec<String>,
}

impl PartLabeledCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
