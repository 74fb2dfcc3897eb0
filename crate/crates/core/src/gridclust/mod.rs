//! DBSCAN over the active cells of a binary map and the per-threshold
//! clustering statistics derived from it.
//!
//! Neighborhoods are closed (`dist <= eps`, the point itself included) and
//! are found by probing an integer offset stencil against a cell index, so a
//! query costs `O(|stencil|)` regardless of map density.

mod pairwise;

use std::collections::VecDeque;

use crate::ensemble::BinaryMap;
use crate::{Error, Result};

pub use pairwise::mean_pairwise_distance;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    /// Neighborhood radius in cell units.
    pub eps: f64,
    /// Minimum closed-neighborhood size of a core point.
    pub min_pts: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self { eps: 1.0, min_pts: 4 }
    }
}

impl ClusterParams {
    pub fn new(eps: f64, min_pts: usize) -> Result<Self> {
        let p = Self { eps, min_pts };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Argument(format!("eps must be > 0, got {}", self.eps)));
        }
        if self.min_pts == 0 {
            return Err(Error::Argument("min_pts must be at least 1".into()));
        }
        Ok(())
    }

    /// Integer offsets within distance `eps`, including `(0, 0)`, row-major.
    fn stencil(&self) -> Vec<(isize, isize)> {
        let reach = self.eps.floor() as isize;
        let eps2 = self.eps * self.eps;
        let mut out = Vec::new();
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                if ((dr * dr + dc * dc) as f64) <= eps2 {
                    out.push((dr, dc));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PointLabel {
    Cluster(usize),
    Noise,
}

/// DBSCAN result over the active cells of one binary map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    /// Active cells in row-major order.
    pub points: Vec<(usize, usize)>,
    pub labels: Vec<PointLabel>,
    pub core: Vec<bool>,
    pub n_clusters: usize,
}

impl ClusterAssignment {
    /// Member points of each cluster, indexed by cluster id.
    pub fn clusters(&self) -> Vec<Vec<(usize, usize)>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (p, label) in self.points.iter().zip(&self.labels) {
            if let PointLabel::Cluster(c) = label {
                out[*c].push(*p);
            }
        }
        out
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|l| **l == PointLabel::Noise).count()
    }
}

/// Clusters the set cells of `map`.
///
/// Clusters are numbered by their first core point in row-major order and
/// expanded completely one at a time, so a border point within reach of
/// several clusters joins the lowest-numbered one.
pub fn dbscan(map: &BinaryMap, params: &ClusterParams) -> ClusterAssignment {
    let (rows, cols) = (map.rows(), map.cols());
    let mut index = vec![usize::MAX; rows * cols];
    let mut points = Vec::new();
    for (cell, &bit) in map.bits().iter().enumerate() {
        if bit {
            index[cell] = points.len();
            points.push((cell / cols, cell % cols));
        }
    }

    let stencil = params.stencil();
    let neighbors = |p: (usize, usize), out: &mut Vec<usize>| {
        out.clear();
        for &(dr, dc) in &stencil {
            let r = p.0 as isize + dr;
            let c = p.1 as isize + dc;
            if r < 0 || c < 0 || r >= rows as isize || c >= cols as isize {
                continue;
            }
            let q = index[r as usize * cols + c as usize];
            if q != usize::MAX {
                out.push(q);
            }
        }
    };

    let mut scratch = Vec::with_capacity(stencil.len());
    let core: Vec<bool> = points
        .iter()
        .map(|&p| {
            neighbors(p, &mut scratch);
            scratch.len() >= params.min_pts
        })
        .collect();

    let mut labels: Vec<Option<usize>> = vec![None; points.len()];
    let mut n_clusters = 0;
    let mut queue = VecDeque::new();
    for seed in 0..points.len() {
        if !core[seed] || labels[seed].is_some() {
            continue;
        }
        let id = n_clusters;
        n_clusters += 1;
        labels[seed] = Some(id);
        queue.push_back(seed);
        while let Some(p) = queue.pop_front() {
            neighbors(points[p], &mut scratch);
            for &q in &scratch {
                if labels[q].is_none() {
                    labels[q] = Some(id);
                    if core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
    }

    ClusterAssignment {
        points,
        labels: labels
            .into_iter()
            .map(|l| l.map_or(PointLabel::Noise, PointLabel::Cluster))
            .collect(),
        core,
        n_clusters,
    }
}

/// Clustering statistics of one binarized map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterStats {
    pub n_clusters: usize,
    /// Mean over clusters of the per-cluster average pairwise distance.
    pub d_mean: f64,
    /// Population standard deviation of the per-cluster average pairwise distance.
    pub d_std: f64,
    /// Number of set cells, noise included.
    pub n_imp: usize,
}

impl ClusterStats {
    /// Values in channel order `(n_c, d_mean, d_std, n_imp)`.
    pub fn as_array(&self) -> [f64; 4] {
        [
            self.n_clusters as f64,
            self.d_mean,
            self.d_std,
            self.n_imp as f64,
        ]
    }
}

pub fn cluster_stats(assignment: &ClusterAssignment, map: &BinaryMap) -> ClusterStats {
    let averages: Vec<f64> = assignment
        .clusters()
        .iter()
        .map(|members| mean_pairwise_distance(members))
        .collect();
    let n = averages.len();
    let (d_mean, d_std) = if n == 0 {
        (0.0, 0.0)
    } else {
        let mean = averages.iter().sum::<f64>() / n as f64;
        let var = averages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
        (mean, var.sqrt())
    };
    ClusterStats {
        n_clusters: n,
        d_mean,
        d_std,
        n_imp: map.count_ones(),
    }
}

/// `dbscan` followed by `cluster_stats`.
pub fn cluster(map: &BinaryMap, params: &ClusterParams) -> ClusterStats {
    cluster_stats(&dbscan(map, params), map)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(p: &str) -> BinaryMap {
        BinaryMap::from_pattern(p).unwrap()
    }

    #[test]
    fn empty_map_has_no_points() {
        let a = dbscan(&pattern("...\n...\n..."), &ClusterParams::default());
        assert!(a.points.is_empty());
        assert_eq!(a.n_clusters, 0);
    }

    #[test]
    fn plus_shape_is_one_cluster() {
        let map = pattern(".#.\n###\n.#.");
        let a = dbscan(&map, &ClusterParams::default());
        assert_eq!(a.n_clusters, 1);
        assert_eq!(a.points.len(), 5);
        assert!(a.labels.iter().all(|l| *l == PointLabel::Cluster(0)));
        assert_eq!(a.core.iter().filter(|c| **c).count(), 1);

        let s = cluster_stats(&a, &map);
        let expected = (4.0 + 2.0 * 2.0 + 4.0 * 2f64.sqrt()) / 10.0;
        assert_eq!(s.n_clusters, 1);
        assert!((s.d_mean - expected).abs() < 1e-12);
        assert!((s.d_mean - 1.3657).abs() < 1e-4);
        assert_eq!(s.d_std, 0.0);
        assert_eq!(s.n_imp, 5);
    }

    #[test]
    fn two_by_two_block_is_noise() {
        let a = dbscan(&pattern("##\n##"), &ClusterParams::default());
        assert_eq!(a.n_clusters, 0);
        assert_eq!(a.noise_count(), 4);
    }

    #[test]
    fn solid_three_by_three() {
        let map = pattern("###\n###\n###");
        let s = cluster(&map, &ClusterParams::default());
        assert_eq!(s.n_clusters, 1);
        assert_eq!(s.n_imp, 9);
        assert!((s.d_mean - 1.635).abs() < 5e-4, "{}", s.d_mean);
    }

    #[test]
    fn twin_blocks_have_zero_spread() {
        let map = pattern(
            "###..###\n\
             ###..###\n\
             ###..###",
        );
        let s = cluster(&map, &ClusterParams::default());
        assert_eq!(s.n_clusters, 2);
        assert_eq!(s.d_std, 0.0);
        assert_eq!(s.n_imp, 18);
    }

    #[test]
    fn no_clusters_means_zero_distances() {
        let map = pattern("#.#\n...\n#.#");
        let s = cluster(&map, &ClusterParams::default());
        assert_eq!((s.n_clusters, s.d_mean, s.d_std, s.n_imp), (0, 0.0, 0.0, 4));
    }

    #[test]
    fn border_point_joins_first_cluster() {
        // Two plus shapes sharing the border cell at (1, 2).
        let map = pattern(
            ".#.#.\n\
             #####\n\
             .#.#.",
        );
        let a = dbscan(&map, &ClusterParams::default());
        assert_eq!(a.n_clusters, 2);
        let shared = a.points.iter().position(|&p| p == (1, 2)).unwrap();
        assert!(!a.core[shared]);
        assert_eq!(a.labels[shared], PointLabel::Cluster(0));
    }

    #[test]
    fn larger_radius_uses_diagonals() {
        let params = ClusterParams::new(1.5, 4).unwrap();
        let a = dbscan(&pattern("##\n##"), &params);
        assert_eq!(a.n_clusters, 1);
        assert!(a.core.iter().all(|c| *c));
    }

    #[test]
    fn params_validation() {
        assert!(ClusterParams::new(0.0, 4).is_err());
        assert!(ClusterParams::new(1.0, 0).is_err());
        assert_eq!(ClusterParams::default().stencil().len(), 5);
        assert_eq!(ClusterParams::new(0.5, 1).unwrap().stencil(), vec![(0, 0)]);
    }
}
