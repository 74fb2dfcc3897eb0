//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use patchspan::ensemble::BinaryMap;
use patchspan::gridclust::PointLabel;

/// Brute-force DBSCAN: all-pairs Euclidean distances, union-find over core
/// points, clusters numbered by their first core point in row-major order and
/// border points given to the lowest-numbered reachable cluster.
pub fn brute_dbscan(map: &BinaryMap, eps: f64, min_pts: usize) -> (Vec<bool>, Vec<PointLabel>) {
    let mut points = Vec::new();
    for r in 0..map.rows() {
        for c in 0..map.cols() {
            if map.get(r, c) {
                points.push((r as f64, c as f64));
            }
        }
    }
    let n = points.len();
    let near = |a: usize, b: usize| {
        let (dr, dc) = (points[a].0 - points[b].0, points[a].1 - points[b].1);
        (dr * dr + dc * dc).sqrt() <= eps
    };
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in 0..i {
            if core[i] && core[j] && near(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut id_of_root = vec![usize::MAX; n];
    let mut next = 0;
    let mut labels = vec![PointLabel::Noise; n];
    for i in 0..n {
        if core[i] {
            let root = find(&mut parent, i);
            if id_of_root[root] == usize::MAX {
                id_of_root[root] = next;
                next += 1;
            }
            labels[i] = PointLabel::Cluster(id_of_root[root]);
        }
    }
    for i in 0..n {
        if !core[i] {
            let best = (0..n)
                .filter(|&j| core[j] && near(i, j))
                .map(|j| id_of_root[find(&mut parent, j)])
                .min();
            if let Some(id) = best {
                labels[i] = PointLabel::Cluster(id);
            }
        }
    }
    (core, labels)
}

/// Mean over unordered pairs of Euclidean distances, summed directly.
pub fn brute_mean_pairwise(points: &[(usize, usize)]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dr = points[i].0 as f64 - points[j].0 as f64;
            let dc = points[i].1 as f64 - points[j].1 as f64;
            sum += (dr * dr + dc * dc).sqrt();
        }
    }
    sum / (n * (n - 1) / 2) as f64
}

/// Concordant positive/negative pairs with half credit for ties.
pub fn rank_auc(scores: &[f64], attacked: &[bool]) -> f64 {
    let mut credit = 0.0;
    let mut pairs = 0usize;
    for (s, a) in scores.iter().zip(attacked) {
        if !a {
            continue;
        }
        for (t, b) in scores.iter().zip(attacked) {
            if *b {
                continue;
            }
            pairs += 1;
            credit += if s > t { 1.0 } else if s == t { 0.5 } else { 0.0 };
        }
    }
    credit / pairs as f64
}
