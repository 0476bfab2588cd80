use serde::{Deserialize, Serialize};

use crate::fingerprints::{tanimoto, FoldedFingerprint};
use crate::par::Exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub cluster_of: Vec<usize>,
    /// Centroid record index per cluster; clusters are ordered by
    /// non-increasing size, ties by centroid index.
    pub centroids: Vec<usize>,
    pub cutoff: f64,
}

impl ClusterAssignment {
    pub fn cluster_count(&self) -> usize {
        self.centroids.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.centroids.len()];
        for &c in &self.cluster_of {
            s[c] += 1;
        }
        s
    }

    /// Every record in its own cluster.
    pub fn singletons(n: usize) -> Self {
        ClusterAssignment {
            cluster_of: (0..n).collect(),
            centroids: (0..n).collect(),
            cutoff: 0.0,
        }
    }
}

/// Neighbours of every record at Tanimoto distance `<= cutoff` (self excluded).
/// Rows are computed independently, so only the neighbour lists are held.
pub fn neighbour_lists(fps: &[FoldedFingerprint], cutoff: f64, exec: Exec) -> Vec<Vec<usize>> {
    exec.map_range(fps.len(), |i| {
        (0..fps.len())
            .filter(|&j| j != i && 1.0 - tanimoto(&fps[i], &fps[j]).unwrap_or(0.0) <= cutoff)
            .collect()
    })
}

/// Butina clustering: candidates by descending neighbour count (ties by
/// index); each unassigned candidate becomes a centroid and absorbs its
/// unassigned neighbours.
pub fn butina_cluster(fps: &[FoldedFingerprint], cutoff: f64, exec: Exec) -> ClusterAssignment {
    let neighbours = neighbour_lists(fps, cutoff, exec);
    let mut order: Vec<usize> = (0..fps.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(neighbours[i].len()), i));
    let mut assigned = vec![usize::MAX; fps.len()];
    let mut raw: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in order {
        if assigned[i] != usize::MAX {
            continue;
        }
        let c = raw.len();
        assigned[i] = c;
        let mut members = vec![i];
        for &j in &neighbours[i] {
            if assigned[j] == usize::MAX {
                assigned[j] = c;
                members.push(j);
            }
        }
        raw.push((i, members));
    }
    let mut idx: Vec<usize> = (0..raw.len()).collect();
    idx.sort_by_key(|&c| (std::cmp::Reverse(raw[c].1.len()), raw[c].0));
    let mut cluster_of = vec![0; fps.len()];
    let mut centroids = Vec::with_capacity(raw.len());
    for (new, &old) in idx.iter().enumerate() {
        centroids.push(raw[old].0);
        for &m in &raw[old].1 {
            cluster_of[m] = new;
        }
    }
    ClusterAssignment {
        cluster_of,
        centroids,
        cutoff,
    }
}
