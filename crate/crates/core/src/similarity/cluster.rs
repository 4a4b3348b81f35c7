//! DBSCAN over hamming distance, threshold sweeps, and cluster homogeneity.
//!
//! Cluster file format: one line per cluster with comma-separated entry
//! indices, followed by a `noise:` line listing unclustered indices.

use std::collections::{HashMap, VecDeque};
use std::hash::Hash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::mvp::MvpTree;
use super::{hamming, PerceptualHash};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSet {
    /// Member indices, ascending within each cluster; clusters in the order
    /// they were discovered.
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
    pub eps: u32,
    pub min_pts: usize,
}

impl ClusterSet {
    pub fn to_text(&self) -> String {
        let join = |v: &[usize]| v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        for c in &self.clusters {
            out.push_str(&join(c));
            out.push('\n');
        }
        out.push_str("noise:");
        out.push_str(&join(&self.noise));
        out.push('\n');
        out
    }

    pub fn labels(&self, n: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; n];
        for (c, members) in self.clusters.iter().enumerate() {
            for &m in members {
                out[m] = Some(c);
            }
        }
        out
    }
}

/// Parses the cluster file format. `eps`/`min_pts` are not stored in the
/// file and come back as zero.
pub fn parse_clusters(text: &str) -> Result<ClusterSet, String> {
    let parse_list = |s: &str, line: usize| -> Result<Vec<usize>, String> {
        if s.trim().is_empty() {
            return Ok(Vec::new());
        }
        s.split(',')
            .map(|v| v.trim().parse().map_err(|_| format!("line {line}: bad index `{v}`")))
            .collect()
    };
    let mut set = ClusterSet { clusters: Vec::new(), noise: Vec::new(), eps: 0, min_pts: 0 };
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        match line.strip_prefix("noise:") {
            Some(rest) => set.noise = parse_list(rest, i + 1)?,
            None => set.clusters.push(parse_list(line, i + 1)?),
        }
    }
    Ok(set)
}

/// Sorted eps-neighbourhoods (each including the point itself), computed on
/// the current rayon pool. The result does not depend on the worker count.
pub fn neighbor_lists(hashes: &[PerceptualHash], eps: u32) -> Vec<Vec<usize>> {
    let tree = MvpTree::new(hashes.to_vec());
    hashes.par_iter().map(|&h| tree.range(h, eps)).collect()
}

pub fn dbscan(hashes: &[PerceptualHash], eps: u32, min_pts: usize) -> ClusterSet {
    let neighbors = neighbor_lists(hashes, eps);
    dbscan_with_neighbors(&neighbors, eps, min_pts)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Label {
    Unvisited,
    Noise,
    Cluster(usize),
}

/// DBSCAN on precomputed neighbourhoods. Points are visited in ascending
/// index; a border point joins the first cluster that reaches it.
pub fn dbscan_with_neighbors(neighbors: &[Vec<usize>], eps: u32, min_pts: usize) -> ClusterSet {
    let n = neighbors.len();
    let mut labels = vec![Label::Unvisited; n];
    let mut count = 0;
    for p in 0..n {
        if labels[p] != Label::Unvisited {
            continue;
        }
        if neighbors[p].len() < min_pts {
            labels[p] = Label::Noise;
            continue;
        }
        let c = count;
        count += 1;
        labels[p] = Label::Cluster(c);
        let mut queue: VecDeque<usize> = neighbors[p].iter().copied().collect();
        while let Some(q) = queue.pop_front() {
            match labels[q] {
                Label::Noise => labels[q] = Label::Cluster(c),
                Label::Unvisited => {
                    labels[q] = Label::Cluster(c);
                    if neighbors[q].len() >= min_pts {
                        queue.extend(neighbors[q].iter().copied());
                    }
                }
                Label::Cluster(_) => {}
            }
        }
    }
    let mut clusters = vec![Vec::new(); count];
    let mut noise = Vec::new();
    for (i, l) in labels.into_iter().enumerate() {
        match l {
            Label::Cluster(c) => clusters[c].push(i),
            _ => noise.push(i),
        }
    }
    ClusterSet { clusters, noise, eps, min_pts }
}

/// Metrics of one threshold in a sweep. Noise is excluded everywhere;
/// metrics that need at least one (or two, for `avg_inter_distance`)
/// clusters are `None` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: u32,
    pub num_clusters: usize,
    pub avg_cluster_size: Option<f64>,
    pub avg_intra_distance: Option<f64>,
    pub avg_inter_distance: Option<f64>,
}

struct ClusterStats {
    mean_pairwise: f64,
    medoid: usize,
}

fn cluster_stats(hashes: &[PerceptualHash], members: &[usize]) -> ClusterStats {
    let mut total = 0u64;
    let mut medoid = (u64::MAX, usize::MAX);
    for &a in members {
        let s: u64 = members.iter().map(|&b| hamming(hashes[a], hashes[b]) as u64).sum();
        total += s;
        if (s, a) < medoid {
            medoid = (s, a);
        }
    }
    let n = members.len() as u64;
    let pairs = n * (n - 1) / 2;
    ClusterStats {
        // every unordered pair was summed twice
        mean_pairwise: if pairs == 0 { 0.0 } else { (total / 2) as f64 / pairs as f64 },
        medoid: medoid.1,
    }
}

fn mean_pairwise_of(hashes: &[PerceptualHash], points: &[usize]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let mut total = 0u64;
    for (i, &a) in points.iter().enumerate() {
        for &b in &points[i + 1..] {
            total += hamming(hashes[a], hashes[b]) as u64;
        }
    }
    let n = points.len() as u64;
    Some(total as f64 / (n * (n - 1) / 2) as f64)
}

pub fn sweep(hashes: &[PerceptualHash], eps_values: &[u32], min_pts: usize) -> Vec<SweepRow> {
    let tree = MvpTree::new(hashes.to_vec());
    eps_values
        .iter()
        .map(|&eps| {
            let neighbors: Vec<Vec<usize>> = hashes.par_iter().map(|&h| tree.range(h, eps)).collect();
            let set = dbscan_with_neighbors(&neighbors, eps, min_pts);
            let stats: Vec<ClusterStats> = set.clusters.par_iter().map(|c| cluster_stats(hashes, c)).collect();
            let k = set.clusters.len();
            let (avg_size, avg_intra) = if k == 0 {
                (None, None)
            } else {
                let members: usize = set.clusters.iter().map(Vec::len).sum();
                let intra: f64 = stats.iter().map(|s| s.mean_pairwise).sum();
                (Some(members as f64 / k as f64), Some(intra / k as f64))
            };
            let medoids: Vec<usize> = stats.iter().map(|s| s.medoid).collect();
            SweepRow {
                eps,
                num_clusters: k,
                avg_cluster_size: avg_size,
                avg_intra_distance: avg_intra,
                avg_inter_distance: mean_pairwise_of(hashes, &medoids),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("cluster has no members")]
pub struct EmptyCluster;

/// Size of the most frequent label divided by the cluster size.
pub fn homogeneity<L: Eq + Hash>(labels: &[L]) -> Result<f64, EmptyCluster> {
    if labels.is_empty() {
        return Err(EmptyCluster);
    }
    let mut counts: HashMap<&L, usize> = HashMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let top = counts.values().copied().max().expect("non-empty");
    Ok(top as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityReport {
    pub per_cluster: Vec<f64>,
    pub pure_clusters: usize,
    /// Fraction of clusters with homogeneity 1.0; `None` with no clusters.
    pub pure_fraction: Option<f64>,
    pub mean_homogeneity: Option<f64>,
}

/// Homogeneity of every cluster given one class label per entry index.
pub fn cluster_homogeneity<L: Eq + Hash>(clusters: &ClusterSet, labels: &[L]) -> Result<HomogeneityReport, EmptyCluster> {
    let per_cluster = clusters
        .clusters
        .iter()
        .map(|c| homogeneity(&c.iter().map(|&i| &labels[i]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>, _>>()?;
    let pure = per_cluster.iter().filter(|&&h| h == 1.0).count();
    let k = per_cluster.len();
    Ok(HomogeneityReport {
        pure_clusters: pure,
        pure_fraction: (k > 0).then(|| pure as f64 / k as f64),
        mean_homogeneity: (k > 0).then(|| per_cluster.iter().sum::<f64>() / k as f64),
        per_cluster,
    })
}
