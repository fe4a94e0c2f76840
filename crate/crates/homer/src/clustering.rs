//! Label clustering: size-capped balanced k-means and plain k-means over
//! label occurrence vectors, with generalized Jaccard distance.
//!
//! A label is a point: the sparse binary vector of training instances it
//! occurs in. Balanced k-means keeps one sorted list per cluster and caps
//! every cluster at ⌈|S|/k⌉; an insertion that overflows a cluster evicts
//! the furthest member, which re-enters at its next-nearest cluster,
//! cascading until every point has a seat. Iteration count is fixed, no
//! convergence test.

use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::dataset::MultiLabelDataset;
use crate::error::{Error, Result};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Occurrence vector of one label: the sorted training-instance indices
/// where the label appears. Dimension is the training-set size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    pub label_id: u32,
    pub bits: Vec<u32>,
    pub dim: usize,
}

impl LabelVector {
    pub fn new(label_id: u32, mut bits: Vec<u32>, dim: usize) -> Self {
        bits.sort_unstable();
        bits.dedup();
        debug_assert!(bits.iter().all(|&b| (b as usize) < dim));
        LabelVector { label_id, bits, dim }
    }

    /// Occurrence vectors for every vocabulary label of `ds`.
    pub fn from_dataset(ds: &MultiLabelDataset) -> Vec<LabelVector> {
        let mut bits: Vec<Vec<u32>> = vec![Vec::new(); ds.vocab.len()];
        for (i, inst) in ds.instances.iter().enumerate() {
            for &l in &inst.labels {
                bits[l as usize].push(i as u32);
            }
        }
        bits.into_iter()
            .enumerate()
            .map(|(l, b)| LabelVector::new(l as u32, b, ds.instances.len()))
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.bits.is_empty()
    }
}

/// A cluster center: sparse real vector with components in [0, 1]
/// (coordinate means of binary member vectors).
#[derive(Debug, Clone, PartialEq)]
pub struct Centroid {
    /// (instance index, value), strictly increasing, values in (0, 1].
    pub components: Vec<(u32, f64)>,
    pub dim: usize,
    sum: f64,
}

impl Centroid {
    pub fn new(components: Vec<(u32, f64)>, dim: usize) -> Self {
        debug_assert!(components.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(components.iter().all(|&(_, v)| v > 0.0 && v <= 1.0));
        let sum = components.iter().map(|&(_, v)| v).sum();
        Centroid { components, dim, sum }
    }

    pub fn from_point(point: &LabelVector) -> Self {
        Centroid::new(point.bits.iter().map(|&b| (b, 1.0)).collect(), point.dim)
    }

    /// Coordinate mean of `members`. `members` must be non-empty.
    pub fn mean_of(members: &[&LabelVector], dim: usize) -> Self {
        debug_assert!(!members.is_empty());
        let mut acc: std::collections::BTreeMap<u32, u32> = std::collections::BTreeMap::new();
        for m in members {
            for &b in &m.bits {
                *acc.entry(b).or_insert(0) += 1;
            }
        }
        let n = members.len() as f64;
        Centroid::new(acc.into_iter().map(|(b, c)| (b, c as f64 / n)).collect(), dim)
    }
}

/// Generalized (Tanimoto) Jaccard distance between a binary label vector
/// and a real centroid: `1 − Σ min(v_j, c_j) / Σ max(v_j, c_j)`.
///
/// Reduces to set Jaccard when the centroid is binary. Two all-zero
/// vectors are at distance 1.0 by convention.
pub fn distance(v: &LabelVector, c: &Centroid) -> Result<f64> {
    if v.dim != c.dim {
        return Err(Error::DimensionMismatch { left: v.dim, right: c.dim });
    }
    Ok(distance_unchecked(v, c))
}

fn distance_unchecked(v: &LabelVector, c: &Centroid) -> f64 {
    // For binary v: Σ min = Σ_{j∈v} c_j, Σ max = |v| + Σ c_j − Σ_{j∈v} c_j.
    let mut dot = 0.0;
    let (mut i, mut j) = (0, 0);
    while i < v.bits.len() && j < c.components.len() {
        match v.bits[i].cmp(&c.components[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += c.components[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    let denom = v.bits.len() as f64 + c.sum - dot;
    if denom <= 0.0 {
        return 1.0;
    }
    (1.0 - dot / denom).clamp(0.0, 1.0)
}

/// Which clustering algorithm partitions a node's labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClustererKind {
    BalancedKMeans,
    KMeans,
}

impl std::str::FromStr for ClustererKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "balanced-kmeans" => Ok(ClustererKind::BalancedKMeans),
            "kmeans" => Ok(ClustererKind::KMeans),
            other => Err(Error::InvalidParam(format!("unknown clusterer `{other}`"))),
        }
    }
}

impl std::fmt::Display for ClustererKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClustererKind::BalancedKMeans => write!(f, "balanced-kmeans"),
            ClustererKind::KMeans => write!(f, "kmeans"),
        }
    }
}

/// A disjoint, exhaustive partition of the input points into `k` clusters
/// of label ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    /// `assignments[i]` holds the label ids of cluster `i`.
    pub assignments: Vec<Vec<u32>>,
    pub k: usize,
    pub stats: ClusteringStats,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClusteringStats {
    /// Longest eviction cascade triggered by a single point insertion.
    pub max_cascade_evictions: usize,
    pub total_evictions: usize,
    /// Points force-seated after being evicted from every cluster.
    pub forced_insertions: usize,
}

pub fn cluster(
    kind: ClustererKind,
    points: &[LabelVector],
    k: usize,
    iterations: usize,
    seed: u64,
) -> Result<Clustering> {
    match kind {
        ClustererKind::BalancedKMeans => balanced_kmeans(points, k, iterations, seed),
        ClustererKind::KMeans => plain_kmeans(points, k, iterations, seed),
    }
}

fn validate_params(points: &[LabelVector], k: usize, iterations: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::InvalidParam("k must be at least 1".into()));
    }
    if iterations == 0 {
        return Err(Error::InvalidParam("iterations must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::InvalidParam(format!(
            "cannot form {k} clusters from {} points",
            points.len()
        )));
    }
    let dim = points[0].dim;
    for p in points {
        if p.dim != dim {
            return Err(Error::DimensionMismatch { left: p.dim, right: dim });
        }
    }
    Ok(dim)
}

/// `k` distinct points sampled without replacement as initial centers.
fn initial_centers(points: &[LabelVector], k: usize, seed: u64) -> Vec<Centroid> {
    let mut rng = StdRng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, points.len(), k)
        .into_iter()
        .map(|i| Centroid::from_point(&points[i]))
        .collect()
}

/// Distances of every point to every center, row-major `[point][center]`.
fn distance_matrix(points: &[LabelVector], centers: &[Centroid]) -> Vec<f64> {
    #[cfg(feature = "parallel")]
    {
        points
            .par_iter()
            .flat_map_iter(|p| centers.iter().map(move |c| distance_unchecked(p, c)))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut m = Vec::with_capacity(points.len() * centers.len());
        for p in points {
            for c in centers {
                m.push(distance_unchecked(p, c));
            }
        }
        m
    }
}

/// Balanced k-means: every cluster holds at most ⌈|S|/k⌉ points.
///
/// Runs exactly `iterations` passes. Within a pass centers are frozen;
/// a point evicted from a cluster keeps distance ∞ to it for the rest of
/// the pass. A point evicted from every cluster is seated in the currently
/// smallest cluster, which is always below the cap while a point is
/// unseated.
pub fn balanced_kmeans(
    points: &[LabelVector],
    k: usize,
    iterations: usize,
    seed: u64,
) -> Result<Clustering> {
    let dim = validate_params(points, k, iterations)?;
    let s = points.len();
    let cap = s.div_ceil(k);
    let mut centers = initial_centers(points, k, seed);
    let mut stats = ClusteringStats::default();
    // (distance, insertion sequence, point index), sorted ascending; the
    // sequence number makes equal distances order by insertion time.
    let mut clusters: Vec<Vec<(f64, u64, u32)>> = vec![Vec::new(); k];

    for _pass in 0..iterations {
        let mut dist = distance_matrix(points, &centers);
        for c in &mut clusters {
            c.clear();
        }
        let mut seq = 0u64;
        for p in 0..s {
            let mut v = p;
            let mut cascade = 0usize;
            loop {
                let row = &dist[v * k..(v + 1) * k];
                let mut best: Option<(f64, usize)> = None;
                for (j, &d) in row.iter().enumerate() {
                    if d.is_finite() && best.map_or(true, |(bd, _)| d < bd) {
                        best = Some((d, j));
                    }
                }
                let (d, j) = match best {
                    Some(b) => b,
                    None => {
                        // evicted everywhere: seat in the smallest cluster
                        let j = (0..k).min_by_key(|&j| clusters[j].len()).unwrap();
                        debug_assert!(clusters[j].len() < cap);
                        let pos = clusters[j]
                            .partition_point(|&(cd, cs, _)| (cd, cs) <= (f64::INFINITY, seq));
                        clusters[j].insert(pos, (f64::INFINITY, seq, v as u32));
                        seq += 1;
                        stats.forced_insertions += 1;
                        break;
                    }
                };
                let pos = clusters[j].partition_point(|&(cd, cs, _)| (cd, cs) <= (d, seq));
                clusters[j].insert(pos, (d, seq, v as u32));
                seq += 1;
                if clusters[j].len() > cap {
                    let (_, _, evicted) = clusters[j].pop().unwrap();
                    dist[evicted as usize * k + j] = f64::INFINITY;
                    v = evicted as usize;
                    cascade += 1;
                    stats.total_evictions += 1;
                } else {
                    break;
                }
            }
            stats.max_cascade_evictions = stats.max_cascade_evictions.max(cascade);
        }
        recalculate_centers(points, &clusters, &mut centers, dim);
    }

    let assignments = clusters
        .iter()
        .map(|c| c.iter().map(|&(_, _, p)| points[p as usize].label_id).collect())
        .collect();
    Ok(Clustering { assignments, k, stats })
}

/// Plain k-means (Lloyd) with the same distance and a fixed iteration
/// count. No size cap; an empty cluster re-seeds its center at the point
/// farthest from the cluster's previous center.
pub fn plain_kmeans(
    points: &[LabelVector],
    k: usize,
    iterations: usize,
    seed: u64,
) -> Result<Clustering> {
    let dim = validate_params(points, k, iterations)?;
    let s = points.len();
    let mut centers = initial_centers(points, k, seed);
    let mut assignment = vec![0usize; s];

    for _pass in 0..iterations {
        let dist = distance_matrix(points, &centers);
        for (p, slot) in assignment.iter_mut().enumerate() {
            let row = &dist[p * k..(p + 1) * k];
            let mut best = (f64::INFINITY, 0usize);
            for (j, &d) in row.iter().enumerate() {
                if d < best.0 {
                    best = (d, j);
                }
            }
            *slot = best.1;
        }
        // rebuild member lists, then update centers
        let mut members: Vec<Vec<u32>> = vec![Vec::new(); k];
        for (p, &j) in assignment.iter().enumerate() {
            members[j].push(p as u32);
        }
        for (j, cluster_members) in members.iter().enumerate() {
            if cluster_members.is_empty() {
                // farthest point from the previous center takes over
                let mut far = 0usize;
                let mut far_d = -1.0;
                for p in 0..s {
                    let d = distance_unchecked(&points[p], &centers[j]);
                    if d > far_d {
                        far = p;
                        far_d = d;
                    }
                }
                centers[j] = Centroid::from_point(&points[far]);
            } else {
                let refs: Vec<&LabelVector> =
                    cluster_members.iter().map(|&p| &points[p as usize]).collect();
                centers[j] = Centroid::mean_of(&refs, dim);
            }
        }
    }

    let mut assignments: Vec<Vec<u32>> = vec![Vec::new(); k];
    for (p, &j) in assignment.iter().enumerate() {
        assignments[j].push(points[p].label_id);
    }
    Ok(Clustering { assignments, k, stats: ClusteringStats::default() })
}

fn recalculate_centers(
    points: &[LabelVector],
    clusters: &[Vec<(f64, u64, u32)>],
    centers: &mut [Centroid],
    dim: usize,
) {
    for (j, cluster) in clusters.iter().enumerate() {
        if cluster.is_empty() {
            continue; // keep the previous center
        }
        let members: Vec<&LabelVector> =
            cluster.iter().map(|&(_, _, p)| &points[p as usize]).collect();
        centers[j] = Centroid::mean_of(&members, dim);
    }
}
