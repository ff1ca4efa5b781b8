//! Seeded k-means (k-means++ initialization, Lloyd iterations).
//!
//! Points are stored row-major in a flat slice. Nearest-centroid ties resolve
//! to the lowest centroid index, which also means duplicate centroids always
//! leave the higher-indexed copy empty; empty clusters are re-seeded from the
//! point farthest from its assigned centroid, so a finished run never reports
//! empty or duplicate centroids.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KMeansError {
    #[error("cannot form {k} clusters from {distinct} distinct points")]
    TooFewDistinct { k: usize, distinct: usize },
    #[error("no points to cluster")]
    Empty,
    #[error("point buffer of length {len} is not a multiple of dimension {dim}")]
    Ragged { len: usize, dim: usize },
    #[error("cluster count must be positive")]
    ZeroClusters,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tol: f64,
    pub seed: u64,
    /// Round centroids to `f32` after every update, so the result can be
    /// stored in single precision without changing any assignment.
    pub f32_centroids: bool,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iters: 100,
            tol: 1e-6,
            seed,
            f32_centroids: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub dim: usize,
    /// `k × dim`, row-major.
    pub centroids: Vec<f64>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: f64,
}

impl KMeansFit {
    pub fn k(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn centroid(&self, i: usize) -> &[f64] {
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid (lowest index on ties) and its squared distance.
pub fn nearest(point: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.chunks_exact(dim).enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Number of distinct rows.
pub fn distinct_rows(points: &[f64], dim: usize) -> usize {
    let mut rows: Vec<Vec<u64>> = points
        .chunks_exact(dim)
        .map(|r| r.iter().map(|v| canonical_bits(*v)).collect())
        .collect();
    rows.sort_unstable();
    rows.dedup();
    rows.len()
}

fn canonical_bits(v: f64) -> u64 {
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

fn check(points: &[f64], dim: usize, k: usize) -> Result<usize, KMeansError> {
    if k == 0 {
        return Err(KMeansError::ZeroClusters);
    }
    if points.is_empty() || dim == 0 {
        return Err(KMeansError::Empty);
    }
    if !points.len().is_multiple_of(dim) {
        return Err(KMeansError::Ragged {
            len: points.len(),
            dim,
        });
    }
    let distinct = distinct_rows(points, dim);
    if distinct < k {
        return Err(KMeansError::TooFewDistinct { k, distinct });
    }
    Ok(points.len() / dim)
}

/// Adds `extra` centroids to `existing` by D² sampling.
fn plus_plus_extend(points: &[f64], dim: usize, existing: &mut Vec<f64>, extra: usize, rng: &mut ChaCha8Rng) {
    let n = points.len() / dim;
    let mut d2: Vec<f64> = if existing.is_empty() {
        vec![f64::INFINITY; n]
    } else {
        points
            .chunks_exact(dim)
            .map(|p| nearest(p, existing, dim).1)
            .collect()
    };
    for _ in 0..extra {
        let pick = if existing.is_empty() {
            rng.gen_range(0..n)
        } else {
            let total: f64 = d2.iter().sum();
            if total > 0.0 {
                let mut r = rng.gen::<f64>() * total;
                let mut chosen = None;
                for (i, &d) in d2.iter().enumerate() {
                    if d > 0.0 {
                        chosen = Some(i);
                        if r < d {
                            break;
                        }
                        r -= d;
                    }
                }
                chosen.expect("positive mass")
            } else {
                // Only reachable if callers skipped the distinct-row check.
                0
            }
        };
        let row = &points[pick * dim..(pick + 1) * dim];
        existing.extend_from_slice(row);
        for (i, p) in points.chunks_exact(dim).enumerate() {
            let d = squared_distance(p, row);
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
}

fn assign(points: &[f64], centroids: &[f64], dim: usize) -> Vec<(usize, f64)> {
    points
        .par_chunks_exact(dim)
        .map(|p| nearest(p, centroids, dim))
        .collect()
}

/// Moves each empty centroid onto the point farthest from its own centroid.
/// Returns whether anything moved.
fn reseed_empty(points: &[f64], dim: usize, centroids: &mut [f64], assigned: &[(usize, f64)]) -> bool {
    let k = centroids.len() / dim;
    let mut counts = vec![0usize; k];
    for &(c, _) in assigned {
        counts[c] += 1;
    }
    let mut taken = vec![false; assigned.len()];
    let mut moved = false;
    let empties: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
    for empty in empties {
        let mut best: Option<(usize, f64)> = None;
        for (i, &(c, d)) in assigned.iter().enumerate() {
            if taken[i] || counts[c] < 2 || d <= 0.0 {
                continue;
            }
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        let Some((i, _)) = best else { break };
        taken[i] = true;
        counts[assigned[i].0] -= 1;
        counts[empty] += 1;
        centroids[empty * dim..(empty + 1) * dim].copy_from_slice(&points[i * dim..(i + 1) * dim]);
        moved = true;
    }
    moved
}

/// Inertia, centroids and per-point (cluster, distance) of one Lloyd iterate.
type Iterate = (f64, Vec<f64>, Vec<(usize, f64)>);

fn lloyd(points: &[f64], dim: usize, mut centroids: Vec<f64>, cfg: &KMeansConfig) -> KMeansFit {
    let k = centroids.len() / dim;
    let mut iterations = 0;
    // Lowest-inertia configuration without empty clusters; earliest wins ties.
    let mut best: Option<Iterate> = None;
    let mut consider = |centroids: &[f64], assigned: Vec<(usize, f64)>| {
        let inertia: f64 = assigned.iter().map(|&(_, d)| d).sum();
        if best.as_ref().is_none_or(|(b, _, _)| inertia < *b) {
            best = Some((inertia, centroids.to_vec(), assigned));
        }
    };
    for _ in 0..cfg.max_iters {
        iterations += 1;
        let assigned = assign(points, &centroids, dim);
        if reseed_empty(points, dim, &mut centroids, &assigned) {
            continue;
        }
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (p, &(c, _)) in points.chunks_exact(dim).zip(&assigned) {
            counts[c] += 1;
            for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(p) {
                *s += v;
            }
        }
        consider(&centroids, assigned);
        let mut shift: f64 = 0.0;
        for c in 0..k {
            let n = counts[c] as f64;
            let mean: Vec<f64> = sums[c * dim..(c + 1) * dim]
                .iter()
                .map(|s| s / n)
                .map(|v| if cfg.f32_centroids { v as f32 as f64 } else { v })
                .collect();
            shift = shift.max(squared_distance(&mean, &centroids[c * dim..(c + 1) * dim]).sqrt());
            centroids[c * dim..(c + 1) * dim].copy_from_slice(&mean);
        }
        if shift <= cfg.tol {
            break;
        }
    }

    // The loop may stop right after a re-seed or an update; settle assignments.
    let mut assigned = assign(points, &centroids, dim);
    for _ in 0..2 * k {
        if !reseed_empty(points, dim, &mut centroids, &assigned) {
            break;
        }
        assigned = assign(points, &centroids, dim);
    }
    let mut counts = vec![0usize; k];
    for &(c, _) in &assigned {
        counts[c] += 1;
    }
    if counts.iter().all(|&n| n > 0) {
        consider(&centroids, assigned.clone());
    }
    let (inertia, centroids, assigned) = best.unwrap_or_else(|| {
        let inertia = assigned.iter().map(|&(_, d)| d).sum();
        (inertia, centroids, assigned)
    });
    KMeansFit {
        dim,
        inertia,
        assignments: assigned.into_iter().map(|(c, _)| c).collect(),
        centroids,
        iterations,
    }
}

/// Clusters `points` (row-major, `dim` columns) into `cfg.k` groups.
pub fn fit(points: &[f64], dim: usize, cfg: &KMeansConfig) -> Result<KMeansFit, KMeansError> {
    check(points, dim, cfg.k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids = Vec::with_capacity(cfg.k * dim);
    plus_plus_extend(points, dim, &mut centroids, cfg.k, &mut rng);
    Ok(lloyd(points, dim, centroids, cfg))
}

/// Grows an existing solution to `cfg.k` centroids: the old centroids are
/// kept as starting points and the new ones are drawn by D² sampling.
///
/// Starting from a superset of the previous centroids, the objective can only
/// go down, so the returned inertia never exceeds `previous`'s.
pub fn fit_extending(
    points: &[f64],
    dim: usize,
    previous: &[f64],
    cfg: &KMeansConfig,
) -> Result<KMeansFit, KMeansError> {
    check(points, dim, cfg.k)?;
    let prev_k = previous.len() / dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids = previous.to_vec();
    if prev_k > cfg.k {
        centroids.truncate(cfg.k * dim);
    } else {
        plus_plus_extend(points, dim, &mut centroids, cfg.k - prev_k, &mut rng);
    }
    Ok(lloyd(points, dim, centroids, cfg))
}
