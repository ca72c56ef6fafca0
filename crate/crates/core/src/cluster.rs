//! k-means++ clustering of token and line embeddings, homogeneity scoring,
//! and 3-means line-role separation.

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::network::mix_seed;
use crate::nn::Tensor;

/// A point-to-cluster mapping with its centroids and total squared distance.
#[derive(Clone, Debug)]
pub struct ClusterAssignment {
    /// Cluster id per point, each in `[0, k)`.
    pub assignment: Vec<u32>,
    /// `(k, dim)` centroid matrix.
    pub centroids: Tensor,
    /// Sum of squared point-to-centroid distances.
    pub inertia: f64,
}

impl ClusterAssignment {
    pub fn k(&self) -> usize {
        self.centroids.shape()[0]
    }

    /// Points per cluster id.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k()];
        for &a in &self.assignment {
            sizes[a as usize] += 1;
        }
        sizes
    }
}

/// Id of the most populated cluster, ties to the lowest id.
pub fn largest_cluster(assign: &ClusterAssignment) -> u32 {
    let sizes = assign.sizes();
    let mut best = 0;
    for (i, &s) in sizes.iter().enumerate() {
        if s > sizes[best] {
            best = i;
        }
    }
    best as u32
}

fn point(points: &Tensor, i: usize) -> &[f64] {
    let d = points.cols();
    &points.data()[i * d..(i + 1) * d]
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Count distinct rows, stopping once `need` have been seen.
fn distinct_rows_at_least(points: &Tensor, need: usize) -> bool {
    let d = points.cols();
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    for row in points.data().chunks(d) {
        seen.insert(row.iter().map(|v| v.to_bits()).collect());
        if seen.len() >= need {
            return true;
        }
    }
    false
}

/// D²-weighted seeding per k-means++.
fn seed_centroids(points: &Tensor, k: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let n = points.rows();
    let d = points.cols();
    let mut centroids = Tensor::zeros(&[k, d]);
    let first = rng.random_range(0..n);
    centroids.data_mut()[..d].copy_from_slice(point(points, first));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(point(points, i), point(&centroids, 0)))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            return Err(Error::Data(
                "k-means++ seeding ran out of distinct points".into(),
            ));
        }
        let r = rng.random::<f64>() * total;
        let mut cum = 0.0;
        let mut pick = None;
        let mut last_positive = 0;
        for (i, &w) in d2.iter().enumerate() {
            if w > 0.0 {
                last_positive = i;
            }
            cum += w;
            if cum > r && w > 0.0 {
                pick = Some(i);
                break;
            }
        }
        let pick = pick.unwrap_or(last_positive);
        let row = point(points, pick).to_vec();
        centroids.data_mut()[c * d..(c + 1) * d].copy_from_slice(&row);
        for (i, w) in d2.iter_mut().enumerate() {
            let nd = sq_dist(point(points, i), &row);
            if nd < *w {
                *w = nd;
            }
        }
    }
    Ok(centroids)
}

/// Nearest-centroid assignment (ties to the lowest id) plus squared
/// distances, computed block-wise through a matrix product.
fn assign_step(points: &Tensor, centroids: &Tensor) -> (Vec<u32>, Vec<f64>) {
    let n = points.rows();
    let d = points.cols();
    let k = centroids.rows();
    let x_sq: Vec<f64> = points
        .data()
        .chunks(d)
        .map(|r| r.iter().map(|v| v * v).sum())
        .collect();
    let c_sq: Vec<f64> = centroids
        .data()
        .chunks(d)
        .map(|r| r.iter().map(|v| v * v).sum())
        .collect();
    let mut assignment = vec![0u32; n];
    let mut dists = vec![0.0; n];
    const BLOCK: usize = 8192;
    let mut scores = vec![0.0; BLOCK.min(n.max(1)) * k];
    let mut start = 0;
    while start < n {
        let rows = BLOCK.min(n - start);
        unsafe {
            matrixmultiply::dgemm(
                rows,
                d,
                k,
                1.0,
                points.data()[start * d..].as_ptr(),
                d as isize,
                1,
                centroids.data().as_ptr(),
                1, // transposed view of (k, d)
                d as isize,
                0.0,
                scores.as_mut_ptr(),
                k as isize,
                1,
            );
        }
        for r in 0..rows {
            let i = start + r;
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let dist = x_sq[i] - 2.0 * scores[r * k + c] + c_sq[c];
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            assignment[i] = best as u32;
            dists[i] = best_d.max(0.0);
        }
        start += rows;
    }
    (assignment, dists)
}

/// k-means++ with Lloyd iterations until the maximum centroid shift drops
/// below `tol` or `max_iters` is reached. Deterministic given `seed`; empty
/// clusters are re-seeded from the farthest point. Also returns the inertia
/// recorded at each assignment step, which is non-increasing.
pub fn kmeans_pp_opts(
    points: &Tensor,
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<(ClusterAssignment, Vec<f64>)> {
    let n = points.rows();
    let d = points.cols();
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    if n == 0 {
        return Err(Error::Argument("no points to cluster".into()));
    }
    points.ensure_finite("clustering input")?;
    if !distinct_rows_at_least(points, k) {
        return Err(Error::Argument(format!(
            "k = {k} exceeds the number of distinct points"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(points, k, &mut rng)?;
    let mut trace = Vec::new();
    let mut assignment;
    let mut dists;
    loop {
        let (a, ds) = assign_step(points, &centroids);
        assignment = a;
        dists = ds;
        trace.push(dists.iter().sum());
        if trace.len() > max_iters {
            break;
        }
        // Update step: per-cluster means accumulated in point order.
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (i, &a) in assignment.iter().enumerate() {
            let c = a as usize;
            counts[c] += 1;
            for (s, v) in sums[c * d..(c + 1) * d].iter_mut().zip(point(points, i)) {
                *s += v;
            }
        }
        let mut new_centroids = centroids.clone();
        let mut reseeded = false;
        let mut used: HashSet<usize> = HashSet::new();
        for c in 0..k {
            if counts[c] > 0 {
                for (dst, s) in new_centroids.data_mut()[c * d..(c + 1) * d]
                    .iter_mut()
                    .zip(&sums[c * d..(c + 1) * d])
                {
                    *dst = s / counts[c] as f64;
                }
            } else {
                // Re-seed from the farthest point not already used.
                let mut far = None;
                for (i, &dist) in dists.iter().enumerate() {
                    if used.contains(&i) {
                        continue;
                    }
                    match far {
                        None => far = Some((i, dist)),
                        Some((_, fd)) if dist > fd => far = Some((i, dist)),
                        _ => {}
                    }
                }
                if let Some((i, _)) = far {
                    used.insert(i);
                    new_centroids.data_mut()[c * d..(c + 1) * d].copy_from_slice(point(points, i));
                    reseeded = true;
                }
            }
        }
        let shift = centroids
            .data()
            .chunks(d)
            .zip(new_centroids.data().chunks(d))
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = new_centroids;
        if shift < tol && !reseeded {
            // Final consistency pass against the converged centroids.
            let (a, ds) = assign_step(points, &centroids);
            assignment = a;
            dists = ds;
            trace.push(dists.iter().sum());
            break;
        }
    }
    let inertia = *trace.last().unwrap();
    Ok((
        ClusterAssignment {
            assignment,
            centroids,
            inertia,
        },
        trace,
    ))
}

/// [`kmeans_pp_opts`] with the default 300 iterations and `tol = 1e-6`.
pub fn kmeans_pp(points: &Tensor, k: usize, seed: u64) -> Result<ClusterAssignment> {
    kmeans_pp_opts(points, k, seed, 300, 1e-6).map(|(a, _)| a)
}

/// Unweighted mean over non-empty clusters of the majority-label fraction.
/// Majority ties are broken toward the lexicographically smallest label,
/// which leaves the fraction unchanged.
pub fn homogeneity<S: AsRef<str>>(assign: &ClusterAssignment, labels: &[S]) -> Result<f64> {
    if labels.len() != assign.assignment.len() {
        return Err(Error::Data(format!(
            "{} labels for {} points",
            labels.len(),
            assign.assignment.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Data("no points to score".into()));
    }
    let k = assign.k();
    let mut counts: Vec<HashMap<&str, usize>> = vec![HashMap::new(); k];
    for (&a, label) in assign.assignment.iter().zip(labels) {
        *counts[a as usize].entry(label.as_ref()).or_insert(0) += 1;
    }
    let mut total = 0.0;
    let mut non_empty = 0usize;
    for cluster in &counts {
        if cluster.is_empty() {
            continue; // dropped from the average
        }
        let size: usize = cluster.values().sum();
        let majority = cluster
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(_, c)| *c)
            .unwrap_or(0);
        total += majority as f64 / size as f64;
        non_empty += 1;
    }
    Ok(total / non_empty as f64)
}

/// Mean homogeneity over `runs` independently seeded clusterings for every
/// cluster count in `nc_list`. Deterministic given the master seed.
pub fn evaluate_protocol<S: AsRef<str> + Sync>(
    points: &Tensor,
    labels: &[S],
    nc_list: &[usize],
    runs: usize,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    if runs == 0 {
        return Err(Error::Argument("runs must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(nc_list.len());
    for (nci, &nc) in nc_list.iter().enumerate() {
        let hs: Vec<Result<f64>> = (0..runs)
            .into_par_iter()
            .map(|run| {
                let s = mix_seed(seed, (nci as u64) << 32 | run as u64);
                let assign = kmeans_pp(points, nc, s)?;
                homogeneity(&assign, labels)
            })
            .collect();
        let mut sum = 0.0;
        for h in hs {
            sum += h?;
        }
        out.push((nc, sum / runs as f64));
    }
    Ok(out)
}

/// 3-means over max-pooled line embeddings, separating line roles.
/// Requires at least three distinct embeddings.
pub fn cluster_lines(line_embeddings: &Tensor, seed: u64) -> Result<ClusterAssignment> {
    if !distinct_rows_at_least(line_embeddings, 3) {
        return Err(Error::Data(
            "line clustering needs at least 3 distinct line embeddings".into(),
        ));
    }
    kmeans_pp(line_embeddings, 3, seed)
}
