//! Lloyd's k-means with k-means++ seeding, shared by per-token clustering,
//! the global baseline, and PQ codebook training.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::{self, CentroidBlocks};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LloydConfig {
    pub k: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Rescale centroids to unit L2 norm after the last update.
    pub normalize: bool,
}

#[derive(Debug, Clone)]
pub struct LloydResult {
    /// `k x dim`, row-major.
    pub centroids: Vec<f32>,
    /// Exact WCSS after each assignment step (post repair, pre normalization).
    pub inertia_trace: Vec<f64>,
    /// Smallest cluster size after each assignment step's repair.
    pub min_cluster_trace: Vec<usize>,
    /// Point-to-centroid distance evaluations, seeding included.
    pub distance_evals: u64,
    pub repairs: usize,
}

/// k-means++ seeding. Falls back to uniform picks among unchosen points when
/// every remaining point coincides with a chosen center.
///
/// A point is only compared with a new center when the triangle inequality
/// allows it to move closer: if `|c_new - c_own|^2 >= 4 * best`, then
/// `|p - c_new|^2 >= best`. The pruning is exact, so the picks match an
/// unpruned run; `evals` counts only the distances actually computed.
pub fn kmeans_pp(points: &[f32], dim: usize, k: usize, rng: &mut impl Rng, evals: &mut u64) -> Vec<f32> {
    // slack for rounding in the stored distances
    const MARGIN: f64 = 4.0 * (1.0 + 1e-4);
    const PREFETCH_AHEAD: usize = 16;
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut centers = Vec::with_capacity(k * dim);
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    centers.extend_from_slice(row(first));
    let mut dists = vec![0.0f32; n];
    kernels::l2_sq_rows(points, dim, row(first), &mut dists);
    let mut best: Vec<f64> = dists.iter().map(|&d| f64::from(d)).collect();
    let mut owner = vec![0u32; n];
    *evals += n as u64;
    let mut center_gap = Vec::with_capacity(k);
    let mut survivors: Vec<u32> = Vec::with_capacity(n);
    for t in 1..k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, d) in best.iter().enumerate() {
                if *d <= 0.0 {
                    continue;
                }
                acc += d;
                if acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `acc` just short of `target`
            pick.unwrap_or_else(|| best.iter().rposition(|d| *d > 0.0).unwrap())
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.gen_range(0..free.len())]
        };
        chosen[pick] = true;
        let c = row(pick).to_vec();
        center_gap.clear();
        center_gap.extend(centers.chunks_exact(dim).map(|o| kernels::l2_sq_f64(o, &c)));
        *evals += t as u64;
        // survivors are sparse, so collect them first and prefetch ahead
        survivors.clear();
        survivors.extend((0..n as u32).filter(|&i| center_gap[owner[i as usize] as usize] < MARGIN * best[i as usize]));
        *evals += survivors.len() as u64;
        for (j, &i) in survivors.iter().enumerate() {
            if let Some(&ahead) = survivors.get(j + PREFETCH_AHEAD) {
                kernels::prefetch(row(ahead as usize));
            }
            let i = i as usize;
            let d = f64::from(kernels::l2_sq(row(i), &c));
            if d < best[i] {
                best[i] = d;
                owner[i] = t as u32;
            }
        }
        centers.extend_from_slice(&c);
    }
    centers
}

/// Runs Lloyd iterations on the rows of `points`.
///
/// Empty clusters are repaired after every assignment step by moving the
/// empty centroid onto the farthest member of the highest-inertia cluster.
pub fn lloyd(points: &[f32], dim: usize, cfg: &LloydConfig) -> Result<LloydResult> {
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: points.len(),
        });
    }
    let n = points.len() / dim;
    let k = cfg.k;
    if k == 0 || k > n {
        return Err(Error::Precondition(format!(
            "k-means needs 1 <= k <= n, got k = {k}, n = {n}"
        )));
    }
    if cfg.iterations == 0 {
        return Err(Error::Precondition("k-means needs at least one iteration".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut evals = 0u64;
    let mut centroids = kmeans_pp(points, dim, k, &mut rng, &mut evals);
    let mut labels = vec![0u32; n];
    let mut approx = vec![0f32; n];
    let mut dist = vec![0f64; n];
    let mut inertia_trace = Vec::with_capacity(cfg.iterations);
    let mut min_cluster_trace = Vec::with_capacity(cfg.iterations);
    let mut repairs = 0;

    for _ in 0..cfg.iterations {
        let blocks = CentroidBlocks::new(&centroids, dim);
        blocks.nearest_batch(points, &mut labels, &mut approx);
        evals += (n * k) as u64;

        let mut sizes = vec![0usize; k];
        let mut cluster_inertia = vec![0f64; k];
        for i in 0..n {
            let c = labels[i] as usize;
            let d = kernels::l2_sq_f64(&points[i * dim..(i + 1) * dim], &centroids[c * dim..(c + 1) * dim]);
            dist[i] = d;
            sizes[c] += 1;
            cluster_inertia[c] += d;
        }
        for empty in 0..k {
            if sizes[empty] > 0 {
                continue;
            }
            let donor = (0..k)
                .filter(|&c| sizes[c] >= 2)
                .max_by(|&a, &b| cluster_inertia[a].total_cmp(&cluster_inertia[b]).then(b.cmp(&a)))
                .ok_or_else(|| Error::Internal("no cluster can donate a point".into()))?;
            let far = (0..n)
                .filter(|&i| labels[i] as usize == donor)
                .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                .unwrap();
            labels[far] = empty as u32;
            sizes[donor] -= 1;
            sizes[empty] = 1;
            cluster_inertia[donor] -= dist[far];
            dist[far] = 0.0;
            centroids[empty * dim..(empty + 1) * dim].copy_from_slice(&points[far * dim..(far + 1) * dim]);
            repairs += 1;
        }
        inertia_trace.push(dist.iter().sum());
        min_cluster_trace.push(sizes.iter().copied().min().unwrap_or(0));

        let mut sums = vec![0f64; k * dim];
        for i in 0..n {
            let c = labels[i] as usize;
            for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(&points[i * dim..(i + 1) * dim]) {
                *s += f64::from(*v);
            }
        }
        for c in 0..k {
            let inv = 1.0 / sizes[c] as f64;
            for (dst, s) in centroids[c * dim..(c + 1) * dim].iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                *dst = (s * inv) as f32;
            }
        }
    }

    if cfg.normalize {
        kernels::normalize_rows(&mut centroids, dim);
    }
    Ok(LloydResult {
        centroids,
        inertia_trace,
        min_cluster_trace,
        distance_evals: evals,
        repairs,
    })
}

/// f64 mean of the rows, as f32.
pub fn mean_row(points: &[f32], dim: usize) -> Vec<f32> {
    let n = points.len() / dim;
    let mut sum = vec![0f64; dim];
    for row in points.chunks_exact(dim) {
        for (s, v) in sum.iter_mut().zip(row) {
            *s += f64::from(*v);
        }
    }
    sum.iter().map(|s| (s / n as f64) as f32).collect()
}
