use std::path::Path;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::allocate::AllocationPlan;
use super::kmeans::{lloyd, mean_row, LloydConfig};
use super::token_seed;
use crate::corpus::TokenVectorCorpus;
use crate::error::{Error, Result};
use crate::format::{self, ByteReader, ByteWriter};
use crate::kernels::{self, CentroidBlocks};

/// Training uses at most this many sampled occurrences per centroid.
pub const DEFAULT_SAMPLES_PER_CENTROID: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub seed: u64,
    pub threads: usize,
    pub samples_per_centroid: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 10,
            seed: 0,
            threads: 1,
            samples_per_centroid: DEFAULT_SAMPLES_PER_CENTROID,
        }
    }
}

/// Wall time and operation counts of a clustering run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClusterStats {
    pub distance_evals: u64,
    pub wall: Duration,
}

/// Global centroid matrix partitioned into contiguous per-token ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenPartitionedCodebook {
    dim: usize,
    centroids: Vec<f32>,
    /// `(offset, len)` per vocabulary entry; absent tokens have `len == 0`.
    ranges: Vec<(u64, u32)>,
}

impl TokenPartitionedCodebook {
    pub fn from_parts(dim: usize, centroids: Vec<f32>, ranges: Vec<(u64, u32)>) -> Result<Self> {
        if dim == 0 || !centroids.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: centroids.len(),
            });
        }
        let total = (centroids.len() / dim) as u64;
        let mut spans: Vec<(u64, u64)> = ranges
            .iter()
            .filter(|r| r.1 > 0)
            .map(|&(o, l)| (o, o + u64::from(l)))
            .collect();
        spans.sort_unstable();
        let mut cursor = 0;
        for (a, b) in spans {
            if a != cursor {
                return Err(Error::Precondition(format!(
                    "token ranges must tile the codebook; gap or overlap at {a}"
                )));
            }
            cursor = b;
        }
        if cursor != total {
            return Err(Error::Precondition(format!(
                "token ranges cover {cursor} of {total} centroids"
            )));
        }
        Ok(TokenPartitionedCodebook {
            dim,
            centroids,
            ranges,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.ranges.len()
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    pub fn centroid(&self, id: u32) -> &[f32] {
        let i = id as usize;
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }

    pub fn range(&self, token: u32) -> std::ops::Range<usize> {
        match self.ranges.get(token as usize) {
            Some(&(o, l)) => o as usize..o as usize + l as usize,
            None => 0..0,
        }
    }

    pub fn ranges(&self) -> &[(u64, u32)] {
        &self.ranges
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_header(format::MAGIC_CODEBOOK);
        w.u32(self.dim as u32);
        w.u32(self.ranges.len() as u32);
        w.u64(self.len() as u64);
        w.f32s(&self.centroids);
        for &(o, l) in &self.ranges {
            w.u64(o);
            w.u32(l);
        }
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = ByteReader::with_header(bytes, path, format::MAGIC_CODEBOOK)?;
        let dim = r.u32()? as usize;
        let vocab = r.u32()? as usize;
        let count = r.u64()? as usize;
        if dim == 0 {
            return Err(r.header_err("dim is zero"));
        }
        let expected = 12 + 16 + (count * dim * 4) as u64 + (vocab * 12) as u64;
        if bytes.len() as u64 != expected {
            return Err(Error::SizeMismatch {
                path: path.to_path_buf(),
                expected,
                actual: bytes.len() as u64,
            });
        }
        let centroids = r.f32s(count * dim)?;
        let mut ranges = Vec::with_capacity(vocab);
        for _ in 0..vocab {
            ranges.push((r.u64()?, r.u32()?));
        }
        r.expect_end()?;
        TokenPartitionedCodebook::from_parts(dim, centroids, ranges)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        format::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        TokenPartitionedCodebook::from_bytes(&format::read_file(path)?, path)
    }
}

/// Per-vector centroid ids and residual norms.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub centroid_ids: Vec<u32>,
    pub residual_norms: Vec<f32>,
}

impl Assignment {
    pub fn len(&self) -> usize {
        self.centroid_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroid_ids.is_empty()
    }

    /// Sum of squared residual norms.
    pub fn inertia(&self) -> f64 {
        self.residual_norms
            .iter()
            .map(|r| f64::from(*r) * f64::from(*r))
            .sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_header(format::MAGIC_ASSIGNMENT);
        w.u64(self.len() as u64);
        w.u32s(&self.centroid_ids);
        w.f32s(&self.residual_norms);
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = ByteReader::with_header(bytes, path, format::MAGIC_ASSIGNMENT)?;
        let n = r.u64()? as usize;
        let expected = 20 + (n * 8) as u64;
        if bytes.len() as u64 != expected {
            return Err(Error::SizeMismatch {
                path: path.to_path_buf(),
                expected,
                actual: bytes.len() as u64,
            });
        }
        let centroid_ids = r.u32s(n)?;
        let residual_norms = r.f32s(n)?;
        Ok(Assignment {
            centroid_ids,
            residual_norms,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        format::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Assignment::from_bytes(&format::read_file(path)?, path)
    }
}

pub(crate) fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))
}

fn gather_rows(corpus: &TokenVectorCorpus, rows: &[u32]) -> Vec<f32> {
    let mut out = Vec::with_capacity(rows.len() * corpus.dim());
    for &r in rows {
        out.extend_from_slice(corpus.vector(r as usize));
    }
    out
}

fn sample_rows(rows: &[u32], cap: usize, seed: u64) -> Vec<u32> {
    if rows.len() <= cap {
        return rows.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = rand::seq::index::sample(&mut rng, rows.len(), cap).into_vec();
    picks.sort_unstable();
    picks.into_iter().map(|i| rows[i]).collect()
}

/// k-means on the occurrences of a single token, returning unit-norm
/// centroids and the number of distance evaluations spent.
pub fn cluster_token(
    vectors: &[f32],
    dim: usize,
    k: usize,
    iterations: usize,
    seed: u64,
) -> Result<(Vec<f32>, u64)> {
    let n = vectors.len() / dim;
    if k == 0 || k > n {
        return Err(Error::Precondition(format!(
            "cannot build {k} centroids from {n} occurrences"
        )));
    }
    if k == 1 {
        let mut mean = mean_row(vectors, dim);
        kernels::normalize(&mut mean);
        return Ok((mean, 0));
    }
    let r = lloyd(
        vectors,
        dim,
        &LloydConfig {
            k,
            iterations,
            seed,
            normalize: true,
        },
    )?;
    Ok((r.centroids, r.distance_evals))
}

/// Independent per-token clustering following `plan`, run in parallel over
/// tokens. Each token's seed depends only on `cfg.seed` and its id, so the
/// result does not depend on the thread count.
pub fn train(
    corpus: &TokenVectorCorpus,
    plan: &AllocationPlan,
    cfg: &TrainConfig,
) -> Result<(TokenPartitionedCodebook, ClusterStats)> {
    let start = Instant::now();
    let index = corpus.token_index();
    let dim = corpus.dim();
    let pool = thread_pool(cfg.threads)?;
    let results: Vec<(Vec<f32>, u64)> = pool.install(|| {
        plan.entries
            .par_iter()
            .map(|e| {
                let rows = index.rows_of(e.token_id);
                let k = e.centroids as usize;
                let seed = token_seed(cfg.seed, e.token_id);
                let cap = k.saturating_mul(cfg.samples_per_centroid).max(k);
                let train_rows = if k == 1 { rows.to_vec() } else { sample_rows(rows, cap, seed) };
                let pts = gather_rows(corpus, &train_rows);
                cluster_token(&pts, dim, k, cfg.iterations, seed).map_err(|source| Error::TokenClustering {
                    token: e.token_id,
                    source: Box::new(source),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut ranges = vec![(0u64, 0u32); corpus.vocab_size() as usize];
    let total: usize = plan.entries.iter().map(|e| e.centroids as usize).sum();
    let mut centroids = Vec::with_capacity(total * dim);
    let mut evals = 0u64;
    for (e, (cents, ev)) in plan.entries.iter().zip(results) {
        let offset = (centroids.len() / dim) as u64;
        if (e.token_id as usize) < ranges.len() {
            ranges[e.token_id as usize] = (offset, e.centroids as u32);
        }
        centroids.extend_from_slice(&cents);
        evals += ev;
    }
    let codebook = TokenPartitionedCodebook::from_parts(dim, centroids, ranges)?;
    let stats = ClusterStats {
        distance_evals: evals,
        wall: start.elapsed(),
    };
    log::info!(
        "trained {} centroids for {} tokens in {:.3}s",
        codebook.len(),
        plan.entries.len(),
        stats.wall.as_secs_f64()
    );
    Ok((codebook, stats))
}

fn assign_group(
    corpus: &TokenVectorCorpus,
    rows: &[u32],
    cents: &[f32],
    offset: u32,
) -> (Vec<u32>, Vec<f32>) {
    let dim = corpus.dim();
    let pts = gather_rows(corpus, rows);
    let n = rows.len();
    let mut ids = vec![0u32; n];
    let mut approx = vec![0f32; n];
    if cents.len() == dim {
        ids.fill(0);
    } else {
        CentroidBlocks::new(cents, dim).nearest_batch(&pts, &mut ids, &mut approx);
    }
    let norms = ids
        .iter()
        .zip(pts.chunks_exact(dim))
        .map(|(&c, p)| {
            let c = c as usize;
            kernels::l2_sq_f64(p, &cents[c * dim..(c + 1) * dim]).sqrt() as f32
        })
        .collect();
    (ids.into_iter().map(|c| c + offset).collect(), norms)
}

/// Assigns every corpus vector to the nearest centroid of its own token.
pub fn assign(
    corpus: &TokenVectorCorpus,
    codebook: &TokenPartitionedCodebook,
    threads: usize,
) -> Result<(Assignment, ClusterStats)> {
    let start = Instant::now();
    if codebook.dim() != corpus.dim() {
        return Err(Error::DimensionMismatch {
            expected: corpus.dim(),
            actual: codebook.dim(),
        });
    }
    let index = corpus.token_index();
    let dim = corpus.dim();
    let tokens: Vec<u32> = (0..corpus.vocab_size())
        .filter(|&t| corpus.histogram()[t as usize] > 0)
        .collect();
    for &t in &tokens {
        if codebook.range(t).is_empty() {
            return Err(Error::TokenMissingFromCodebook { token: t });
        }
    }
    let pool = thread_pool(threads)?;
    let groups: Vec<(Vec<u32>, Vec<f32>)> = pool.install(|| {
        tokens
            .par_iter()
            .map(|&t| {
                let range = codebook.range(t);
                let cents = &codebook.centroids()[range.start * dim..range.end * dim];
                assign_group(corpus, index.rows_of(t), cents, range.start as u32)
            })
            .collect()
    });
    let n = corpus.num_vectors();
    let mut centroid_ids = vec![0u32; n];
    let mut residual_norms = vec![0f32; n];
    let mut evals = 0u64;
    for (&t, (ids, norms)) in tokens.iter().zip(groups) {
        let rows = index.rows_of(t);
        evals += (rows.len() * codebook.range(t).len()) as u64;
        for ((&r, id), rho) in rows.iter().zip(ids).zip(norms) {
            centroid_ids[r as usize] = id;
            residual_norms[r as usize] = rho;
        }
    }
    Ok((
        Assignment {
            centroid_ids,
            residual_norms,
        },
        ClusterStats {
            distance_evals: evals,
            wall: start.elapsed(),
        },
    ))
}

/// Result of the token-agnostic comparison baseline.
#[derive(Debug, Clone)]
pub struct BaselineResult {
    /// `k x dim`, unit-norm rows.
    pub centroids: Vec<f32>,
    pub assignment: Assignment,
    pub train: ClusterStats,
    pub assign: ClusterStats,
}

/// Global k-means over a uniform sample of `min(N, samples_per_centroid * k)`
/// corpus vectors, ignoring token identity, then a full-corpus assignment.
pub fn baseline_kmeans(corpus: &TokenVectorCorpus, k: usize, cfg: &TrainConfig) -> Result<BaselineResult> {
    let start = Instant::now();
    let dim = corpus.dim();
    let all: Vec<u32> = (0..corpus.num_vectors() as u32).collect();
    let rows = sample_rows(&all, k.saturating_mul(cfg.samples_per_centroid).max(k), cfg.seed);
    let pts = gather_rows(corpus, &rows);
    let r = lloyd(
        &pts,
        dim,
        &LloydConfig {
            k,
            iterations: cfg.iterations,
            seed: cfg.seed,
            normalize: true,
        },
    )?;
    let train = ClusterStats {
        distance_evals: r.distance_evals,
        wall: start.elapsed(),
    };

    let start = Instant::now();
    let blocks = CentroidBlocks::new(&r.centroids, dim);
    let pool = thread_pool(cfg.threads)?;
    const CHUNK: usize = 4096;
    let parts: Vec<(Vec<u32>, Vec<f32>)> = pool.install(|| {
        corpus
            .vectors()
            .par_chunks(CHUNK * dim)
            .map(|chunk| {
                let m = chunk.len() / dim;
                let mut ids = vec![0u32; m];
                let mut approx = vec![0f32; m];
                blocks.nearest_batch(chunk, &mut ids, &mut approx);
                let norms = ids
                    .iter()
                    .zip(chunk.chunks_exact(dim))
                    .map(|(&c, p)| {
                        let c = c as usize;
                        kernels::l2_sq_f64(p, &r.centroids[c * dim..(c + 1) * dim]).sqrt() as f32
                    })
                    .collect();
                (ids, norms)
            })
            .collect()
    });
    let mut assignment = Assignment {
        centroid_ids: Vec::with_capacity(corpus.num_vectors()),
        residual_norms: Vec::with_capacity(corpus.num_vectors()),
    };
    for (ids, norms) in parts {
        assignment.centroid_ids.extend(ids);
        assignment.residual_norms.extend(norms);
    }
    let assign = ClusterStats {
        distance_evals: (corpus.num_vectors() * k) as u64,
        wall: start.elapsed(),
    };
    Ok(BaselineResult {
        centroids: r.centroids,
        assignment,
        train,
        assign,
    })
}
