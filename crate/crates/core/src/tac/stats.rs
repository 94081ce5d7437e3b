use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::token_seed;
use crate::corpus::TokenVectorCorpus;
use crate::error::{Error, Result};

/// Default per-token cap on occurrences used to estimate mean and spread.
pub const DEFAULT_STATS_SAMPLE_CAP: usize = 1 << 18;

const STATS_SEED: u64 = 0x5eed_57a7;

/// Per-token frequency, mean embedding and semantic spread.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenStats {
    pub token_id: u32,
    /// Exact occurrence count.
    pub count: u64,
    pub mean: Vec<f32>,
    /// Mean squared distance of the occurrences to their mean.
    pub spread: f32,
    /// `sqrt(count) * spread`.
    pub weight: f64,
}

impl TokenStats {
    /// Stats from a known count and spread, without a mean vector.
    pub fn from_parts(token_id: u32, count: u64, spread: f32) -> Self {
        TokenStats {
            token_id,
            count,
            mean: Vec::new(),
            spread,
            weight: damped_weight(count, spread),
        }
    }
}

pub fn damped_weight(count: u64, spread: f32) -> f64 {
    (count as f64).sqrt() * f64::from(spread)
}

/// One [`TokenStats`] per token present in the corpus, ordered by token id.
///
/// Tokens with more than `sample_cap` occurrences have their mean and spread
/// estimated on a uniform sample; the count is always exact.
pub fn compute_token_stats(corpus: &TokenVectorCorpus, sample_cap: usize) -> Vec<TokenStats> {
    assert!(sample_cap >= 1, "sample_cap must be positive");
    let index = corpus.token_index();
    let dim = corpus.dim();
    let tokens: Vec<u32> = (0..corpus.vocab_size())
        .filter(|&t| corpus.histogram()[t as usize] > 0)
        .collect();
    tokens
        .par_iter()
        .map(|&t| {
            let rows = index.rows_of(t);
            let sampled: Vec<u32>;
            let used: &[u32] = if rows.len() > sample_cap {
                let mut rng = ChaCha8Rng::seed_from_u64(token_seed(STATS_SEED, t));
                let mut picks = rand::seq::index::sample(&mut rng, rows.len(), sample_cap).into_vec();
                picks.sort_unstable();
                sampled = picks.into_iter().map(|i| rows[i]).collect();
                &sampled
            } else {
                rows
            };
            let (mean, spread) = mean_and_spread(used.iter().map(|&r| corpus.vector(r as usize)), dim);
            TokenStats {
                token_id: t,
                count: rows.len() as u64,
                mean,
                spread,
                weight: damped_weight(rows.len() as u64, spread),
            }
        })
        .collect()
}

/// Mean and mean squared deviation, accumulated in f64 (two passes).
pub fn mean_and_spread<'a, I>(rows: I, dim: usize) -> (Vec<f32>, f32)
where
    I: Iterator<Item = &'a [f32]> + Clone,
{
    let mut sum = vec![0.0f64; dim];
    let mut n = 0usize;
    for row in rows.clone() {
        for (s, v) in sum.iter_mut().zip(row) {
            *s += f64::from(*v);
        }
        n += 1;
    }
    if n == 0 {
        return (vec![0.0; dim], 0.0);
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    let mut sq = 0.0f64;
    for row in rows {
        for (m, v) in mean.iter().zip(row) {
            let d = f64::from(*v) - m;
            sq += d * d;
        }
    }
    (mean.iter().map(|m| *m as f32).collect(), (sq / n as f64) as f32)
}

/// Lower bound on the TAC-over-k-means speedup: total weight over the
/// largest single token weight.
pub fn speedup_lower_bound(stats: &[TokenStats]) -> Result<f64> {
    let total: f64 = stats.iter().map(|s| s.weight).sum();
    let max = stats.iter().map(|s| s.weight).fold(0.0f64, f64::max);
    if max <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    Ok(total / max)
}

/// Real-valued proportional allocation `w_j / sum(w) * budget`, with no
/// tail handling, floors or bounds.
pub fn proportional_allocation(weights: &[f64], budget: f64) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total * budget).collect()
}

/// Ratio of global k-means cost to per-token cost, `budget * N / sum(k_j * n_j)`.
pub fn cost_ratio(counts: &[u64], centroids: &[f64], budget: f64) -> f64 {
    let n: f64 = counts.iter().map(|&c| c as f64).sum();
    let per_token: f64 = counts.iter().zip(centroids).map(|(&c, k)| c as f64 * k).sum();
    budget * n / per_token
}
