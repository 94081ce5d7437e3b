//! Latency benchmark: repeated single-threaded searches plus an A/B timing
//! of residual scoring under the two distance-table layouts.

use std::fmt::Write as _;
use std::time::Instant;

use crate::corpus::QuerySet;
use crate::engine::{self, SearchIndex, SearchParams};
use crate::error::Result;
use crate::pq::{centroid_scores_into, score_tokens_into, score_tokens_naive_into, DistanceTables, NaiveTables};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub p99: f64,
}

pub fn summarize(values: &[u64]) -> Summary {
    if values.is_empty() {
        return Summary::default();
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let pick = |q: f64| v[((q * (v.len() - 1) as f64).round() as usize).min(v.len() - 1)] as f64;
    Summary {
        mean: v.iter().sum::<u64>() as f64 / v.len() as f64,
        median: pick(0.5),
        p99: pick(0.99),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub warmup: usize,
    pub repeats: usize,
    pub queries: usize,
    pub gather: Summary,
    pub prune: Summary,
    pub refine: Summary,
    pub total: Summary,
    pub mean_after_gather: f64,
    pub mean_after_prune: f64,
    /// Query-token by document-token scores computed during refinement.
    pub token_pairs: u64,
    /// Table reads during refinement, `token_pairs * subspaces`.
    pub table_lookups: u64,
    pub mean_query_tokens: f64,
    pub naive_us: f64,
    pub optimized_us: f64,
}

impl BenchReport {
    /// Naive over optimized residual-scoring time.
    pub fn layout_ratio(&self) -> f64 {
        if self.optimized_us > 0.0 {
            self.naive_us / self.optimized_us
        } else {
            f64::NAN
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "bench\tqueries={} warmup={} repeats={}", self.queries, self.warmup, self.repeats);
        let _ = writeln!(out, "phase\tmean_us\tmedian_us\tp99_us");
        for (name, s) in [("gather", self.gather), ("prune", self.prune), ("refine", self.refine), ("total", self.total)] {
            let _ = writeln!(out, "{name}\t{:.1}\t{:.1}\t{:.1}", s.mean, s.median, s.p99);
        }
        let _ = writeln!(out, "candidates_after_gather\t{:.1}", self.mean_after_gather);
        let _ = writeln!(out, "candidates_after_prune\t{:.1}", self.mean_after_prune);
        let _ = writeln!(out, "token_pairs_per_query\t{}", self.token_pairs);
        let _ = writeln!(out, "table_lookups_per_query\t{}", self.table_lookups);
        let _ = writeln!(out, "mean_query_tokens\t{:.2}", self.mean_query_tokens);
        let _ = writeln!(out, "residual_scoring_naive_us\t{:.1}", self.naive_us);
        let _ = writeln!(out, "residual_scoring_optimized_us\t{:.1}", self.optimized_us);
        let _ = writeln!(out, "layout_ratio\t{:.3}", self.layout_ratio());
        out
    }
}

/// Residual scoring time of every query's pruned candidates under both
/// layouts, best of `repeats`, in microseconds summed over queries.
pub fn layout_ab(index: &SearchIndex, queries: &QuerySet, params: &SearchParams, repeats: usize) -> Result<(f64, f64)> {
    let dim = index.dim();
    let (mut naive_total, mut opt_total) = (0f64, 0f64);
    let mut base = Vec::new();
    let mut scores = Vec::new();
    let mut acc = Vec::new();
    for q in queries.iter() {
        let cands = engine::truncate_and_prune(&engine::gather(index, q.vectors, params), params.max_candidates, params.prune_ratio);
        let records: Vec<_> = cands
            .iter()
            .map(|&(d, _)| index.compressed().record(d as usize).map(|r| (d, r)))
            .collect::<Result<_>>()?;
        let mut bases = Vec::with_capacity(records.len());
        for (_, r) in &records {
            centroid_scores_into(q.vectors, dim, r, index.codebook().centroids(), &mut base);
            bases.push(base.clone());
        }
        let opt_tables = DistanceTables::build(q.vectors, index.codec());
        let naive_tables = NaiveTables::build(q.vectors, index.codec());
        let (mut best_naive, mut best_opt) = (f64::INFINITY, f64::INFINITY);
        for _ in 0..repeats.max(1) {
            let t = Instant::now();
            for ((d, r), b) in records.iter().zip(&bases) {
                scores.clone_from(b);
                score_tokens_into(*d as usize, r, &opt_tables, &mut scores, &mut acc)?;
                std::hint::black_box(&scores);
            }
            best_opt = best_opt.min(t.elapsed().as_secs_f64() * 1e6);
            let t = Instant::now();
            for ((d, r), b) in records.iter().zip(&bases) {
                scores.clone_from(b);
                score_tokens_naive_into(*d as usize, r, &naive_tables, &mut scores)?;
                std::hint::black_box(&scores);
            }
            best_naive = best_naive.min(t.elapsed().as_secs_f64() * 1e6);
        }
        naive_total += best_naive;
        opt_total += best_opt;
    }
    Ok((naive_total, opt_total))
}

/// Runs every query `warmup + repeats` times on the calling thread; only
/// the last `repeats` passes enter the statistics.
pub fn run_bench(
    index: &SearchIndex,
    queries: &QuerySet,
    params: &SearchParams,
    warmup: usize,
    repeats: usize,
) -> Result<BenchReport> {
    params.validate()?;
    let repeats = repeats.max(1);
    let mut phases: [Vec<u64>; 4] = Default::default();
    let (mut gathered, mut pruned, mut pairs) = (0u64, 0u64, 0u64);
    for pass in 0..warmup + repeats {
        for q in queries.iter() {
            let r = engine::search(index, q.vectors, params)?;
            if pass < warmup {
                continue;
            }
            let t = r.timing;
            phases[0].push(t.gather_us);
            phases[1].push(t.prune_us);
            phases[2].push(t.refine_us);
            phases[3].push(t.total_us);
            if pass == warmup {
                gathered += t.after_gather as u64;
                pruned += t.after_prune as u64;
                let cands =
                    engine::truncate_and_prune(&engine::gather(index, q.vectors, params), params.max_candidates, params.prune_ratio);
                for (d, _) in cands {
                    pairs += (q.len() * index.compressed().doc_len(d as usize)) as u64;
                }
            }
        }
    }
    let (naive_us, optimized_us) = layout_ab(index, queries, params, repeats)?;
    let nq = queries.len().max(1) as f64;
    Ok(BenchReport {
        warmup,
        repeats,
        queries: queries.len(),
        gather: summarize(&phases[0]),
        prune: summarize(&phases[1]),
        refine: summarize(&phases[2]),
        total: summarize(&phases[3]),
        mean_after_gather: gathered as f64 / nq,
        mean_after_prune: pruned as f64 / nq,
        token_pairs: (pairs as f64 / nq).round() as u64,
        table_lookups: (pairs as f64 / nq * index.codec().subspaces() as f64).round() as u64,
        mean_query_tokens: queries.iter().map(|q| q.len()).sum::<usize>() as f64 / nq,
        naive_us,
        optimized_us,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        let s = summarize(&[5, 1, 3, 2, 4]);
        assert_eq!(s.mean, 3.0);
        assert_eq!(s.median, 3.0);
        assert_eq!(s.p99, 5.0);
        assert_eq!(summarize(&[]), Summary::default());
    }
}
