use std::time::Instant;

use rustc_hash::FxHashMap;

use super::index::SearchIndex;
use crate::corpus::TokenVectorCorpus;
use crate::error::{Error, Result};
use crate::kernels;
use crate::pq::{centroid_scores_into, score_tokens_into, DistanceTables};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchParams {
    /// Centroids retrieved per query token.
    pub centroids_per_token: usize,
    /// Cap on candidates kept after gathering.
    pub max_candidates: usize,
    /// Candidates scoring below `prune_ratio` times the best partial score are dropped.
    pub prune_ratio: f32,
    pub ef_search: usize,
    pub k: usize,
}

impl SearchParams {
    /// Parameters with `ef_search` set to 1.5 times the centroid count.
    pub fn new(centroids_per_token: usize, max_candidates: usize, prune_ratio: f32, k: usize) -> Self {
        SearchParams {
            centroids_per_token,
            max_candidates,
            prune_ratio,
            ef_search: default_ef(centroids_per_token),
            k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.centroids_per_token == 0 {
            return Err(Error::Config("centroids per token must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.max_candidates < self.k {
            return Err(Error::Config(format!(
                "candidate cap {} is below k = {}",
                self.max_candidates, self.k
            )));
        }
        if !(self.prune_ratio > 0.0 && self.prune_ratio <= 1.0) {
            return Err(Error::Config(format!("prune ratio must be in (0, 1], got {}", self.prune_ratio)));
        }
        if self.ef_search < self.centroids_per_token {
            return Err(Error::Config(format!(
                "ef_search {} is below centroids per token {}",
                self.ef_search, self.centroids_per_token
            )));
        }
        Ok(())
    }
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams::new(40, 1000, 0.35, 10)
    }
}

pub fn default_ef(centroids_per_token: usize) -> usize {
    centroids_per_token * 3 / 2
}

/// Partial centroid-level scores of gathered documents.
#[derive(Debug, Clone, Default)]
pub struct CandidateSet {
    scores: FxHashMap<u32, f32>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn get(&self, doc: u32) -> Option<f32> {
        self.scores.get(&doc).copied()
    }

    /// `(doc, score)` pairs ordered by document id.
    pub fn sorted_by_doc(&self) -> Vec<(u32, f32)> {
        let mut v: Vec<(u32, f32)> = self.scores.iter().map(|(&d, &s)| (d, s)).collect();
        v.sort_unstable_by_key(|p| p.0);
        v
    }
}

impl FromIterator<(u32, f32)> for CandidateSet {
    /// Later pairs overwrite earlier ones for the same document.
    fn from_iter<I: IntoIterator<Item = (u32, f32)>>(iter: I) -> Self {
        CandidateSet {
            scores: iter.into_iter().collect(),
        }
    }
}

/// Orders by score descending, then document id ascending.
pub fn rank_order(a: &(u32, f32), b: &(u32, f32)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Centroid-only scoring: per query token, each document hit by one of the
/// retrieved centroids contributes its best centroid score; contributions
/// are summed over query tokens.
pub fn gather(index: &SearchIndex, query: &[f32], params: &SearchParams) -> CandidateSet {
    let dim = index.dim();
    let centroids = index.codebook().centroids();
    // doc -> (partial sum, last query token that contributed)
    let mut acc: FxHashMap<u32, (f32, u32)> = FxHashMap::default();
    for (i, q) in query.chunks_exact(dim).enumerate() {
        let top = index
            .graph()
            .search(centroids, q, params.centroids_per_token, params.ef_search);
        // best first, so the first hit of a document is its maximum
        for s in top {
            for &d in index.lists().list(s.id) {
                let e = acc.entry(d).or_insert((0.0, u32::MAX));
                if e.1 != i as u32 {
                    e.0 += s.score;
                    e.1 = i as u32;
                }
            }
        }
    }
    CandidateSet {
        scores: acc.into_iter().map(|(d, (s, _))| (d, s)).collect(),
    }
}

/// Keeps the `max_candidates` best partial scores, then drops documents
/// below `prune_ratio` times the best. Pruning is skipped when the best
/// partial score is not positive.
pub fn truncate_and_prune(candidates: &CandidateSet, max_candidates: usize, prune_ratio: f32) -> Vec<(u32, f32)> {
    let mut v: Vec<(u32, f32)> = candidates.scores.iter().map(|(&d, &s)| (d, s)).collect();
    if v.len() > max_candidates && max_candidates > 0 {
        v.select_nth_unstable_by(max_candidates - 1, rank_order);
    }
    v.truncate(max_candidates);
    v.sort_unstable_by(rank_order);
    if let Some(&(_, best)) = v.first() {
        if best > 0.0 {
            let threshold = prune_ratio * best;
            v.retain(|&(_, s)| s >= threshold);
        }
    }
    v
}

/// Reusable buffers for refinement.
#[derive(Debug, Default)]
pub struct Scratch {
    scores: Vec<f32>,
    acc: Vec<f32>,
}

/// Approximate MaxSim of one document from its compressed record.
pub fn refine_doc(
    index: &SearchIndex,
    query: &[f32],
    tables: &DistanceTables,
    doc: u32,
    scratch: &mut Scratch,
) -> Result<f32> {
    let record = index.compressed().record(doc as usize)?;
    let n_q = tables.n_q();
    let n_d = record.len();
    if n_d == 0 {
        return Err(Error::CorruptRecord {
            doc: doc as usize,
            reason: "record has no tokens".into(),
        });
    }
    if let Some(&c) = record.centroid_ids.iter().find(|&&c| c as usize >= index.codebook().len()) {
        return Err(Error::CorruptRecord {
            doc: doc as usize,
            reason: format!("centroid id {c} outside the codebook"),
        });
    }
    centroid_scores_into(query, index.dim(), &record, index.codebook().centroids(), &mut scratch.scores);
    score_tokens_into(doc as usize, &record, tables, &mut scratch.scores, &mut scratch.acc)?;
    let mut total = 0f32;
    for i in 0..n_q {
        let row = &scratch.scores[i * n_d..(i + 1) * n_d];
        total += row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    }
    Ok(total)
}

/// Rescores candidates with centroids plus compressed residuals and returns
/// the best `k`.
pub fn refine(index: &SearchIndex, query: &[f32], candidates: &[(u32, f32)], k: usize) -> Result<Vec<(u32, f32)>> {
    let tables = DistanceTables::build(query, index.codec());
    let mut scratch = Scratch::default();
    let mut out = Vec::with_capacity(candidates.len());
    for &(d, _) in candidates {
        out.push((d, refine_doc(index, query, &tables, d, &mut scratch)?));
    }
    out.sort_unstable_by(rank_order);
    out.truncate(k);
    Ok(out)
}

/// Per-phase wall time in microseconds and candidate counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PhaseTiming {
    pub gather_us: u64,
    pub prune_us: u64,
    pub refine_us: u64,
    pub total_us: u64,
    pub after_gather: usize,
    pub after_prune: usize,
}

impl PhaseTiming {
    pub const CSV_HEADER: &'static str =
        "query_id,gather_us,prune_us,refine_us,total_us,candidates_after_gather,candidates_after_prune";

    pub fn csv_row(&self, query_id: &str) -> String {
        format!(
            "{query_id},{},{},{},{},{},{}",
            self.gather_us, self.prune_us, self.refine_us, self.total_us, self.after_gather, self.after_prune
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    /// `(doc, score)`, best first.
    pub hits: Vec<(u32, f32)>,
    pub timing: PhaseTiming,
}

/// Gather, prune and refine for one query on the calling thread.
pub fn search(index: &SearchIndex, query: &[f32], params: &SearchParams) -> Result<SearchResult> {
    if query.is_empty() || !query.len().is_multiple_of(index.dim()) {
        return Err(Error::DimensionMismatch {
            expected: index.dim(),
            actual: query.len(),
        });
    }
    let t0 = Instant::now();
    let cands = gather(index, query, params);
    let t1 = Instant::now();
    let pruned = truncate_and_prune(&cands, params.max_candidates, params.prune_ratio);
    let t2 = Instant::now();
    let hits = refine(index, query, &pruned, params.k)?;
    let t3 = Instant::now();
    let us = |a: Instant, b: Instant| (b - a).as_micros() as u64;
    Ok(SearchResult {
        hits,
        timing: PhaseTiming {
            gather_us: us(t0, t1),
            prune_us: us(t1, t2),
            refine_us: us(t2, t3),
            total_us: us(t0, t3),
            after_gather: cands.len(),
            after_prune: pruned.len(),
        },
    })
}

/// Exact MaxSim of one document against an uncompressed query.
pub fn maxsim(query: &[f32], doc: &[f32], dim: usize) -> f32 {
    query
        .chunks_exact(dim)
        .map(|q| {
            doc.chunks_exact(dim)
                .map(|t| kernels::dot(q, t))
                .fold(f32::NEG_INFINITY, f32::max)
        })
        .sum()
}

/// Exact MaxSim ranking over the whole corpus, or over `candidates` only
/// when given. Returns the best `k`.
pub fn exhaustive_maxsim(
    corpus: &TokenVectorCorpus,
    query: &[f32],
    k: usize,
    candidates: Option<&[u32]>,
) -> Vec<(u32, f32)> {
    let dim = corpus.dim();
    let score = |d: u32| (d, maxsim(query, corpus.doc_vectors(d as usize), dim));
    let mut out: Vec<(u32, f32)> = match candidates {
        Some(c) => c.iter().copied().filter(|&d| (d as usize) < corpus.num_docs()).map(score).collect(),
        None => (0..corpus.num_docs() as u32).map(score).collect(),
    };
    out.sort_unstable_by(rank_order);
    out.truncate(k);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pairs: &[(u32, f32)]) -> CandidateSet {
        CandidateSet {
            scores: pairs.iter().copied().collect(),
        }
    }

    #[test]
    fn truncate_then_prune_by_hand() {
        let c = set(&[(0, 10.0), (1, 6.0), (2, 4.0), (3, 3.0)]);
        assert_eq!(truncate_and_prune(&c, 3, 0.5), vec![(0, 10.0), (1, 6.0)]);
    }

    #[test]
    fn ratio_one_keeps_ties_with_best() {
        let c = set(&[(4, 2.0), (1, 2.0), (2, 1.9)]);
        assert_eq!(truncate_and_prune(&c, 10, 1.0), vec![(1, 2.0), (4, 2.0)]);
    }

    #[test]
    fn tiny_ratio_is_plain_truncation() {
        let c = set(&[(0, 5.0), (1, 0.01), (2, 3.0), (3, 0.02)]);
        assert_eq!(truncate_and_prune(&c, 3, 1e-6), vec![(0, 5.0), (2, 3.0), (3, 0.02)]);
    }

    #[test]
    fn boundary_ties_resolve_by_doc_id() {
        let c = set(&[(9, 1.0), (3, 1.0), (5, 1.0)]);
        assert_eq!(truncate_and_prune(&c, 2, 0.5), vec![(3, 1.0), (5, 1.0)]);
    }

    #[test]
    fn non_positive_best_skips_pruning() {
        let c = set(&[(0, -1.0), (1, -3.0)]);
        assert_eq!(truncate_and_prune(&c, 5, 0.9), vec![(0, -1.0), (1, -3.0)]);
    }

    #[test]
    fn empty_candidates_stay_empty() {
        assert!(truncate_and_prune(&CandidateSet::default(), 5, 0.5).is_empty());
    }

    #[test]
    fn maxsim_ignores_token_order() {
        let q = [1.0f32, 0.0, 0.0, 1.0];
        let d1 = [0.6f32, 0.8, 1.0, 0.0];
        let d2 = [1.0f32, 0.0, 0.6, 0.8];
        assert_eq!(maxsim(&q, &d1, 2), maxsim(&q, &d2, 2));
        assert!((maxsim(&q, &d1, 2) - 1.8).abs() < 1e-6);
    }

    #[test]
    fn params_validation() {
        assert!(SearchParams::default().validate().is_ok());
        assert_eq!(SearchParams::new(40, 100, 0.5, 10).ef_search, 60);
        let mut p = SearchParams::default();
        p.max_candidates = 5;
        assert!(p.validate().is_err());
        p = SearchParams::default();
        p.prune_ratio = 0.0;
        assert!(p.validate().is_err());
        p = SearchParams::default();
        p.ef_search = 1;
        assert!(p.validate().is_err());
    }
}
