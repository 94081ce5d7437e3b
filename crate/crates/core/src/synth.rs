//! Seeded synthetic corpora: Zipfian token frequencies, each token a small
//! Gaussian mixture on the unit sphere, and queries planted from documents.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Zipf};

use crate::corpus::{NormPolicy, QuerySet, Qrels, TokenVectorCorpus};
use crate::error::{Error, Result};
use crate::kernels;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_docs: usize,
    pub dim: usize,
    pub vocab_size: u32,
    pub zipf_exponent: f64,
    pub min_doc_len: usize,
    pub max_doc_len: usize,
    /// Each token gets between 1 and this many mixture modes.
    pub max_modes: usize,
    /// Scale of mode offsets around the token's base direction.
    pub mode_spread: f32,
    /// Per-occurrence noise scale; each token draws a multiplier in [0.5, 1.5).
    pub noise: f32,
    pub num_queries: usize,
    pub query_len: usize,
    pub query_noise: f32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_docs: 2000,
            dim: 32,
            vocab_size: 2000,
            zipf_exponent: 1.0,
            min_doc_len: 16,
            max_doc_len: 48,
            max_modes: 4,
            mode_spread: 0.6,
            noise: 0.25,
            num_queries: 100,
            query_len: 16,
            query_noise: 0.15,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.num_docs == 0 || self.dim == 0 || self.vocab_size == 0 {
            return bad("documents, dimension and vocabulary must be positive");
        }
        if self.min_doc_len == 0 || self.max_doc_len < self.min_doc_len {
            return bad("document lengths must satisfy 1 <= min <= max");
        }
        if self.max_modes == 0 {
            return bad("tokens need at least one mode");
        }
        if !(self.zipf_exponent > 0.0) {
            return bad("zipf exponent must be positive");
        }
        if self.num_queries > 0 && self.query_len == 0 {
            return bad("query length must be positive");
        }
        Ok(())
    }
}

/// A generated corpus with planted queries and their relevance labels.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub corpus: TokenVectorCorpus,
    pub queries: QuerySet,
    pub qrels: Qrels,
}

fn gaussian(rng: &mut ChaCha8Rng, out: &mut [f32], scale: f32) {
    for x in out.iter_mut() {
        let g: f32 = StandardNormal.sample(rng);
        *x += scale * g;
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let dim = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut modes: Vec<Vec<f32>> = Vec::with_capacity(cfg.vocab_size as usize);
    let mut noise = Vec::with_capacity(cfg.vocab_size as usize);
    for _ in 0..cfg.vocab_size {
        let mut base = vec![0f32; dim];
        gaussian(&mut rng, &mut base, 1.0);
        kernels::normalize(&mut base);
        let count = rng.gen_range(1..=cfg.max_modes);
        let mut token_modes = Vec::with_capacity(count * dim);
        for _ in 0..count {
            let mut m = base.clone();
            gaussian(&mut rng, &mut m, cfg.mode_spread / (dim as f32).sqrt());
            kernels::normalize(&mut m);
            token_modes.extend_from_slice(&m);
        }
        modes.push(token_modes);
        noise.push(cfg.noise * rng.gen_range(0.5f32..1.5) / (dim as f32).sqrt());
    }

    let zipf = Zipf::new(u64::from(cfg.vocab_size), cfg.zipf_exponent)
        .map_err(|e| Error::Config(format!("zipf distribution: {e}")))?;
    let mut vectors = Vec::new();
    let mut tokens = Vec::new();
    let mut offsets = vec![0u64];
    let mut v = vec![0f32; dim];
    for _ in 0..cfg.num_docs {
        let len = rng.gen_range(cfg.min_doc_len..=cfg.max_doc_len);
        for _ in 0..len {
            let t = (zipf.sample(&mut rng) as u32 - 1).min(cfg.vocab_size - 1);
            let tm = &modes[t as usize];
            let m = rng.gen_range(0..tm.len() / dim);
            v.copy_from_slice(&tm[m * dim..(m + 1) * dim]);
            gaussian(&mut rng, &mut v, noise[t as usize]);
            kernels::normalize(&mut v);
            vectors.extend_from_slice(&v);
            tokens.push(t);
        }
        offsets.push(tokens.len() as u64);
    }
    let doc_ids: Vec<String> = (0..cfg.num_docs).map(|d| format!("d{d}")).collect();
    let corpus = TokenVectorCorpus::new(dim, cfg.vocab_size, vectors, tokens, offsets, NormPolicy::Renormalize)?
        .with_doc_ids(doc_ids.clone())?;

    let mut qvecs = Vec::new();
    let mut qoffsets = vec![0u64];
    let mut qids = Vec::new();
    let mut qrels = Qrels::default();
    for q in 0..cfg.num_queries {
        let d = rng.gen_range(0..cfg.num_docs);
        let rows = corpus.doc_rows(d);
        for _ in 0..cfg.query_len {
            let r = rng.gen_range(rows.clone());
            v.copy_from_slice(corpus.vector(r));
            gaussian(&mut rng, &mut v, cfg.query_noise / (dim as f32).sqrt());
            kernels::normalize(&mut v);
            qvecs.extend_from_slice(&v);
        }
        qoffsets.push((qvecs.len() / dim) as u64);
        let id = format!("q{q}");
        qrels.insert(id.clone(), doc_ids[d].clone(), 1);
        qids.push(id);
    }
    let queries = QuerySet::new(dim, qids, qvecs, qoffsets, cfg.query_len.max(1), NormPolicy::Renormalize)?;
    Ok(SynthData { corpus, queries, qrels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            num_docs: 50,
            vocab_size: 30,
            num_queries: 5,
            query_len: 4,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_and_well_formed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.corpus.vectors(), b.corpus.vectors());
        assert_eq!(a.corpus.num_docs(), 50);
        assert_eq!(a.queries.len(), 5);
        assert_eq!(a.qrels.len(), 5);
        assert!(a.qrels.unknown_docs(&a.corpus).is_empty());
    }

    #[test]
    fn frequencies_are_skewed() {
        let d = generate(&SynthConfig { num_docs: 400, vocab_size: 200, num_queries: 0, ..SynthConfig::default() }).unwrap();
        let h = d.corpus.histogram();
        assert!(h[0] > h[50] && h[0] > 10 * h[150].max(1) / 2);
    }

    #[test]
    fn rejects_bad_lengths() {
        let cfg = SynthConfig { min_doc_len: 5, max_doc_len: 2, ..small() };
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
    }
}
