//! Query execution: centroid-level gathering, candidate pruning and
//! refinement with compressed residuals.

pub mod index;
pub mod search;

pub use index::{BuildParams, IndexSizes, SearchIndex};
pub use search::{
    exhaustive_maxsim, gather, maxsim, rank_order, refine, search, truncate_and_prune, CandidateSet, PhaseTiming,
    SearchParams, SearchResult,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::centroid_index::GraphParams;
    use crate::pq::PqConfig;
    use crate::synth::{generate, SynthConfig, SynthData};
    use crate::tac::{self, AllocationParams, TrainConfig};

    fn fixture() -> (SynthData, SearchIndex) {
        let data = generate(&SynthConfig {
            num_docs: 200,
            vocab_size: 60,
            num_queries: 10,
            query_len: 6,
            ..SynthConfig::default()
        })
        .unwrap();
        let stats = tac::compute_token_stats(&data.corpus, 1 << 16);
        let plan = tac::allocate(&stats, &AllocationParams::with_budget(256)).unwrap();
        let (cb, _) = tac::train(&data.corpus, &plan, &TrainConfig::default()).unwrap();
        let (asg, _) = tac::assign(&data.corpus, &cb, 1).unwrap();
        let params = BuildParams {
            pq: PqConfig { subspaces: 8, bits: 4, iterations: 5, seed: 1 },
            graph: GraphParams { max_neighbors: 8, ef_construction: 50, seed: 2 },
            pq_sample: 4000,
            threads: 1,
        };
        let index = SearchIndex::build(&data.corpus, cb, &asg, &params).unwrap();
        (data, index)
    }

    #[test]
    fn search_returns_gathered_docs_only() {
        let (data, index) = fixture();
        let p = SearchParams::new(8, 50, 0.4, 10);
        for q in data.queries.iter() {
            let cands = gather(&index, q.vectors, &p);
            let r = search(&index, q.vectors, &p).unwrap();
            assert!(r.hits.len() <= 10);
            assert!(r.hits.iter().all(|(d, _)| cands.get(*d).is_some()));
            assert!(r.hits.windows(2).all(|w| rank_order(&w[0], &w[1]).is_le()));
        }
    }

    #[test]
    fn index_roundtrip_and_tamper_detection() {
        let (_, index) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx");
        index.save(&path).unwrap();
        assert_eq!(SearchIndex::load(&path).unwrap(), index);
        let first: Vec<(String, Vec<u8>)> = std::fs::read_dir(&path)
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
            .collect();
        index.save(&path).unwrap();
        for (name, bytes) in &first {
            assert_eq!(&std::fs::read(path.join(name)).unwrap(), bytes, "{name} changed on rebuild");
        }
        let cb = path.join(index::CODEBOOK_FILE);
        let mut b = std::fs::read(&cb).unwrap();
        let last = b.len() - 1;
        b[last] ^= 1;
        std::fs::write(&cb, b).unwrap();
        assert!(matches!(SearchIndex::load(&path), Err(crate::Error::Integrity { .. })));
        std::fs::remove_file(path.join(index::GRAPH_FILE)).unwrap();
        assert!(matches!(SearchIndex::load(&path), Err(crate::Error::MissingComponent(_))));
    }

    #[test]
    fn sizes_follow_layout() {
        let (data, index) = fixture();
        let s = index.sizes();
        let n = data.corpus.num_vectors();
        assert_eq!(s.centroid_ids, 4 * n);
        assert_eq!(s.codes, 8 * n);
        assert_eq!(s.norms, 4 * n);
    }
}
