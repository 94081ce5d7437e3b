use std::path::Path;

use mvr_core::centroid_index::GraphParams;
use mvr_core::engine::{BuildParams, SearchIndex};
use mvr_core::pq::PqConfig;
use mvr_core::synth::{generate, SynthConfig, SynthData};
use mvr_core::tac::{self, AllocationParams, TrainConfig};

/// Small synthetic index saved under `dir`.
pub fn build_index(dir: &Path) -> (SynthData, SearchIndex) {
    let data = generate(&SynthConfig {
        num_docs: 150,
        vocab_size: 50,
        num_queries: 5,
        query_len: 6,
        ..SynthConfig::default()
    })
    .unwrap();
    let stats = tac::compute_token_stats(&data.corpus, 1 << 16);
    let plan = tac::allocate(&stats, &AllocationParams::with_budget(200)).unwrap();
    let (cb, _) = tac::train(&data.corpus, &plan, &TrainConfig::default()).unwrap();
    let (asg, _) = tac::assign(&data.corpus, &cb, 1).unwrap();
    let params = BuildParams {
        pq: PqConfig { subspaces: 8, bits: 4, iterations: 4, seed: 3 },
        graph: GraphParams { max_neighbors: 8, ef_construction: 40, seed: 4 },
        pq_sample: 3000,
        threads: 1,
    };
    let index = SearchIndex::build(&data.corpus, cb, &asg, &params).unwrap();
    index.save(dir).unwrap();
    (data, index)
}
