//! Token-aware clustering: per-token statistics, centroid budget allocation
//! and independent per-token k-means.

pub mod allocate;
pub mod kmeans;
pub mod stats;
pub mod train;

pub use allocate::{allocate, AllocationParams, AllocationPlan, PlanEntry, TokenCategory};
pub use kmeans::{lloyd, LloydConfig, LloydResult};
pub use stats::{compute_token_stats, speedup_lower_bound, TokenStats};
pub use train::{
    assign, baseline_kmeans, train, Assignment, BaselineResult, ClusterStats, TokenPartitionedCodebook, TrainConfig,
};

/// Derives a per-token seed so token results do not depend on scheduling.
pub fn token_seed(global: u64, token: u32) -> u64 {
    let mut z = global ^ (u64::from(token).wrapping_add(1)).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::token_seed;

    #[test]
    fn seeds_differ_per_token_and_global() {
        assert_ne!(token_seed(0, 0), token_seed(0, 1));
        assert_ne!(token_seed(0, 5), token_seed(1, 5));
        assert_eq!(token_seed(7, 9), token_seed(7, 9));
    }
}
