//! Centroid budget allocation across token types.
//!
//! Four phases: tail handling (micro tokens get 1 centroid, small tokens 2),
//! damped proportional shares for active tokens, bounding to
//! `[floor, count / min_per_centroid]`, and reconciliation to the exact
//! budget.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use super::stats::{speedup_lower_bound, TokenStats};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationParams {
    /// Total centroid budget.
    pub budget: usize,
    /// Tokens with fewer occurrences are micro tokens (1 centroid).
    pub micro_below: u64,
    /// Tokens with fewer occurrences (and not micro) are small (2 centroids).
    pub small_below: u64,
    /// Minimum centroids per active token.
    pub floor: u64,
    /// Minimum average occurrences per centroid for active tokens.
    pub min_per_centroid: u64,
}

impl AllocationParams {
    pub fn with_budget(budget: usize) -> Self {
        AllocationParams {
            budget,
            ..Default::default()
        }
    }
}

impl Default for AllocationParams {
    fn default() -> Self {
        AllocationParams {
            budget: 1 << 18,
            micro_below: 128,
            small_below: 256,
            floor: 4,
            min_per_centroid: 39,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TokenCategory {
    Micro,
    Small,
    Active,
}

impl TokenCategory {
    pub fn name(self) -> &'static str {
        match self {
            TokenCategory::Micro => "micro",
            TokenCategory::Small => "small",
            TokenCategory::Active => "active",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanEntry {
    pub token_id: u32,
    pub count: u64,
    pub weight: f64,
    pub category: TokenCategory,
    /// Real-valued proportional share before flooring (0 for tail tokens).
    pub ideal: f64,
    pub lower: u64,
    pub upper: u64,
    pub centroids: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationPlan {
    pub params: AllocationParams,
    /// Ordered by token id.
    pub entries: Vec<PlanEntry>,
    /// Budget left after tail handling.
    pub active_budget: u64,
    pub total: u64,
    pub warnings: Vec<String>,
}

impl AllocationPlan {
    pub fn centroids(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.centroids).collect()
    }

    /// `budget - total`: positive when bounds left budget unplaced, negative
    /// when floors forced an overshoot.
    pub fn shortfall(&self) -> i64 {
        self.params.budget as i64 - self.total as i64
    }

    pub fn is_exact(&self) -> bool {
        self.total == self.params.budget as u64
    }

    /// Plain-text allocation summary per token category.
    pub fn report(&self, stats: &[TokenStats]) -> String {
        let mut out = String::new();
        let p = &self.params;
        let _ = writeln!(out, "budget\t{}", p.budget);
        let _ = writeln!(
            out,
            "thresholds\tmicro_below={} small_below={} floor={} min_per_centroid={}",
            p.micro_below, p.small_below, p.floor, p.min_per_centroid
        );
        let _ = writeln!(out, "category\ttokens\tvectors\tcentroids");
        for cat in [TokenCategory::Micro, TokenCategory::Small, TokenCategory::Active] {
            let (mut tokens, mut vectors, mut cents) = (0u64, 0u64, 0u64);
            for e in self.entries.iter().filter(|e| e.category == cat) {
                tokens += 1;
                vectors += e.count;
                cents += e.centroids;
            }
            let _ = writeln!(out, "{}\t{tokens}\t{vectors}\t{cents}", cat.name());
        }
        let _ = writeln!(out, "total\t{}\t{}\t{}", self.entries.len(), self.entries.iter().map(|e| e.count).sum::<u64>(), self.total);
        match speedup_lower_bound(stats) {
            Ok(b) => {
                let _ = writeln!(out, "speedup_lower_bound\t{b:.6}");
            }
            Err(_) => {
                let _ = writeln!(out, "speedup_lower_bound\tundefined (all weights zero)");
            }
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning\t{w}");
        }
        out
    }
}

fn bounds(count: u64, floor: u64, min_per_centroid: u64) -> (u64, u64) {
    let lower = floor.max(1).min(count);
    let upper = lower.max(count / min_per_centroid);
    (lower, upper)
}

/// Surplus priority: largest `ideal - centroids`, then lowest token id.
struct Grow {
    gap: f64,
    slot: usize,
    token: u32,
}

impl PartialEq for Grow {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Grow {}
impl PartialOrd for Grow {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Grow {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gap
            .total_cmp(&other.gap)
            .then_with(|| other.token.cmp(&self.token))
    }
}

/// Deficit priority: smallest `weight / centroids`, then lowest token id.
struct Shrink {
    ratio: f64,
    slot: usize,
    token: u32,
}

impl PartialEq for Shrink {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Shrink {}
impl PartialOrd for Shrink {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Shrink {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .ratio
            .total_cmp(&self.ratio)
            .then_with(|| other.token.cmp(&self.token))
    }
}

/// Distributes `params.budget` centroids over the tokens in `stats`.
pub fn allocate(stats: &[TokenStats], params: &AllocationParams) -> Result<AllocationPlan> {
    if params.micro_below > params.small_below {
        return Err(Error::Precondition(format!(
            "micro threshold {} exceeds small threshold {}",
            params.micro_below, params.small_below
        )));
    }
    if params.floor < 1 || params.min_per_centroid < 1 {
        return Err(Error::Precondition(
            "floor and min_per_centroid must be at least 1".into(),
        ));
    }
    if params.budget < stats.len() {
        return Err(Error::InfeasibleBudget {
            budget: params.budget,
            tokens: stats.len(),
        });
    }
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by_key(|&i| stats[i].token_id);

    // Phase 1: tail handling.
    let mut entries: Vec<PlanEntry> = order
        .iter()
        .map(|&i| {
            let s = &stats[i];
            let (category, fixed) = if s.count < params.micro_below {
                (TokenCategory::Micro, 1)
            } else if s.count < params.small_below {
                (TokenCategory::Small, 2u64.min(s.count.max(1)))
            } else {
                (TokenCategory::Active, 0)
            };
            let (lower, upper) = match category {
                TokenCategory::Active => bounds(s.count, params.floor, params.min_per_centroid),
                _ => (fixed, fixed),
            };
            PlanEntry {
                token_id: s.token_id,
                count: s.count,
                weight: s.weight,
                category,
                ideal: 0.0,
                lower,
                upper,
                centroids: fixed,
            }
        })
        .collect();
    let tail: u64 = entries.iter().map(|e| e.centroids).sum();
    let active_budget = (params.budget as u64).saturating_sub(tail);

    // Phase 2: damped proportional shares.
    let weight_sum: f64 = entries
        .iter()
        .filter(|e| e.category == TokenCategory::Active)
        .map(|e| e.weight)
        .sum();
    for e in entries.iter_mut().filter(|e| e.category == TokenCategory::Active) {
        e.ideal = if weight_sum > 0.0 {
            e.weight / weight_sum * active_budget as f64
        } else {
            0.0
        };
        e.centroids = e.ideal.floor() as u64;
        // Phase 3: bounding.
        e.centroids = e.centroids.clamp(e.lower, e.upper);
    }

    // Phase 4: reconciliation.
    let budget = params.budget as u64;
    let mut total: u64 = entries.iter().map(|e| e.centroids).sum();
    if total < budget {
        let mut heap: BinaryHeap<Grow> = entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.category == TokenCategory::Active && e.centroids < e.upper)
            .map(|(slot, e)| Grow {
                gap: e.ideal - e.centroids as f64,
                slot,
                token: e.token_id,
            })
            .collect();
        while total < budget {
            let Some(top) = heap.pop() else { break };
            let e = &mut entries[top.slot];
            e.centroids += 1;
            total += 1;
            if e.centroids < e.upper {
                heap.push(Grow {
                    gap: e.ideal - e.centroids as f64,
                    ..top
                });
            }
        }
    } else if total > budget {
        let mut heap: BinaryHeap<Shrink> = entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.category == TokenCategory::Active && e.centroids > e.lower)
            .map(|(slot, e)| Shrink {
                ratio: e.weight / e.centroids as f64,
                slot,
                token: e.token_id,
            })
            .collect();
        while total > budget {
            let Some(top) = heap.pop() else { break };
            let e = &mut entries[top.slot];
            e.centroids -= 1;
            total -= 1;
            if e.centroids > e.lower {
                heap.push(Shrink {
                    ratio: e.weight / e.centroids as f64,
                    ..top
                });
            }
        }
    }

    let mut warnings = Vec::new();
    if total < budget {
        warnings.push(format!(
            "upper bounds cap the allocation at {total} centroids, {} below the budget",
            budget - total
        ));
    } else if total > budget {
        warnings.push(format!(
            "lower bounds force {total} centroids, {} above the budget",
            total - budget
        ));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(AllocationPlan {
        params: *params,
        entries,
        active_budget,
        total,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn active_only(counts: &[u64], spreads: &[f32]) -> Vec<TokenStats> {
        counts
            .iter()
            .zip(spreads)
            .enumerate()
            .map(|(i, (&n, &s))| TokenStats::from_parts(i as u32, n, s))
            .collect()
    }

    #[test]
    fn three_token_example() {
        let stats = active_only(&[1000, 500, 200], &[2.0, 1.0, 4.0]);
        let params = AllocationParams {
            budget: 20,
            micro_below: 0,
            small_below: 0,
            floor: 1,
            min_per_centroid: 10,
        };
        let plan = allocate(&stats, &params).unwrap();
        let w: Vec<f64> = plan.entries.iter().map(|e| e.weight).collect();
        assert!((w[0] - 63.246).abs() < 1e-3);
        assert!((w[1] - 22.361).abs() < 1e-3);
        assert!((w[2] - 56.569).abs() < 1e-3);
        let floors: Vec<u64> = plan.entries.iter().map(|e| e.ideal.floor() as u64).collect();
        assert_eq!(floors, vec![8, 3, 7]);
        assert_eq!(plan.centroids(), vec![9, 3, 8]);
        assert!(plan.is_exact());
    }

    #[test]
    fn single_token_takes_whole_budget() {
        let stats = active_only(&[5000], &[0.3]);
        let params = AllocationParams {
            budget: 17,
            ..Default::default()
        };
        let plan = allocate(&stats, &params).unwrap();
        assert_eq!(plan.centroids(), vec![17]);
        assert_eq!(speedup_lower_bound(&stats).unwrap(), 1.0);
    }

    #[test]
    fn default_params_are_stored() {
        let p = AllocationParams::with_budget(1000);
        assert_eq!((p.micro_below, p.small_below, p.floor, p.min_per_centroid), (128, 256, 4, 39));
        let stats = active_only(&[300, 100, 200, 10_000], &[1.0, 1.0, 1.0, 1.0]);
        let plan = allocate(&stats, &p).unwrap();
        assert_eq!(plan.params, p);
        let cats: Vec<_> = plan.entries.iter().map(|e| e.category).collect();
        assert_eq!(
            cats,
            vec![TokenCategory::Active, TokenCategory::Micro, TokenCategory::Small, TokenCategory::Active]
        );
        assert_eq!(plan.entries[1].centroids, 1);
        assert_eq!(plan.entries[2].centroids, 2);
    }

    #[test]
    fn infeasible_budget_is_an_error() {
        let stats = active_only(&[10, 10, 10], &[1.0; 3]);
        let err = allocate(&stats, &AllocationParams::with_budget(2));
        assert!(matches!(err, Err(Error::InfeasibleBudget { budget: 2, tokens: 3 })));
    }

    #[test]
    fn unreachable_budget_reports_shortfall() {
        // one active token with 400 occurrences can hold at most 400/39 = 10 centroids
        let stats = active_only(&[400], &[1.0]);
        let plan = allocate(&stats, &AllocationParams::with_budget(50)).unwrap();
        assert_eq!(plan.total, 10);
        assert_eq!(plan.shortfall(), 40);
        assert_eq!(plan.warnings.len(), 1);
    }

    #[test]
    fn floor_wins_over_upper_bound() {
        // 300 / 39 = 7 < floor 8, so the token keeps min(8, 300)
        let stats = active_only(&[300, 100_000], &[1.0, 1.0]);
        let params = AllocationParams {
            budget: 100,
            floor: 8,
            ..Default::default()
        };
        let plan = allocate(&stats, &params).unwrap();
        assert_eq!(plan.entries[0].lower, 8);
        assert_eq!(plan.entries[0].upper, 8);
        assert_eq!(plan.entries[0].centroids, 8);
        assert!(plan.is_exact());
    }

    #[test]
    fn deficit_trims_lowest_weight_per_centroid() {
        // floors push the total over budget; the overshoot comes off the
        // token with the smallest weight per centroid that is above its floor
        let stats = active_only(&[10_000, 10_000, 1_000, 1_000], &[1.0, 0.5, 0.001, 0.001]);
        let params = AllocationParams {
            budget: 20,
            micro_below: 0,
            small_below: 0,
            floor: 4,
            min_per_centroid: 1,
        };
        let plan = allocate(&stats, &params).unwrap();
        assert_eq!(plan.total, 20);
        assert!(plan.entries.iter().all(|e| e.centroids >= 4));
    }
}
