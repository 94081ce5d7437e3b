//! Ranking metrics over run files.

use std::collections::BTreeSet;

use crate::corpus::{Qrels, Run};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    MrrAt(usize),
    SuccessAt(usize),
    /// Overlap of the top `k` with an oracle run's top `k`.
    RecallAt(usize),
}

impl Metric {
    pub fn parse(name: &str) -> Result<Self> {
        let lower = name.to_ascii_lowercase();
        let (kind, cutoff) = lower
            .split_once('@')
            .ok_or_else(|| Error::UnknownMetric(name.to_string()))?;
        let k: usize = cutoff
            .parse()
            .ok()
            .filter(|&k| k > 0)
            .ok_or_else(|| Error::UnknownMetric(name.to_string()))?;
        match kind {
            "mrr" => Ok(Metric::MrrAt(k)),
            "success" => Ok(Metric::SuccessAt(k)),
            "recall" => Ok(Metric::RecallAt(k)),
            _ => Err(Error::UnknownMetric(name.to_string())),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Metric::MrrAt(k) => format!("MRR@{k}"),
            Metric::SuccessAt(k) => format!("Success@{k}"),
            Metric::RecallAt(k) => format!("Recall@{k}"),
        }
    }
}

/// Every run query must be judged and every judged query must be in the run.
pub fn check_ids(run: &Run, qrels: &Qrels) -> Result<()> {
    let judged: BTreeSet<&str> = qrels.queries().collect();
    let ran: BTreeSet<&str> = run.lists.iter().map(|l| l.query_id.as_str()).collect();
    if let Some(q) = ran.difference(&judged).next() {
        return Err(Error::IdMismatch(format!("query {q} is in the run but has no judgments")));
    }
    if let Some(q) = judged.difference(&ran).next() {
        return Err(Error::IdMismatch(format!("judged query {q} is missing from the run")));
    }
    Ok(())
}

/// 1-based rank of the first relevant document within the top `k`.
fn first_relevant(run: &Run, qrels: &Qrels, query: &str, k: usize) -> Option<usize> {
    let rel = qrels.relevant(query)?;
    let list = run.get(query)?;
    list.docs
        .iter()
        .take(k)
        .position(|(d, _)| rel.contains_key(d))
        .map(|p| p + 1)
}

/// Mean reciprocal rank of the first relevant document in the top `k`,
/// averaged over judged queries.
pub fn mrr_at(run: &Run, qrels: &Qrels, k: usize) -> Result<f64> {
    check_ids(run, qrels)?;
    if qrels.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = qrels
        .queries()
        .map(|q| first_relevant(run, qrels, q, k).map_or(0.0, |r| 1.0 / r as f64))
        .sum();
    Ok(total / qrels.len() as f64)
}

/// Fraction of judged queries with a relevant document in the top `k`.
pub fn success_at(run: &Run, qrels: &Qrels, k: usize) -> Result<f64> {
    check_ids(run, qrels)?;
    if qrels.is_empty() {
        return Ok(0.0);
    }
    let hits = qrels
        .queries()
        .filter(|q| first_relevant(run, qrels, q, k).is_some())
        .count();
    Ok(hits as f64 / qrels.len() as f64)
}

/// Mean fraction of the oracle's top `k` recovered in the run's top `k`.
pub fn recall_vs_oracle(run: &Run, oracle: &Run, k: usize) -> Result<f64> {
    if oracle.lists.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for truth in &oracle.lists {
        let want: BTreeSet<&str> = truth.docs.iter().take(k).map(|(d, _)| d.as_str()).collect();
        if want.is_empty() {
            total += 1.0;
            continue;
        }
        let got = run
            .get(&truth.query_id)
            .ok_or_else(|| Error::IdMismatch(format!("oracle query {} is missing from the run", truth.query_id)))?;
        let found = got.docs.iter().take(k).filter(|(d, _)| want.contains(d.as_str())).count();
        total += found as f64 / want.len() as f64;
    }
    Ok(total / oracle.lists.len() as f64)
}

pub fn evaluate(metric: Metric, run: &Run, qrels: &Qrels, oracle: Option<&Run>) -> Result<f64> {
    match metric {
        Metric::MrrAt(k) => mrr_at(run, qrels, k),
        Metric::SuccessAt(k) => success_at(run, qrels, k),
        Metric::RecallAt(k) => {
            let oracle = oracle.ok_or_else(|| Error::Config("recall needs an oracle run".into()))?;
            recall_vs_oracle(run, oracle, k)
        }
    }
}
