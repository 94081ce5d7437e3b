//! Query-to-codeword inner-product tables and residual token scoring.
//!
//! The optimized layout nests subspace, then codeword, then query token, so
//! the `n_q` values for one `(subspace, codeword)` pair are contiguous. The
//! naive layout nests query token first. Both accumulate subspaces in
//! ascending order, so the two produce bit-identical scores.

use super::codec::PqCodec;
use super::compressed::DocRecord;
use crate::error::{Error, Result};
use crate::kernels;

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTables {
    n_q: usize,
    subspaces: usize,
    codewords: usize,
    /// Entry `(m, k, i)` at `(m * codewords + k) * n_q + i`.
    data: Vec<f32>,
}

impl DistanceTables {
    /// `query` holds `n_q` rows of `codec.dim()` floats.
    pub fn build(query: &[f32], codec: &PqCodec) -> Self {
        let dim = codec.dim();
        let n_q = query.len() / dim;
        let (m_count, k_count, s) = (codec.subspaces(), codec.codewords(), codec.sub_dim());
        let mut data = vec![0f32; m_count * k_count * n_q];
        for m in 0..m_count {
            for k in 0..k_count {
                let cw = codec.codeword(m, k);
                let block = &mut data[(m * k_count + k) * n_q..(m * k_count + k + 1) * n_q];
                for (i, slot) in block.iter_mut().enumerate() {
                    *slot = kernels::dot(&query[i * dim + m * s..i * dim + (m + 1) * s], cw);
                }
            }
        }
        DistanceTables {
            n_q,
            subspaces: m_count,
            codewords: k_count,
            data,
        }
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, m: usize, k: usize, i: usize) -> f32 {
        self.data[(m * self.codewords + k) * self.n_q + i]
    }

    /// The `n_q` contiguous entries of one `(subspace, codeword)` pair.
    pub fn micro_block(&self, m: usize, k: usize) -> &[f32] {
        let at = (m * self.codewords + k) * self.n_q;
        &self.data[at..at + self.n_q]
    }
}

/// Reference layout, one full table per query token.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveTables {
    n_q: usize,
    subspaces: usize,
    codewords: usize,
    /// Entry `(i, m, k)` at `(i * subspaces + m) * codewords + k`.
    data: Vec<f32>,
}

impl NaiveTables {
    pub fn build(query: &[f32], codec: &PqCodec) -> Self {
        let dim = codec.dim();
        let n_q = query.len() / dim;
        let (m_count, k_count, s) = (codec.subspaces(), codec.codewords(), codec.sub_dim());
        let mut data = vec![0f32; n_q * m_count * k_count];
        for i in 0..n_q {
            for m in 0..m_count {
                let sub = &query[i * dim + m * s..i * dim + (m + 1) * s];
                for k in 0..k_count {
                    data[(i * m_count + m) * k_count + k] = kernels::dot(sub, codec.codeword(m, k));
                }
            }
        }
        NaiveTables {
            n_q,
            subspaces: m_count,
            codewords: k_count,
            data,
        }
    }

    pub fn get(&self, m: usize, k: usize, i: usize) -> f32 {
        self.data[(i * self.subspaces + m) * self.codewords + k]
    }
}

fn check_codes(doc: usize, record: &DocRecord<'_>, codewords: usize) -> Result<()> {
    if codewords < 256 {
        if let Some(bad) = record.codes.iter().find(|&&c| c as usize >= codewords) {
            return Err(Error::CorruptRecord {
                doc,
                reason: format!("code {bad} out of range for {codewords} codewords"),
            });
        }
    }
    Ok(())
}

/// `<q_i, c_a(j)>` for every query token `i` and record token `j`, written
/// row-major `n_q x n_d` into `out`.
pub fn centroid_scores_into(query: &[f32], dim: usize, record: &DocRecord<'_>, centroids: &[f32], out: &mut Vec<f32>) {
    let n_q = query.len() / dim;
    let n_d = record.len();
    out.clear();
    out.resize(n_q * n_d, 0.0);
    for (j, &c) in record.centroid_ids.iter().enumerate() {
        let c = &centroids[c as usize * dim..(c as usize + 1) * dim];
        for i in 0..n_q {
            out[i * n_d + j] = kernels::dot(&query[i * dim..(i + 1) * dim], c);
        }
    }
}

/// Approximate token scores `<q_i, c_a(j)> + rho_j * sum_m T[m][code_jm][i]`.
///
/// `centroid_scores` is `n_q x n_d` row-major and is overwritten in place with
/// the result.
pub fn score_tokens_into(
    doc: usize,
    record: &DocRecord<'_>,
    tables: &DistanceTables,
    centroid_scores: &mut [f32],
    acc: &mut Vec<f32>,
) -> Result<()> {
    check_codes(doc, record, tables.codewords)?;
    let (n_q, n_d, m_count, k_count) = (tables.n_q, record.len(), tables.subspaces, tables.codewords);
    acc.clear();
    acc.resize(n_q, 0.0);
    for j in 0..n_d {
        let rho = record.norms[j];
        if rho == 0.0 {
            continue;
        }
        acc.fill(0.0);
        let codes = &record.codes[j * m_count..(j + 1) * m_count];
        for (m, &code) in codes.iter().enumerate() {
            let at = (m * k_count + code as usize) * n_q;
            for (a, t) in acc.iter_mut().zip(&tables.data[at..at + n_q]) {
                *a += t;
            }
        }
        for (i, a) in acc.iter().enumerate() {
            centroid_scores[i * n_d + j] += rho * a;
        }
    }
    Ok(())
}

/// Same result as [`score_tokens_into`] through the naive table layout.
pub fn score_tokens_naive_into(
    doc: usize,
    record: &DocRecord<'_>,
    tables: &NaiveTables,
    centroid_scores: &mut [f32],
) -> Result<()> {
    check_codes(doc, record, tables.codewords)?;
    let (n_q, n_d, m_count, k_count) = (tables.n_q, record.len(), tables.subspaces, tables.codewords);
    for j in 0..n_d {
        let rho = record.norms[j];
        if rho == 0.0 {
            continue;
        }
        let codes = &record.codes[j * m_count..(j + 1) * m_count];
        for i in 0..n_q {
            let row = &tables.data[i * m_count * k_count..(i + 1) * m_count * k_count];
            let mut a = 0f32;
            for (m, &code) in codes.iter().enumerate() {
                a += row[m * k_count + code as usize];
            }
            centroid_scores[i * n_d + j] += rho * a;
        }
    }
    Ok(())
}

/// Full `n_q x n_d` score matrix for one document.
pub fn score_tokens(
    doc: usize,
    query: &[f32],
    record: &DocRecord<'_>,
    tables: &DistanceTables,
    centroids: &[f32],
) -> Result<Vec<f32>> {
    let dim = query.len() / tables.n_q.max(1);
    let mut out = Vec::new();
    centroid_scores_into(query, dim, record, centroids, &mut out);
    score_tokens_into(doc, record, tables, &mut out, &mut Vec::new())?;
    Ok(out)
}
