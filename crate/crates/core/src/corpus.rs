//! Token-level embedding collections, query sets, relevance judgments and
//! run files.
//!
//! A corpus is described by a UTF-8 `key: value` metadata file that points at
//! three raw payloads: the embedding matrix (16-byte header + row-major LE
//! f32), token ids (LE u32) and document offsets (LE u64).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::format::{self, ByteReader, ByteWriter, Metadata};
use crate::kernels;

pub const NORM_TOLERANCE: f32 = 1e-3;
pub const DEFAULT_MAX_QUERY_TOKENS: usize = 32;

const CORPUS_FORMAT: &str = "mvr-corpus";
const QUERIES_FORMAT: &str = "mvr-queries";

/// What to do with rows whose norm is not 1 at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormPolicy {
    #[default]
    Validate,
    Renormalize,
}

fn check_norms(vectors: &mut [f32], dim: usize, policy: NormPolicy) -> Result<()> {
    for (row, v) in vectors.chunks_exact_mut(dim).enumerate() {
        match policy {
            NormPolicy::Validate => {
                let n = kernels::norm(v);
                if !n.is_finite() || (n - 1.0).abs() > NORM_TOLERANCE {
                    return Err(Error::NotNormalized {
                        row,
                        norm: n,
                        tolerance: NORM_TOLERANCE,
                    });
                }
            }
            NormPolicy::Renormalize => {
                let n = kernels::normalize(v);
                if n == 0.0 || !n.is_finite() {
                    return Err(Error::NotNormalized {
                        row,
                        norm: n,
                        tolerance: NORM_TOLERANCE,
                    });
                }
            }
        }
    }
    Ok(())
}

fn check_offsets(offsets: &[u64], rows: usize) -> Result<()> {
    if offsets.len() < 2 {
        return Err(Error::InvalidOffsets(
            "at least one document is required".into(),
        ));
    }
    if offsets[0] != 0 {
        return Err(Error::InvalidOffsets(format!(
            "first offset is {}, expected 0",
            offsets[0]
        )));
    }
    for (i, w) in offsets.windows(2).enumerate() {
        if w[1] < w[0] {
            return Err(Error::NonMonotoneOffsets { position: i + 1 });
        }
        if w[1] == w[0] {
            return Err(Error::EmptyDocument { doc: i });
        }
    }
    let last = *offsets.last().unwrap();
    if last != rows as u64 {
        return Err(Error::InvalidOffsets(format!(
            "last offset is {last}, expected {rows} rows"
        )));
    }
    Ok(())
}

/// All document token embeddings of a collection.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenVectorCorpus {
    dim: usize,
    vocab_size: u32,
    vectors: Vec<f32>,
    token_ids: Vec<u32>,
    doc_offsets: Vec<u64>,
    histogram: Vec<u64>,
    doc_ids: Option<Vec<String>>,
}

impl TokenVectorCorpus {
    pub fn new(
        dim: usize,
        vocab_size: u32,
        mut vectors: Vec<f32>,
        token_ids: Vec<u32>,
        doc_offsets: Vec<u64>,
        policy: NormPolicy,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Precondition("dimension must be positive".into()));
        }
        if vectors.len() != token_ids.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: token_ids.len() * dim,
                actual: vectors.len(),
            });
        }
        check_offsets(&doc_offsets, token_ids.len())?;
        let mut histogram = vec![0u64; vocab_size as usize];
        for (row, &t) in token_ids.iter().enumerate() {
            if t >= vocab_size {
                return Err(Error::TokenOutOfRange {
                    row,
                    token: t,
                    vocab_size,
                });
            }
            histogram[t as usize] += 1;
        }
        check_norms(&mut vectors, dim, policy)?;
        Ok(TokenVectorCorpus {
            dim,
            vocab_size,
            vectors,
            token_ids,
            doc_offsets,
            histogram,
            doc_ids: None,
        })
    }

    /// Attaches external string ids, one per document.
    pub fn with_doc_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.num_docs() {
            return Err(Error::DimensionMismatch {
                expected: self.num_docs(),
                actual: ids.len(),
            });
        }
        self.doc_ids = Some(ids);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn num_vectors(&self) -> usize {
        self.token_ids.len()
    }

    pub fn num_docs(&self) -> usize {
        self.doc_offsets.len() - 1
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn vector(&self, row: usize) -> &[f32] {
        &self.vectors[row * self.dim..(row + 1) * self.dim]
    }

    pub fn token_ids(&self) -> &[u32] {
        &self.token_ids
    }

    pub fn doc_offsets(&self) -> &[u64] {
        &self.doc_offsets
    }

    pub fn doc_rows(&self, doc: usize) -> std::ops::Range<usize> {
        self.doc_offsets[doc] as usize..self.doc_offsets[doc + 1] as usize
    }

    pub fn doc_vectors(&self, doc: usize) -> &[f32] {
        let r = self.doc_rows(doc);
        &self.vectors[r.start * self.dim..r.end * self.dim]
    }

    pub fn doc_ids(&self) -> Option<&[String]> {
        self.doc_ids.as_deref()
    }

    /// External id of a document, or its dense index when no mapping exists.
    pub fn doc_label(&self, doc: usize) -> String {
        match &self.doc_ids {
            Some(ids) => ids[doc].clone(),
            None => doc.to_string(),
        }
    }

    /// Occurrence count indexed by token id (length = vocabulary size).
    pub fn histogram(&self) -> &[u64] {
        &self.histogram
    }

    pub fn distinct_tokens(&self) -> usize {
        self.histogram.iter().filter(|&&c| c > 0).count()
    }

    /// Rows grouped by token id (counting sort, rows ascending within a token).
    pub fn token_index(&self) -> TokenIndex {
        let v = self.vocab_size as usize;
        let mut offsets = vec![0usize; v + 1];
        for (t, &c) in self.histogram.iter().enumerate() {
            offsets[t + 1] = offsets[t] + c as usize;
        }
        let mut cursor = offsets.clone();
        let mut rows = vec![0u32; self.num_vectors()];
        for (row, &t) in self.token_ids.iter().enumerate() {
            rows[cursor[t as usize]] = row as u32;
            cursor[t as usize] += 1;
        }
        TokenIndex { offsets, rows }
    }

    /// Writes the metadata file at `meta_path` and the payloads next to it.
    pub fn save(&self, meta_path: &Path) -> Result<()> {
        let stem = file_stem(meta_path);
        let dir = meta_path.parent().unwrap_or(Path::new(""));
        let vec_name = format!("{stem}.vec");
        let tok_name = format!("{stem}.tok");
        let off_name = format!("{stem}.off");
        write_vector_file(&dir.join(&vec_name), self.dim, &self.vectors)?;
        format::write_file(&dir.join(&tok_name), &format::u32s_to_bytes(&self.token_ids))?;
        format::write_file(&dir.join(&off_name), &format::u64s_to_bytes(&self.doc_offsets))?;
        let mut meta = Metadata::new(meta_path);
        meta.set("format", CORPUS_FORMAT);
        meta.set("version", format::FORMAT_VERSION);
        meta.set("dim", self.dim);
        meta.set("num_vectors", self.num_vectors());
        meta.set("num_docs", self.num_docs());
        meta.set("vocab_size", self.vocab_size);
        meta.set("vectors", vec_name);
        meta.set("token_ids", tok_name);
        meta.set("doc_offsets", off_name);
        if let Some(ids) = &self.doc_ids {
            let ids_name = format!("{stem}.ids");
            write_id_file(&dir.join(&ids_name), ids)?;
            meta.set("doc_ids", ids_name);
        }
        meta.save()
    }

    pub fn load(path: &Path, policy: NormPolicy) -> Result<Self> {
        let meta_path = resolve_meta(path, "corpus.meta");
        let meta = Metadata::load(&meta_path)?;
        expect_format(&meta, CORPUS_FORMAT)?;
        let dim = meta.require_u64("dim")? as usize;
        let n = meta.require_u64("num_vectors")? as usize;
        let d = meta.require_u64("num_docs")? as usize;
        let vocab = meta.require_u64("vocab_size")?;
        let vocab = u32::try_from(vocab).map_err(|_| Error::MalformedMetadata {
            path: meta_path.clone(),
            reason: "vocab_size exceeds u32".into(),
        })?;
        if dim == 0 {
            return Err(Error::MalformedMetadata {
                path: meta_path,
                reason: "dim must be positive".into(),
            });
        }
        let vectors = read_vector_file(&meta.require_path("vectors")?, dim, n)?;
        let token_ids = read_exact_u32s(&meta.require_path("token_ids")?, n)?;
        let doc_offsets = read_exact_u64s(&meta.require_path("doc_offsets")?, d + 1)?;
        let corpus = TokenVectorCorpus::new(dim, vocab, vectors, token_ids, doc_offsets, policy)?;
        match meta.optional_path("doc_ids") {
            Some(p) => corpus.with_doc_ids(format::read_lines(&p)?),
            None => Ok(corpus),
        }
    }
}

/// Rows of the corpus grouped by token id.
#[derive(Debug, Clone)]
pub struct TokenIndex {
    offsets: Vec<usize>,
    rows: Vec<u32>,
}

impl TokenIndex {
    pub fn rows_of(&self, token: u32) -> &[u32] {
        let t = token as usize;
        &self.rows[self.offsets[t]..self.offsets[t + 1]]
    }
}

/// Loads and validates a corpus (validate-only norm policy).
pub fn load_corpus(path: &Path) -> Result<TokenVectorCorpus> {
    TokenVectorCorpus::load(path, NormPolicy::Validate)
}

/// Occurrence count of every token present in the corpus.
pub fn token_histogram(corpus: &TokenVectorCorpus) -> BTreeMap<u32, u64> {
    corpus
        .histogram()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(t, &c)| (t as u32, c))
        .collect()
}

/// Fraction of all vectors covered by the `k` most frequent tokens.
pub fn top_k_share(corpus: &TokenVectorCorpus, k: usize) -> f64 {
    let mut counts: Vec<u64> = corpus.histogram().iter().copied().filter(|&c| c > 0).collect();
    counts.sort_unstable_by(|a, b| b.cmp(a));
    let top: u64 = counts.iter().take(k).sum();
    top as f64 / corpus.num_vectors() as f64
}

/// A batch of multivector queries.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySet {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<f32>,
    offsets: Vec<u64>,
}

/// A borrowed view of one query.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub id: &'a str,
    pub vectors: &'a [f32],
    pub dim: usize,
}

impl Query<'_> {
    pub fn len(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn token(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }
}

impl QuerySet {
    pub fn new(
        dim: usize,
        ids: Vec<String>,
        mut vectors: Vec<f32>,
        offsets: Vec<u64>,
        max_tokens: usize,
        policy: NormPolicy,
    ) -> Result<Self> {
        if dim == 0 || !vectors.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: vectors.len(),
            });
        }
        if offsets.len() != ids.len() + 1 {
            return Err(Error::InvalidOffsets(format!(
                "{} offsets for {} queries",
                offsets.len(),
                ids.len()
            )));
        }
        if offsets.first() != Some(&0) || *offsets.last().unwrap() as usize != vectors.len() / dim {
            return Err(Error::InvalidOffsets("query offsets do not span the payload".into()));
        }
        for (i, w) in offsets.windows(2).enumerate() {
            if w[1] < w[0] {
                return Err(Error::NonMonotoneOffsets { position: i + 1 });
            }
            let len = (w[1] - w[0]) as usize;
            if len == 0 || len > max_tokens {
                return Err(Error::QueryLength {
                    query: ids[i].clone(),
                    len,
                    max: max_tokens,
                });
            }
        }
        check_norms(&mut vectors, dim, policy)?;
        Ok(QuerySet {
            dim,
            ids,
            vectors,
            offsets,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, i: usize) -> Query<'_> {
        let (a, b) = (self.offsets[i] as usize, self.offsets[i + 1] as usize);
        Query {
            id: &self.ids[i],
            vectors: &self.vectors[a * self.dim..b * self.dim],
            dim: self.dim,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Query<'_>> {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn save(&self, meta_path: &Path) -> Result<()> {
        let stem = file_stem(meta_path);
        let dir = meta_path.parent().unwrap_or(Path::new(""));
        let vec_name = format!("{stem}.vec");
        let off_name = format!("{stem}.off");
        let ids_name = format!("{stem}.ids");
        write_vector_file(&dir.join(&vec_name), self.dim, &self.vectors)?;
        format::write_file(&dir.join(&off_name), &format::u64s_to_bytes(&self.offsets))?;
        write_id_file(&dir.join(&ids_name), &self.ids)?;
        let mut meta = Metadata::new(meta_path);
        meta.set("format", QUERIES_FORMAT);
        meta.set("version", format::FORMAT_VERSION);
        meta.set("dim", self.dim);
        meta.set("num_vectors", self.vectors.len() / self.dim);
        meta.set("num_queries", self.len());
        meta.set("vectors", vec_name);
        meta.set("query_offsets", off_name);
        meta.set("query_ids", ids_name);
        meta.save()
    }

    pub fn load(path: &Path, max_tokens: usize, policy: NormPolicy) -> Result<Self> {
        let meta_path = resolve_meta(path, "queries.meta");
        let meta = Metadata::load(&meta_path)?;
        expect_format(&meta, QUERIES_FORMAT)?;
        let dim = meta.require_u64("dim")? as usize;
        let n = meta.require_u64("num_vectors")? as usize;
        let q = meta.require_u64("num_queries")? as usize;
        let vectors = read_vector_file(&meta.require_path("vectors")?, dim, n)?;
        let offsets = read_exact_u64s(&meta.require_path("query_offsets")?, q + 1)?;
        let ids = format::read_lines(&meta.require_path("query_ids")?)?;
        if ids.len() != q {
            return Err(Error::MalformedMetadata {
                path: meta_path,
                reason: format!("{} query ids for {q} queries", ids.len()),
            });
        }
        QuerySet::new(dim, ids, vectors, offsets, max_tokens, policy)
    }
}

/// Relevance judgments: query id -> doc id -> grade (>= 1).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn insert(&mut self, query: impl Into<String>, doc: impl Into<String>, grade: u32) {
        self.judgments
            .entry(query.into())
            .or_default()
            .insert(doc.into(), grade);
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut qrels = Qrels::default();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let err = |reason: &str| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                reason: reason.to_string(),
            };
            if fields.len() != 3 {
                return Err(err("expected `query_id<TAB>doc_id<TAB>grade`"));
            }
            let grade: u32 = fields[2].trim().parse().map_err(|_| err("grade is not an integer"))?;
            if grade == 0 {
                // grade 0 marks a judged non-relevant document
                continue;
            }
            qrels.insert(fields[0].trim(), fields[1].trim(), grade);
        }
        Ok(qrels)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Qrels::parse(path, &text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (q, docs) in &self.judgments {
            for (d, g) in docs {
                let _ = writeln!(out, "{q}\t{d}\t{g}");
            }
        }
        format::write_file(path, out.as_bytes())
    }

    pub fn relevant(&self, query: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    /// Judged (query, doc) pairs whose doc id is not in the corpus.
    pub fn unknown_docs(&self, corpus: &TokenVectorCorpus) -> Vec<(String, String)> {
        let known: BTreeSet<String> = (0..corpus.num_docs()).map(|d| corpus.doc_label(d)).collect();
        let mut out = Vec::new();
        for (q, docs) in &self.judgments {
            for d in docs.keys() {
                if !known.contains(d) {
                    out.push((q.clone(), d.clone()));
                }
            }
        }
        out
    }
}

/// One query's ranking in a run file.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    pub docs: Vec<(String, f32)>,
}

/// A run: rankings in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Run {
    pub lists: Vec<RankedList>,
}

impl Run {
    pub fn push(&mut self, query_id: impl Into<String>, docs: Vec<(String, f32)>) {
        self.lists.push(RankedList {
            query_id: query_id.into(),
            docs,
        });
    }

    pub fn get(&self, query_id: &str) -> Option<&RankedList> {
        self.lists.iter().find(|l| l.query_id == query_id)
    }

    /// `query_id \t doc_id \t rank \t score`, ranks starting at 1.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for list in &self.lists {
            for (rank, (doc, score)) in list.docs.iter().enumerate() {
                let _ = writeln!(out, "{}\t{}\t{}\t{}", list.query_id, doc, rank + 1, score);
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        format::write_file(path, self.render().as_bytes())
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut lists: Vec<RankedList> = Vec::new();
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        let mut ranked: Vec<Vec<(u32, String, f32)>> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |reason: &str| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                reason: reason.to_string(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(err("expected `query_id<TAB>doc_id<TAB>rank<TAB>score`"));
            }
            let rank: u32 = fields[2].parse().map_err(|_| err("rank is not an integer"))?;
            let score: f32 = fields[3].parse().map_err(|_| err("score is not a number"))?;
            let slot = *index.entry(fields[0].to_string()).or_insert_with(|| {
                lists.push(RankedList {
                    query_id: fields[0].to_string(),
                    docs: Vec::new(),
                });
                ranked.push(Vec::new());
                lists.len() - 1
            });
            ranked[slot].push((rank, fields[1].to_string(), score));
        }
        for (list, mut entries) in lists.iter_mut().zip(ranked) {
            entries.sort_by_key(|e| e.0);
            list.docs = entries.into_iter().map(|(_, d, s)| (d, s)).collect();
        }
        Ok(Run { lists })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Run::parse(path, &text)
    }
}

fn file_stem(meta_path: &Path) -> String {
    meta_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".to_string())
}

fn resolve_meta(path: &Path, default_name: &str) -> PathBuf {
    if path.is_dir() {
        path.join(default_name)
    } else {
        path.to_path_buf()
    }
}

fn expect_format(meta: &Metadata, want: &str) -> Result<()> {
    let got = meta.require("format")?;
    if got != want {
        return Err(Error::MalformedMetadata {
            path: meta.path.clone(),
            reason: format!("format is `{got}`, expected `{want}`"),
        });
    }
    let version = meta.require_u64("version")?;
    if version != u64::from(format::FORMAT_VERSION) {
        return Err(Error::MalformedMetadata {
            path: meta.path.clone(),
            reason: format!("unsupported version {version}"),
        });
    }
    Ok(())
}

/// 16-byte header (magic, version, dim) followed by LE f32 rows.
pub fn write_vector_file(path: &Path, dim: usize, data: &[f32]) -> Result<()> {
    let mut w = ByteWriter::with_header(format::MAGIC_VECTORS);
    w.u32(dim as u32);
    w.f32s(data);
    format::write_file(path, &w.into_inner())
}

pub fn read_vector_file(path: &Path, dim: usize, rows: usize) -> Result<Vec<f32>> {
    let bytes = format::read_file(path)?;
    let mut r = ByteReader::with_header(&bytes, path, format::MAGIC_VECTORS)?;
    let stored_dim = r.u32()? as usize;
    if stored_dim != dim {
        return Err(r.header_err(format!("header dim {stored_dim} != metadata dim {dim}")));
    }
    let expected = 16 + (rows as u64) * (dim as u64) * 4;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    r.f32s(rows * dim)
}

fn read_exact_u32s(path: &Path, n: usize) -> Result<Vec<u32>> {
    let bytes = format::read_file(path)?;
    if bytes.len() != n * 4 {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected: (n * 4) as u64,
            actual: bytes.len() as u64,
        });
    }
    ByteReader::new(&bytes, path).u32s(n)
}

fn read_exact_u64s(path: &Path, n: usize) -> Result<Vec<u64>> {
    let bytes = format::read_file(path)?;
    if bytes.len() != n * 8 {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected: (n * 8) as u64,
            actual: bytes.len() as u64,
        });
    }
    ByteReader::new(&bytes, path).u64s(n)
}

fn write_id_file(path: &Path, ids: &[String]) -> Result<()> {
    let mut out = String::new();
    for id in ids {
        out.push_str(id);
        out.push('\n');
    }
    format::write_file(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_rows(rows: &[[f32; 4]]) -> Vec<f32> {
        let mut v: Vec<f32> = rows.iter().flatten().copied().collect();
        kernels::normalize_rows(&mut v, 4);
        v
    }

    fn tiny() -> TokenVectorCorpus {
        let v = unit_rows(&[
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [1.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 1.0],
        ]);
        TokenVectorCorpus::new(4, 10, v, vec![7, 7, 3, 1, 3], vec![0, 3, 5], NormPolicy::Validate)
            .unwrap()
    }

    #[test]
    fn minimal_corpus_loads() {
        let c = tiny();
        assert_eq!(c.num_docs(), 2);
        assert_eq!(c.num_vectors(), 5);
        assert_eq!(c.doc_rows(1), 3..5);
    }

    #[test]
    fn save_load_roundtrip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let c = tiny().with_doc_ids(vec!["a".into(), "b".into()]).unwrap();
        let meta = dir.path().join("corpus.meta");
        c.save(&meta).unwrap();
        let back = load_corpus(&meta).unwrap();
        assert_eq!(back, c);
        let back_dir = load_corpus(dir.path()).unwrap();
        assert_eq!(back_dir.doc_label(1), "b");
    }

    #[test]
    fn truncated_payload_is_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let meta = dir.path().join("corpus.meta");
        tiny().save(&meta).unwrap();
        let vec_path = dir.path().join("corpus.vec");
        let bytes = std::fs::read(&vec_path).unwrap();
        std::fs::write(&vec_path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(load_corpus(&meta), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn corrupt_header_is_named_error() {
        let dir = tempfile::tempdir().unwrap();
        let meta = dir.path().join("corpus.meta");
        tiny().save(&meta).unwrap();
        let vec_path = dir.path().join("corpus.vec");
        let mut bytes = std::fs::read(&vec_path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&vec_path, &bytes).unwrap();
        assert!(matches!(load_corpus(&meta), Err(Error::MalformedHeader { .. })));
    }

    #[test]
    fn non_monotone_offsets_rejected() {
        let v = unit_rows(&[[1.0, 0.0, 0.0, 0.0]; 5]);
        let err = TokenVectorCorpus::new(4, 10, v, vec![1; 5], vec![0, 4, 3, 5], NormPolicy::Validate);
        assert!(matches!(err, Err(Error::NonMonotoneOffsets { position: 2 })));
    }

    #[test]
    fn empty_document_rejected() {
        let v = unit_rows(&[[1.0, 0.0, 0.0, 0.0]; 2]);
        let err = TokenVectorCorpus::new(4, 10, v, vec![1; 2], vec![0, 0, 2], NormPolicy::Validate);
        assert!(matches!(err, Err(Error::EmptyDocument { doc: 0 })));
    }

    #[test]
    fn norm_validation_and_renormalize() {
        let v = vec![2.0, 0.0, 0.0, 0.0];
        let err = TokenVectorCorpus::new(4, 2, v.clone(), vec![0], vec![0, 1], NormPolicy::Validate);
        assert!(matches!(err, Err(Error::NotNormalized { .. })));
        let c = TokenVectorCorpus::new(4, 2, v, vec![0], vec![0, 1], NormPolicy::Renormalize).unwrap();
        assert_eq!(c.vector(0), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn token_out_of_vocab_rejected() {
        let v = unit_rows(&[[1.0, 0.0, 0.0, 0.0]]);
        let err = TokenVectorCorpus::new(4, 3, v, vec![3], vec![0, 1], NormPolicy::Validate);
        assert!(matches!(err, Err(Error::TokenOutOfRange { token: 3, .. })));
    }

    #[test]
    fn histogram_counts() {
        let v = unit_rows(&[[1.0, 0.0, 0.0, 0.0]; 3]);
        let c = TokenVectorCorpus::new(4, 8, v, vec![7, 7, 3], vec![0, 3], NormPolicy::Validate).unwrap();
        let h = token_histogram(&c);
        assert_eq!(h, BTreeMap::from([(7, 2), (3, 1)]));
        assert_eq!(h.values().sum::<u64>(), 3);
        assert!((top_k_share(&c, 1) - 2.0 / 3.0).abs() < 1e-12);
        let idx = c.token_index();
        assert_eq!(idx.rows_of(7), &[0, 1]);
        assert_eq!(idx.rows_of(3), &[2]);
        assert!(idx.rows_of(5).is_empty());
    }

    #[test]
    fn query_set_limits() {
        let v = unit_rows(&[[1.0, 0.0, 0.0, 0.0]; 3]);
        let err = QuerySet::new(4, vec!["q".into()], v.clone(), vec![0, 3], 2, NormPolicy::Validate);
        assert!(matches!(err, Err(Error::QueryLength { len: 3, .. })));
        let qs = QuerySet::new(4, vec!["q1".into(), "q2".into()], v, vec![0, 1, 3], 32, NormPolicy::Validate)
            .unwrap();
        assert_eq!(qs.get(1).len(), 2);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("queries.meta");
        qs.save(&p).unwrap();
        assert_eq!(QuerySet::load(&p, 32, NormPolicy::Validate).unwrap(), qs);
    }

    #[test]
    fn qrels_flag_unknown_docs() {
        let text = "q1\t0\t1\nq1\t9\t2\nq2\t1\t0\n";
        let q = Qrels::parse(Path::new("qrels"), text).unwrap();
        assert_eq!(q.len(), 1);
        let unknown = q.unknown_docs(&tiny());
        assert_eq!(unknown, vec![("q1".to_string(), "9".to_string())]);
        assert!(Qrels::parse(Path::new("qrels"), "q1\t0\n").is_err());
    }

    #[test]
    fn run_roundtrip() {
        let mut run = Run::default();
        run.push("q1", vec![("5".into(), 1.5), ("2".into(), 0.25)]);
        run.push("q0", vec![("1".into(), -0.5)]);
        let text = run.render();
        assert_eq!(text, "q1\t5\t1\t1.5\nq1\t2\t2\t0.25\nq0\t1\t1\t-0.5\n");
        assert_eq!(Run::parse(Path::new("run"), &text).unwrap(), run);
    }
}
