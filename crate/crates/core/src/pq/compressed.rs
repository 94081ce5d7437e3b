use std::path::Path;

use rayon::prelude::*;

use super::codec::{residual_into, PqCodec};
use crate::corpus::TokenVectorCorpus;
use crate::error::{Error, Result};
use crate::format::{self, ByteReader, ByteWriter};
use crate::tac::Assignment;

/// Words (4 bytes) occupied by a record of `n` tokens with `m` code bytes each.
pub fn record_words(n: usize, m: usize) -> usize {
    n + (n * m).div_ceil(4) + n
}

/// Borrowed view of one document record.
#[derive(Debug, Clone, Copy)]
pub struct DocRecord<'a> {
    pub centroid_ids: &'a [u32],
    /// `n_d x M`, token-major.
    pub codes: &'a [u8],
    pub norms: &'a [f32],
}

impl DocRecord<'_> {
    pub fn len(&self) -> usize {
        self.centroid_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroid_ids.is_empty()
    }

    pub fn token_codes(&self, j: usize) -> &[u8] {
        let m = self.codes.len() / self.len().max(1);
        &self.codes[j * m..(j + 1) * m]
    }
}

/// Per-document records stored back to back in one word-aligned buffer:
/// centroid ids, then codes (zero padded to a word boundary), then norms.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedCorpus {
    subspaces: usize,
    doc_lens: Vec<u32>,
    /// Word offsets, `num_docs + 1` entries.
    doc_offsets: Vec<u64>,
    words: Vec<u32>,
}

impl CompressedCorpus {
    /// Assembles records from per-document `(centroid ids, codes, norms)`.
    pub fn from_records<'a, I>(subspaces: usize, docs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [u32], &'a [u8], &'a [f32])>,
    {
        let mut out = CompressedCorpus {
            subspaces,
            doc_lens: Vec::new(),
            doc_offsets: vec![0],
            words: Vec::new(),
        };
        for (ids, codes, norms) in docs {
            out.push(ids, codes, norms)?;
        }
        Ok(out)
    }

    fn push(&mut self, ids: &[u32], codes: &[u8], norms: &[f32]) -> Result<()> {
        let n = ids.len();
        let doc = self.doc_lens.len();
        if codes.len() != n * self.subspaces || norms.len() != n {
            return Err(Error::CorruptRecord {
                doc,
                reason: format!(
                    "{n} ids, {} code bytes and {} norms for {} subspaces",
                    codes.len(),
                    norms.len(),
                    self.subspaces
                ),
            });
        }
        self.words.extend_from_slice(ids);
        let code_words = (n * self.subspaces).div_ceil(4);
        let start = self.words.len();
        self.words.resize(start + code_words, 0);
        bytemuck::cast_slice_mut::<u32, u8>(&mut self.words[start..])[..codes.len()].copy_from_slice(codes);
        self.words.extend(norms.iter().map(|r| r.to_bits()));
        self.doc_lens.push(n as u32);
        self.doc_offsets.push(self.words.len() as u64);
        Ok(())
    }

    pub fn subspaces(&self) -> usize {
        self.subspaces
    }

    pub fn num_docs(&self) -> usize {
        self.doc_lens.len()
    }

    pub fn num_vectors(&self) -> usize {
        self.doc_lens.iter().map(|&n| n as usize).sum()
    }

    pub fn doc_len(&self, doc: usize) -> usize {
        self.doc_lens[doc] as usize
    }

    /// Payload size in bytes, offset and length tables excluded.
    pub fn payload_bytes(&self) -> usize {
        self.words.len() * 4
    }

    pub fn record(&self, doc: usize) -> Result<DocRecord<'_>> {
        if doc >= self.num_docs() {
            return Err(Error::CorruptRecord {
                doc,
                reason: format!("document id beyond {} records", self.num_docs()),
            });
        }
        let n = self.doc_lens[doc] as usize;
        let (a, b) = (self.doc_offsets[doc] as usize, self.doc_offsets[doc + 1] as usize);
        if b - a != record_words(n, self.subspaces) || b > self.words.len() {
            return Err(Error::CorruptRecord {
                doc,
                reason: format!("record spans {} words, {n} tokens need {}", b - a, record_words(n, self.subspaces)),
            });
        }
        let w = &self.words[a..b];
        let code_words = (n * self.subspaces).div_ceil(4);
        Ok(DocRecord {
            centroid_ids: &w[..n],
            codes: &bytemuck::cast_slice::<u32, u8>(&w[n..n + code_words])[..n * self.subspaces],
            norms: bytemuck::cast_slice(&w[n + code_words..]),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_header(format::MAGIC_COMPRESSED);
        w.u32(self.subspaces as u32);
        w.u64(self.num_docs() as u64);
        w.u64(self.words.len() as u64);
        w.u32s(&self.doc_lens);
        w.u64s(&self.doc_offsets);
        w.u32s(&self.words);
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = ByteReader::with_header(bytes, path, format::MAGIC_COMPRESSED)?;
        let subspaces = r.u32()? as usize;
        let docs = r.u64()? as usize;
        let words = r.u64()? as usize;
        if subspaces == 0 {
            return Err(r.header_err("zero subspaces"));
        }
        let expected = (r.position() + docs * 4 + (docs + 1) * 8 + words * 4) as u64;
        if bytes.len() as u64 != expected {
            return Err(Error::SizeMismatch {
                path: path.to_path_buf(),
                expected,
                actual: bytes.len() as u64,
            });
        }
        let doc_lens = r.u32s(docs)?;
        let doc_offsets = r.u64s(docs + 1)?;
        let words = r.u32s(words)?;
        if doc_offsets[0] != 0 || *doc_offsets.last().unwrap() != words.len() as u64 {
            return Err(Error::InvalidOffsets("record offsets must span the payload".into()));
        }
        for d in 0..docs {
            if doc_offsets[d + 1] < doc_offsets[d] {
                return Err(Error::NonMonotoneOffsets { position: d + 1 });
            }
            let span = (doc_offsets[d + 1] - doc_offsets[d]) as usize;
            if span != record_words(doc_lens[d] as usize, subspaces) {
                return Err(Error::CorruptRecord {
                    doc: d,
                    reason: "record length disagrees with token count".into(),
                });
            }
        }
        Ok(CompressedCorpus {
            subspaces,
            doc_lens,
            doc_offsets,
            words,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        format::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        CompressedCorpus::from_bytes(&format::read_file(path)?, path)
    }
}

/// Encodes every corpus vector as centroid id, residual norm and the PQ
/// codes of the unit residual. Zero residuals get all-zero codes.
pub fn encode(
    corpus: &TokenVectorCorpus,
    assignment: &Assignment,
    centroids: &[f32],
    codec: &PqCodec,
) -> Result<CompressedCorpus> {
    let dim = corpus.dim();
    if codec.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: codec.dim(),
        });
    }
    if assignment.len() != corpus.num_vectors() {
        return Err(Error::Precondition(format!(
            "assignment covers {} of {} vectors",
            assignment.len(),
            corpus.num_vectors()
        )));
    }
    let m = codec.subspaces();
    let per_doc: Vec<Vec<u8>> = (0..corpus.num_docs())
        .into_par_iter()
        .map(|d| {
            let rows = corpus.doc_rows(d);
            let mut codes = vec![0u8; rows.len() * m];
            let mut r = vec![0f32; dim];
            for (j, row) in rows.enumerate() {
                let rho = assignment.residual_norms[row];
                if rho == 0.0 {
                    continue;
                }
                let c = assignment.centroid_ids[row] as usize;
                residual_into(corpus.vector(row), &centroids[c * dim..(c + 1) * dim], &mut r);
                let inv = 1.0 / rho;
                r.iter_mut().for_each(|x| *x *= inv);
                codec.encode_into(&r, &mut codes[j * m..(j + 1) * m]);
            }
            codes
        })
        .collect();
    CompressedCorpus::from_records(
        m,
        per_doc.iter().enumerate().map(|(d, codes)| {
            let rows = corpus.doc_rows(d);
            (
                &assignment.centroid_ids[rows.clone()],
                codes.as_slice(),
                &assignment.residual_norms[rows],
            )
        }),
    )
}

/// Reconstructs `c + rho * decode(codes)` for every token of a record.
pub fn decompress(record: &DocRecord<'_>, centroids: &[f32], codec: &PqCodec) -> Vec<f32> {
    let dim = codec.dim();
    let mut out = vec![0f32; record.len() * dim];
    let mut r = vec![0f32; dim];
    for j in 0..record.len() {
        let c = record.centroid_ids[j] as usize;
        codec.decode_into(record.token_codes(j), &mut r);
        let rho = record.norms[j];
        for ((o, cv), rv) in out[j * dim..(j + 1) * dim].iter_mut().zip(&centroids[c * dim..(c + 1) * dim]).zip(&r) {
            *o = cv + rho * rv;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_layout_pads_codes_to_words() {
        assert_eq!(record_words(3, 2), 3 + 2 + 3);
        assert_eq!(record_words(1, 32), 1 + 8 + 1);
        let ids = [5u32, 9, 2];
        let codes = [1u8, 2, 3, 4, 5, 6];
        let norms = [0.5f32, 0.0, 1.25];
        let cc = CompressedCorpus::from_records(2, [(&ids[..], &codes[..], &norms[..])]).unwrap();
        let rec = cc.record(0).unwrap();
        assert_eq!(rec.centroid_ids, &ids);
        assert_eq!(rec.codes, &codes);
        assert_eq!(rec.norms, &norms);
        assert_eq!(rec.token_codes(1), &[3, 4]);
        assert_eq!(cc.payload_bytes(), 8 * 4);
    }

    #[test]
    fn file_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let a = ([1u32, 2], [7u8, 8, 9, 10, 11, 12], [0.1f32, 0.2]);
        let b = ([3u32], [1u8, 2, 3], [0.3f32]);
        let cc = CompressedCorpus::from_records(3, [(&a.0[..], &a.1[..], &a.2[..]), (&b.0[..], &b.1[..], &b.2[..])])
            .unwrap();
        let p = dir.path().join("c.bin");
        cc.save(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let back = CompressedCorpus::load(&p).unwrap();
        assert_eq!(back, cc);
        assert_eq!(back.to_bytes(), bytes);
        std::fs::write(&p, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(CompressedCorpus::load(&p), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn inconsistent_record_rejected() {
        let r = CompressedCorpus::from_records(2, [(&[1u32][..], &[0u8][..], &[1.0f32][..])]);
        assert!(matches!(r, Err(Error::CorruptRecord { doc: 0, .. })));
    }

    #[test]
    fn zero_norm_reconstructs_centroid() {
        let codec = PqCodec::from_parts(2, 1, 1, vec![0.3, 0.4, -1.0, 2.0]).unwrap();
        let cc = CompressedCorpus::from_records(1, [(&[0u32][..], &[1u8][..], &[0.0f32][..])]).unwrap();
        let out = decompress(&cc.record(0).unwrap(), &[0.6, 0.8], &codec);
        assert_eq!(out, vec![0.6, 0.8]);
    }
}
