use std::path::Path;

use super::ComponentRefs;
use crate::error::{Error, Result};
use crate::format::{self, ByteReader, ByteWriter};

/// For each centroid, the sorted ids of documents with at least one token
/// assigned to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvertedLists {
    offsets: Vec<u64>,
    docs: Vec<u32>,
}

impl InvertedLists {
    /// `centroid_ids` is the per-vector assignment, `doc_offsets` the corpus
    /// row offsets (`num_docs + 1` entries).
    pub fn build(centroid_ids: &[u32], doc_offsets: &[u64], num_centroids: usize) -> Result<Self> {
        if let Some(&bad) = centroid_ids.iter().find(|&&c| c as usize >= num_centroids) {
            return Err(Error::Precondition(format!(
                "centroid id {bad} outside a codebook of {num_centroids}"
            )));
        }
        let docs_of = || {
            doc_offsets
                .windows(2)
                .enumerate()
                .flat_map(|(d, w)| centroid_ids[w[0] as usize..w[1] as usize].iter().map(move |&c| (c, d as u32)))
        };
        // last document seen per centroid, offset by one so zero means none
        let mut last = vec![0u32; num_centroids];
        let mut counts = vec![0u64; num_centroids + 1];
        for (c, d) in docs_of() {
            if last[c as usize] != d + 1 {
                last[c as usize] = d + 1;
                counts[c as usize + 1] += 1;
            }
        }
        for i in 0..num_centroids {
            counts[i + 1] += counts[i];
        }
        let offsets = counts;
        let mut cursor = offsets.clone();
        let mut docs = vec![0u32; offsets[num_centroids] as usize];
        last.fill(0);
        for (c, d) in docs_of() {
            if last[c as usize] != d + 1 {
                last[c as usize] = d + 1;
                docs[cursor[c as usize] as usize] = d;
                cursor[c as usize] += 1;
            }
        }
        Ok(InvertedLists { offsets, docs })
    }

    pub fn num_lists(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn total_postings(&self) -> usize {
        self.docs.len()
    }

    pub fn list(&self, centroid: u32) -> &[u32] {
        let c = centroid as usize;
        &self.docs[self.offsets[c] as usize..self.offsets[c + 1] as usize]
    }

    /// Offsets and lengths in plain form, postings as LEB128 gaps.
    pub fn to_bytes(&self, refs: &ComponentRefs) -> Vec<u8> {
        let mut w = ByteWriter::with_header(format::MAGIC_LISTS);
        refs.write(&mut w);
        w.u64(self.num_lists() as u64);
        w.u64(self.docs.len() as u64);
        w.u64s(&self.offsets);
        for c in 0..self.num_lists() {
            let mut prev = None;
            for &d in self.list(c as u32) {
                w.varint(match prev {
                    None => u64::from(d),
                    Some(p) => u64::from(d - p),
                });
                prev = Some(d);
            }
        }
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<(Self, ComponentRefs)> {
        let mut r = ByteReader::with_header(bytes, path, format::MAGIC_LISTS)?;
        let refs = ComponentRefs::read(&mut r)?;
        let lists = r.u64()? as usize;
        let total = r.u64()? as usize;
        if lists.saturating_add(1).saturating_mul(8) > r.remaining() {
            return Err(Error::SizeMismatch {
                path: path.to_path_buf(),
                expected: (r.position() + (lists + 1) * 8) as u64,
                actual: bytes.len() as u64,
            });
        }
        let offsets = r.u64s(lists + 1)?;
        if offsets[0] != 0 || offsets[lists] != total as u64 {
            return Err(Error::InvalidOffsets("list offsets must span every posting".into()));
        }
        if let Some(p) = offsets.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::NonMonotoneOffsets { position: p + 1 });
        }
        let mut docs = Vec::with_capacity(total.min(r.remaining()));
        for c in 0..lists {
            let mut prev: Option<u64> = None;
            for _ in offsets[c]..offsets[c + 1] {
                let v = r.varint()?;
                let d = match prev {
                    None => v,
                    Some(_) if v == 0 => return Err(r.header_err(format!("repeated document in list {c}"))),
                    Some(p) => p + v,
                };
                let d32 = u32::try_from(d).map_err(|_| r.header_err("document id overflows 32 bits"))?;
                docs.push(d32);
                prev = Some(d);
            }
        }
        r.expect_end()?;
        Ok((InvertedLists { offsets, docs }, refs))
    }

    pub fn save(&self, path: &Path, refs: &ComponentRefs) -> Result<()> {
        format::write_file(path, &self.to_bytes(refs))
    }

    pub fn load(path: &Path) -> Result<(Self, ComponentRefs)> {
        InvertedLists::from_bytes(&format::read_file(path)?, path)
    }
}
