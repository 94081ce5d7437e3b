//! Navigable graph over the centroid set and per-centroid document lists.

pub mod graph;
pub mod lists;

pub use graph::{exhaustive_top_k, CentroidGraph, GraphParams, Scored};
pub use lists::InvertedLists;

use crate::error::Result;
use crate::format::{ByteReader, ByteWriter};

/// Content hashes of the codebook and compressed corpus a graph or list
/// file was built against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ComponentRefs {
    pub codebook: [u8; 32],
    pub compressed: [u8; 32],
}

impl ComponentRefs {
    pub(crate) fn write(&self, w: &mut ByteWriter) {
        w.bytes(&self.codebook);
        w.bytes(&self.compressed);
    }

    pub(crate) fn read(r: &mut ByteReader<'_>) -> Result<Self> {
        let mut refs = ComponentRefs::default();
        refs.codebook.copy_from_slice(r.take(32)?);
        refs.compressed.copy_from_slice(r.take(32)?);
        Ok(refs)
    }
}
