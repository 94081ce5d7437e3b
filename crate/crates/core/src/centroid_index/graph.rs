//! Hierarchical navigable small-world graph over unit-norm centroids, scored
//! by inner product.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashSet;

use super::ComponentRefs;
use crate::error::{Error, Result};
use crate::format::{self, ByteReader, ByteWriter};
use crate::kernels;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphParams {
    /// Neighbour cap on upper layers; layer 0 allows twice as many.
    pub max_neighbors: usize,
    pub ef_construction: usize,
    pub seed: u64,
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams {
            max_neighbors: 32,
            ef_construction: 1500,
            seed: 0,
        }
    }
}

/// A scored node. Orders by score, then prefers the lower id, so `max` is
/// the best candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub score: f32,
    pub id: u32,
}

impl Eq for Scored {}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score).then(other.id.cmp(&self.id))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CentroidGraph {
    dim: usize,
    max_neighbors: usize,
    ef_construction: usize,
    entry: u32,
    max_level: usize,
    /// `links[node][level]`, levels `0..=level(node)`.
    links: Vec<Vec<Vec<u32>>>,
}

struct Builder<'a> {
    vectors: &'a [f32],
    dim: usize,
    graph: CentroidGraph,
}

impl Builder<'_> {
    fn vec(&self, id: u32) -> &[f32] {
        &self.vectors[id as usize * self.dim..(id as usize + 1) * self.dim]
    }

    fn sim(&self, a: u32, b: u32) -> f32 {
        kernels::dot(self.vec(a), self.vec(b))
    }

    fn cap(&self, level: usize) -> usize {
        if level == 0 {
            2 * self.graph.max_neighbors
        } else {
            self.graph.max_neighbors
        }
    }

    /// Keeps a candidate only if it is closer to the base than to every
    /// neighbour kept so far. `candidates` is sorted best first.
    fn select(&self, candidates: &[Scored], m: usize) -> Vec<u32> {
        let mut kept: Vec<u32> = Vec::with_capacity(m);
        for c in candidates {
            if kept.len() >= m {
                break;
            }
            if kept.iter().all(|&r| c.score > self.sim(c.id, r)) {
                kept.push(c.id);
            }
        }
        kept
    }

    fn insert(&mut self, id: u32, level: usize, ef: usize) {
        let q = self.vec(id).to_vec();
        if self.graph.links.is_empty() {
            self.graph.links.push(vec![Vec::new(); level + 1]);
            self.graph.entry = id;
            self.graph.max_level = level;
            return;
        }
        self.graph.links.push(vec![Vec::new(); level + 1]);
        let mut ep = vec![self.graph.entry];
        for lc in (level + 1..=self.graph.max_level).rev() {
            let w = self.graph.search_layer(self.vectors, &q, &ep, 1, lc);
            ep = vec![w[0].id];
        }
        for lc in (0..=level.min(self.graph.max_level)).rev() {
            let w = self.graph.search_layer(self.vectors, &q, &ep, ef, lc);
            let neighbors = self.select(&w, self.graph.max_neighbors);
            for &n in &neighbors {
                self.graph.links[n as usize][lc].push(id);
                if self.graph.links[n as usize][lc].len() > self.cap(lc) {
                    let mut cands: Vec<Scored> = self.graph.links[n as usize][lc]
                        .iter()
                        .map(|&o| Scored { score: self.sim(n, o), id: o })
                        .collect();
                    cands.sort_unstable_by(|a, b| b.cmp(a));
                    let kept = self.select(&cands, self.cap(lc));
                    self.graph.links[n as usize][lc] = kept;
                }
            }
            self.graph.links[id as usize][lc] = neighbors;
            ep = w.iter().map(|s| s.id).collect();
        }
        if level > self.graph.max_level {
            self.graph.max_level = level;
            self.graph.entry = id;
        }
    }
}

impl CentroidGraph {
    /// Inserts centroids in id order on a single thread; the result depends
    /// only on the vectors and `params`.
    pub fn build(vectors: &[f32], dim: usize, params: &GraphParams) -> Result<Self> {
        if dim == 0 || !vectors.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: vectors.len(),
            });
        }
        let n = vectors.len() / dim;
        if n == 0 {
            return Err(Error::Precondition("graph needs at least one centroid".into()));
        }
        if n > u32::MAX as usize {
            return Err(Error::Precondition("too many centroids for 32-bit ids".into()));
        }
        if params.max_neighbors < 2 {
            return Err(Error::Precondition("graph needs at least 2 neighbours per node".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let norm = 1.0 / (params.max_neighbors as f64).ln();
        let mut b = Builder {
            vectors,
            dim,
            graph: CentroidGraph {
                dim,
                max_neighbors: params.max_neighbors,
                ef_construction: params.ef_construction,
                entry: 0,
                max_level: 0,
                links: Vec::with_capacity(n),
            },
        };
        let ef = params.ef_construction.max(params.max_neighbors);
        for id in 0..n as u32 {
            let u: f64 = 1.0 - rng.gen::<f64>();
            let level = ((-u.ln() * norm).floor() as usize).min(u8::MAX as usize);
            b.insert(id, level, ef);
        }
        Ok(b.graph)
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry_point(&self) -> u32 {
        self.entry
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    pub fn max_neighbors(&self) -> usize {
        self.max_neighbors
    }

    pub fn level(&self, node: u32) -> usize {
        self.links[node as usize].len() - 1
    }

    pub fn neighbors(&self, node: u32, level: usize) -> &[u32] {
        self.links[node as usize].get(level).map_or(&[], Vec::as_slice)
    }

    /// Total directed edges across all layers.
    pub fn edge_count(&self) -> usize {
        self.links.iter().flatten().map(Vec::len).sum()
    }

    fn search_layer(&self, vectors: &[f32], q: &[f32], entry: &[u32], ef: usize, level: usize) -> Vec<Scored> {
        let dim = self.dim;
        let score = |id: u32| kernels::dot(q, &vectors[id as usize * dim..(id as usize + 1) * dim]);
        let mut visited: FxHashSet<u32> = entry.iter().copied().collect();
        let mut candidates: BinaryHeap<Scored> = BinaryHeap::new();
        let mut results: BinaryHeap<Reverse<Scored>> = BinaryHeap::new();
        for &e in entry {
            let s = Scored { score: score(e), id: e };
            candidates.push(s);
            results.push(Reverse(s));
            if results.len() > ef {
                results.pop();
            }
        }
        while let Some(c) = candidates.pop() {
            let worst = results.peek().unwrap().0;
            if c < worst && results.len() >= ef {
                break;
            }
            for &n in self.neighbors(c.id, level) {
                if !visited.insert(n) {
                    continue;
                }
                let s = Scored { score: score(n), id: n };
                if results.len() < ef || s > results.peek().unwrap().0 {
                    candidates.push(s);
                    results.push(Reverse(s));
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        let mut out: Vec<Scored> = results.into_iter().map(|r| r.0).collect();
        out.sort_unstable_by(|a, b| b.cmp(a));
        out
    }

    /// Top-`k` centroids by inner product with `q`, best first, ties to the
    /// lower id. Scans every centroid when `ef` reaches the node count.
    pub fn search(&self, vectors: &[f32], q: &[f32], k: usize, ef: usize) -> Vec<Scored> {
        if k == 0 {
            return Vec::new();
        }
        let ef = ef.max(k);
        if ef >= self.len() {
            return exhaustive_top_k(vectors, self.dim, q, k);
        }
        let mut ep = self.entry;
        for lc in (1..=self.max_level).rev() {
            ep = self.search_layer(vectors, q, &[ep], 1, lc)[0].id;
        }
        let mut out = self.search_layer(vectors, q, &[ep], ef, 0);
        out.truncate(k);
        out
    }

    /// Nodes reachable from the entry point through layer-0 edges.
    pub fn reachable_at_base(&self) -> usize {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![self.entry];
        seen[self.entry as usize] = true;
        let mut count = 1;
        while let Some(n) = stack.pop() {
            for &m in self.neighbors(n, 0) {
                if !seen[m as usize] {
                    seen[m as usize] = true;
                    count += 1;
                    stack.push(m);
                }
            }
        }
        count
    }

    pub fn to_bytes(&self, refs: &ComponentRefs) -> Vec<u8> {
        let mut w = ByteWriter::with_header(format::MAGIC_GRAPH);
        refs.write(&mut w);
        w.u32(self.dim as u32);
        w.u64(self.len() as u64);
        w.u32(self.max_neighbors as u32);
        w.u32(self.ef_construction as u32);
        w.u32(self.entry);
        w.u32(self.max_level as u32);
        for node in &self.links {
            w.u8((node.len() - 1) as u8);
            for level in node {
                w.u32(level.len() as u32);
                w.u32s(level);
            }
        }
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<(Self, ComponentRefs)> {
        let mut r = ByteReader::with_header(bytes, path, format::MAGIC_GRAPH)?;
        let refs = ComponentRefs::read(&mut r)?;
        let dim = r.u32()? as usize;
        let n = r.u64()? as usize;
        let max_neighbors = r.u32()? as usize;
        let ef_construction = r.u32()? as usize;
        let entry = r.u32()?;
        let max_level = r.u32()? as usize;
        if n == 0 || entry as usize >= n {
            return Err(r.header_err("entry point outside the graph"));
        }
        let mut links = Vec::with_capacity(n.min(r.remaining()));
        for _ in 0..n {
            let levels = r.u8()? as usize + 1;
            if levels > max_level + 1 {
                return Err(r.header_err("node level above graph maximum"));
            }
            let mut node = Vec::with_capacity(levels);
            for lc in 0..levels {
                let count = r.u32()? as usize;
                let cap = if lc == 0 { 2 * max_neighbors } else { max_neighbors };
                if count > cap {
                    return Err(r.header_err(format!("adjacency of {count} exceeds cap {cap}")));
                }
                let ids = r.u32s(count)?;
                if ids.iter().any(|&i| i as usize >= n) {
                    return Err(r.header_err("neighbour id outside the graph"));
                }
                node.push(ids);
            }
            links.push(node);
        }
        r.expect_end()?;
        if links[entry as usize].len() != max_level + 1 {
            return Err(r.header_err("entry point is not on the top level"));
        }
        let graph = CentroidGraph {
            dim,
            max_neighbors,
            ef_construction,
            entry,
            max_level,
            links,
        };
        Ok((graph, refs))
    }

    pub fn save(&self, path: &Path, refs: &ComponentRefs) -> Result<()> {
        format::write_file(path, &self.to_bytes(refs))
    }

    pub fn load(path: &Path) -> Result<(Self, ComponentRefs)> {
        CentroidGraph::from_bytes(&format::read_file(path)?, path)
    }
}

/// Linear scan over every centroid; the reference for graph search.
pub fn exhaustive_top_k(vectors: &[f32], dim: usize, q: &[f32], k: usize) -> Vec<Scored> {
    let mut all: Vec<Scored> = vectors
        .chunks_exact(dim)
        .enumerate()
        .map(|(i, c)| Scored {
            score: kernels::dot(q, c),
            id: i as u32,
        })
        .collect();
    let k = k.min(all.len());
    if k == 0 {
        return Vec::new();
    }
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, |a, b| b.cmp(a));
        all.truncate(k);
    }
    all.sort_unstable_by(|a, b| b.cmp(a));
    all
}
