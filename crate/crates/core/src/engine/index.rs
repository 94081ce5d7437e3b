use std::fs;
use std::path::{Path, PathBuf};

use crate::centroid_index::{CentroidGraph, ComponentRefs, GraphParams, InvertedLists};
use crate::corpus::TokenVectorCorpus;
use crate::error::{Error, Result};
use crate::format::{self, Metadata};
use crate::pq::{self, CompressedCorpus, PqCodec, PqConfig};
use crate::tac::{train::thread_pool, Assignment, TokenPartitionedCodebook};

pub const CODEBOOK_FILE: &str = "codebook.bin";
pub const CODEC_FILE: &str = "codec.bin";
pub const COMPRESSED_FILE: &str = "compressed.bin";
pub const GRAPH_FILE: &str = "graph.bin";
pub const LISTS_FILE: &str = "lists.bin";
pub const DOC_IDS_FILE: &str = "doc_ids.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";

const COMPONENTS: [&str; 6] = [CODEBOOK_FILE, CODEC_FILE, COMPRESSED_FILE, GRAPH_FILE, LISTS_FILE, DOC_IDS_FILE];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildParams {
    pub pq: PqConfig,
    pub graph: GraphParams,
    /// Residuals sampled for codec training.
    pub pq_sample: usize,
    pub threads: usize,
}

impl Default for BuildParams {
    fn default() -> Self {
        BuildParams {
            pq: PqConfig::default(),
            graph: GraphParams::default(),
            pq_sample: 1 << 16,
            threads: 1,
        }
    }
}

/// Everything a query needs: centroids, codec, compressed records, the
/// centroid graph and the inverted lists.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchIndex {
    codebook: TokenPartitionedCodebook,
    codec: PqCodec,
    compressed: CompressedCorpus,
    graph: CentroidGraph,
    lists: InvertedLists,
    doc_ids: Vec<String>,
}

/// Sizes of the index components in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexSizes {
    pub centroid_ids: usize,
    pub codes: usize,
    pub norms: usize,
    pub graph: usize,
    pub postings: usize,
}

impl SearchIndex {
    pub fn from_parts(
        codebook: TokenPartitionedCodebook,
        codec: PqCodec,
        compressed: CompressedCorpus,
        graph: CentroidGraph,
        lists: InvertedLists,
        doc_ids: Vec<String>,
    ) -> Result<Self> {
        let dim = codebook.dim();
        if codec.dim() != dim || graph.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: if codec.dim() != dim { codec.dim() } else { graph.dim() },
            });
        }
        if compressed.subspaces() != codec.subspaces() {
            return Err(Error::Precondition("compressed corpus and codec disagree on subspaces".into()));
        }
        if graph.len() != codebook.len() || lists.num_lists() != codebook.len() {
            return Err(Error::Precondition(format!(
                "graph has {} nodes and {} lists for {} centroids",
                graph.len(),
                lists.num_lists(),
                codebook.len()
            )));
        }
        if doc_ids.len() != compressed.num_docs() {
            return Err(Error::Precondition(format!(
                "{} document ids for {} records",
                doc_ids.len(),
                compressed.num_docs()
            )));
        }
        Ok(SearchIndex {
            codebook,
            codec,
            compressed,
            graph,
            lists,
            doc_ids,
        })
    }

    /// Trains the codec on sampled residuals, encodes the corpus and builds
    /// the graph and lists.
    pub fn build(
        corpus: &TokenVectorCorpus,
        codebook: TokenPartitionedCodebook,
        assignment: &Assignment,
        params: &BuildParams,
    ) -> Result<Self> {
        let dim = corpus.dim();
        let pool = thread_pool(params.threads)?;
        let (codec, compressed) = pool.install(|| -> Result<_> {
            let sample = pq::residual_sample(
                corpus.vectors(),
                &assignment.centroid_ids,
                codebook.centroids(),
                dim,
                params.pq_sample,
                params.pq.seed,
            );
            let codec = pq::train_pq(&sample, dim, &params.pq)?;
            let compressed = pq::encode(corpus, assignment, codebook.centroids(), &codec)?;
            Ok((codec, compressed))
        })?;
        log::info!("encoded {} vectors into {} bytes", corpus.num_vectors(), compressed.payload_bytes());
        let graph = CentroidGraph::build(codebook.centroids(), dim, &params.graph)?;
        let lists = InvertedLists::build(&assignment.centroid_ids, corpus.doc_offsets(), codebook.len())?;
        let doc_ids = (0..corpus.num_docs()).map(|d| corpus.doc_label(d)).collect();
        SearchIndex::from_parts(codebook, codec, compressed, graph, lists, doc_ids)
    }

    pub fn dim(&self) -> usize {
        self.codebook.dim()
    }

    pub fn codebook(&self) -> &TokenPartitionedCodebook {
        &self.codebook
    }

    pub fn codec(&self) -> &PqCodec {
        &self.codec
    }

    pub fn compressed(&self) -> &CompressedCorpus {
        &self.compressed
    }

    pub fn graph(&self) -> &CentroidGraph {
        &self.graph
    }

    pub fn lists(&self) -> &InvertedLists {
        &self.lists
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn sizes(&self) -> IndexSizes {
        let n = self.compressed.num_vectors();
        let refs = ComponentRefs::default();
        IndexSizes {
            centroid_ids: 4 * n,
            codes: self.codec.code_bytes() * n,
            norms: 4 * n,
            graph: self.graph.to_bytes(&refs).len(),
            postings: self.lists.to_bytes(&refs).len(),
        }
    }

    fn component_bytes(&self) -> Vec<(&'static str, Vec<u8>)> {
        let codebook = self.codebook.to_bytes();
        let compressed = self.compressed.to_bytes();
        let refs = ComponentRefs {
            codebook: format::sha256_raw(&codebook),
            compressed: format::sha256_raw(&compressed),
        };
        let mut ids = String::new();
        for id in &self.doc_ids {
            ids.push_str(id);
            ids.push('\n');
        }
        vec![
            (CODEBOOK_FILE, codebook),
            (CODEC_FILE, self.codec.to_bytes()),
            (COMPRESSED_FILE, compressed),
            (GRAPH_FILE, self.graph.to_bytes(&refs)),
            (LISTS_FILE, self.lists.to_bytes(&refs)),
            (DOC_IDS_FILE, ids.into_bytes()),
        ]
    }

    /// Writes every component plus a manifest of content hashes. The files
    /// are staged in a sibling directory that replaces `dir` only once
    /// complete; on failure the staging directory is removed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let staging = staging_path(dir);
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        }
        let result = self.write_all(&staging).and_then(|()| {
            if dir.exists() {
                fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            fs::rename(&staging, dir).map_err(|e| Error::io(dir, e))
        });
        if result.is_err() {
            let _ = fs::remove_dir_all(&staging);
        }
        result
    }

    fn write_all(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = Metadata::new(dir.join(MANIFEST_FILE));
        manifest.set("format", "mvr-index");
        manifest.set("version", format::FORMAT_VERSION);
        manifest.set("dim", self.dim());
        manifest.set("centroids", self.codebook.len());
        manifest.set("documents", self.num_docs());
        manifest.set("vectors", self.compressed.num_vectors());
        manifest.set("subspaces", self.codec.subspaces());
        manifest.set("bits", self.codec.bits());
        for (name, bytes) in self.component_bytes() {
            format::write_file(&dir.join(name), &bytes)?;
            manifest.set(&format!("sha256.{name}"), format::sha256_hex(&bytes));
        }
        manifest.save()
    }

    /// Loads and cross-checks an index directory. Any component whose hash
    /// disagrees with the manifest or with the references embedded in the
    /// graph and list files is rejected.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        if !manifest_path.exists() {
            return Err(Error::MissingComponent(manifest_path));
        }
        let manifest = Metadata::load(&manifest_path)?;
        if manifest.require("format")? != "mvr-index" {
            return Err(Error::MalformedMetadata {
                path: manifest_path,
                reason: "not an index manifest".into(),
            });
        }
        if let Some(missing) = COMPONENTS.iter().map(|n| dir.join(n)).find(|p| !p.exists()) {
            return Err(Error::MissingComponent(missing));
        }
        let mut bytes = Vec::with_capacity(COMPONENTS.len());
        for name in COMPONENTS {
            let path = dir.join(name);
            let b = format::read_file(&path)?;
            let expected = manifest.require(&format!("sha256.{name}"))?;
            let actual = format::sha256_hex(&b);
            if expected != actual {
                return Err(Error::Integrity {
                    component: name.to_string(),
                    expected: expected.to_string(),
                    actual,
                });
            }
            bytes.push((path, b));
        }
        let codebook = TokenPartitionedCodebook::from_bytes(&bytes[0].1, &bytes[0].0)?;
        let codec = PqCodec::from_bytes(&bytes[1].1, &bytes[1].0)?;
        let compressed = CompressedCorpus::from_bytes(&bytes[2].1, &bytes[2].0)?;
        let (graph, graph_refs) = CentroidGraph::from_bytes(&bytes[3].1, &bytes[3].0)?;
        let (lists, list_refs) = InvertedLists::from_bytes(&bytes[4].1, &bytes[4].0)?;
        let want = ComponentRefs {
            codebook: format::sha256_raw(&bytes[0].1),
            compressed: format::sha256_raw(&bytes[2].1),
        };
        for (name, refs) in [(GRAPH_FILE, graph_refs), (LISTS_FILE, list_refs)] {
            if refs != want {
                return Err(Error::Integrity {
                    component: name.to_string(),
                    expected: format!("{}/{}", hex::encode(want.codebook), hex::encode(want.compressed)),
                    actual: format!("{}/{}", hex::encode(refs.codebook), hex::encode(refs.compressed)),
                });
            }
        }
        let text = String::from_utf8(bytes[5].1.clone()).map_err(|_| Error::Parse {
            path: bytes[5].0.clone(),
            line: 0,
            reason: "document ids are not UTF-8".into(),
        })?;
        let doc_ids = text.lines().map(str::to_string).collect();
        SearchIndex::from_parts(codebook, codec, compressed, graph, lists, doc_ids)
    }
}

fn staging_path(dir: &Path) -> PathBuf {
    let mut name = dir.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    dir.with_file_name(name)
}
