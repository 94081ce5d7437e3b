//! Effective run configuration: built-in defaults, overridden by a flat
//! `key = value` file, overridden by command-line flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use clap::Args;

use crate::centroid_index::GraphParams;
use crate::engine::{search::default_ef, BuildParams, SearchParams};
use crate::error::{Error, Result};
use crate::pq::PqConfig;
use crate::synth::SynthConfig;
use crate::tac::{AllocationParams, TrainConfig};

/// Every tunable parameter, as flags. Unset flags fall back to the config
/// file and then to the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct ParamArgs {
    /// Flat `key = value` config file
    #[arg(long, global = true)]
    pub config: Option<std::path::PathBuf>,
    /// Total centroid budget
    #[arg(long, global = true)]
    pub budget: Option<usize>,
    /// Tokens with fewer occurrences get a single centroid
    #[arg(long, global = true)]
    pub micro_below: Option<u64>,
    /// Tokens below this count (and not micro) get at most two centroids
    #[arg(long, global = true)]
    pub small_below: Option<u64>,
    /// Minimum centroids for an actively allocated token
    #[arg(long, global = true)]
    pub floor: Option<u64>,
    /// Minimum occurrences per centroid
    #[arg(long, global = true)]
    pub min_per_centroid: Option<u64>,
    /// Lloyd iterations
    #[arg(long, global = true)]
    pub iterations: Option<usize>,
    /// Seed for clustering, codec training, graph levels and synthesis
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// PQ subspaces
    #[arg(long, global = true)]
    pub subspaces: Option<usize>,
    /// Bits per PQ code
    #[arg(long, global = true)]
    pub bits: Option<u32>,
    /// Lloyd iterations for codec training
    #[arg(long, global = true)]
    pub pq_iterations: Option<usize>,
    /// Residuals sampled for codec training
    #[arg(long, global = true)]
    pub pq_sample: Option<usize>,
    /// Graph neighbours per node
    #[arg(long, global = true)]
    pub graph_neighbors: Option<usize>,
    /// Graph construction beam
    #[arg(long, global = true)]
    pub ef_construction: Option<usize>,
    /// Centroids retrieved per query token
    #[arg(long, global = true)]
    pub centroids_per_token: Option<usize>,
    /// Candidate cap after gathering
    #[arg(long, global = true)]
    pub max_candidates: Option<usize>,
    /// Relative pruning threshold in (0, 1]
    #[arg(long, global = true)]
    pub prune_ratio: Option<f32>,
    /// Graph search beam; defaults to 1.5 times centroids per token
    #[arg(long, global = true)]
    pub ef_search: Option<usize>,
    /// Results per query
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Worker threads; 1 gives fully deterministic runs
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Synthetic documents
    #[arg(long, global = true)]
    pub synth_docs: Option<usize>,
    /// Synthetic vector dimension
    #[arg(long, global = true)]
    pub synth_dim: Option<usize>,
    /// Synthetic vocabulary size
    #[arg(long, global = true)]
    pub synth_vocab: Option<u32>,
    /// Zipf exponent of token frequencies
    #[arg(long, global = true)]
    pub synth_zipf: Option<f64>,
    /// Shortest synthetic document
    #[arg(long, global = true)]
    pub synth_min_len: Option<usize>,
    /// Longest synthetic document
    #[arg(long, global = true)]
    pub synth_max_len: Option<usize>,
    /// Most mixture modes per token
    #[arg(long, global = true)]
    pub synth_modes: Option<usize>,
    /// Spread of mode centres around the token direction
    #[arg(long, global = true)]
    pub synth_mode_spread: Option<f32>,
    /// Per-occurrence noise
    #[arg(long, global = true)]
    pub synth_noise: Option<f32>,
    /// Synthetic queries
    #[arg(long, global = true)]
    pub synth_queries: Option<usize>,
    /// Tokens per synthetic query
    #[arg(long, global = true)]
    pub synth_query_len: Option<usize>,
    /// Noise added to query tokens
    #[arg(long, global = true)]
    pub synth_query_noise: Option<f32>,
}

impl ParamArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        macro_rules! push {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field {
                    out.push((stringify!($field), v.to_string()));
                })*
            };
        }
        push!(
            budget, micro_below, small_below, floor, min_per_centroid, iterations, seed, subspaces, bits,
            pq_iterations, pq_sample, graph_neighbors, ef_construction, centroids_per_token, max_candidates,
            prune_ratio, ef_search, k, threads, synth_docs, synth_dim, synth_vocab, synth_zipf, synth_min_len,
            synth_max_len, synth_modes, synth_mode_spread, synth_noise, synth_queries, synth_query_len,
            synth_query_noise
        );
        out
    }
}

/// Typed parameters after layering.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub allocation: AllocationParams,
    pub train: TrainConfig,
    pub build: BuildParams,
    pub search: SearchParams,
    pub synth: SynthConfig,
}

fn defaults() -> BTreeMap<&'static str, String> {
    let a = AllocationParams::default();
    let t = TrainConfig::default();
    let b = BuildParams::default();
    let s = SearchParams::default();
    let y = SynthConfig::default();
    let mut m = BTreeMap::new();
    let mut set = |k: &'static str, v: String| {
        m.insert(k, v);
    };
    set("budget", a.budget.to_string());
    set("micro_below", a.micro_below.to_string());
    set("small_below", a.small_below.to_string());
    set("floor", a.floor.to_string());
    set("min_per_centroid", a.min_per_centroid.to_string());
    set("iterations", t.iterations.to_string());
    set("seed", t.seed.to_string());
    set("subspaces", b.pq.subspaces.to_string());
    set("bits", b.pq.bits.to_string());
    set("pq_iterations", b.pq.iterations.to_string());
    set("pq_sample", b.pq_sample.to_string());
    set("graph_neighbors", b.graph.max_neighbors.to_string());
    set("ef_construction", b.graph.ef_construction.to_string());
    set("centroids_per_token", s.centroids_per_token.to_string());
    set("max_candidates", s.max_candidates.to_string());
    set("prune_ratio", s.prune_ratio.to_string());
    set("ef_search", "auto".to_string());
    set("k", s.k.to_string());
    set("threads", t.threads.to_string());
    set("synth_docs", y.num_docs.to_string());
    set("synth_dim", y.dim.to_string());
    set("synth_vocab", y.vocab_size.to_string());
    set("synth_zipf", y.zipf_exponent.to_string());
    set("synth_min_len", y.min_doc_len.to_string());
    set("synth_max_len", y.max_doc_len.to_string());
    set("synth_modes", y.max_modes.to_string());
    set("synth_mode_spread", y.mode_spread.to_string());
    set("synth_noise", y.noise.to_string());
    set("synth_queries", y.num_queries.to_string());
    set("synth_query_len", y.query_len.to_string());
    set("synth_query_noise", y.query_noise.to_string());
    m
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config_file(path: &Path, text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: "expected `key = value`".into(),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Layered raw settings with their rendered form.
#[derive(Debug, Clone)]
pub struct Settings {
    values: BTreeMap<&'static str, String>,
}

impl Settings {
    pub fn resolve(args: &ParamArgs) -> Result<Self> {
        let mut values = defaults();
        if let Some(path) = &args.config {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (k, v) in parse_config_file(path, &text)? {
                let key = *values
                    .keys()
                    .find(|known| **known == k)
                    .ok_or_else(|| Error::Config(format!("unknown config key `{k}` in {}", path.display())))?;
                values.insert(key, v);
            }
        }
        for (k, v) in args.overrides() {
            values.insert(k, v);
        }
        Ok(Settings { values })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = &self.values[key];
        raw.parse()
            .map_err(|_| Error::Config(format!("invalid value for `{key}`: {raw:?}")))
    }

    /// Typed and validated configuration.
    pub fn typed(&self) -> Result<RunConfig> {
        let allocation = AllocationParams {
            budget: self.get("budget")?,
            micro_below: self.get("micro_below")?,
            small_below: self.get("small_below")?,
            floor: self.get("floor")?,
            min_per_centroid: self.get("min_per_centroid")?,
        };
        if allocation.budget == 0 || allocation.min_per_centroid == 0 || allocation.floor == 0 {
            return Err(Error::Config("budget, floor and min_per_centroid must be positive".into()));
        }
        if allocation.small_below < allocation.micro_below {
            return Err(Error::Config("small_below must be at least micro_below".into()));
        }
        let threads: usize = self.get("threads")?;
        if threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        let seed: u64 = self.get("seed")?;
        let train = TrainConfig {
            iterations: self.get("iterations")?,
            seed,
            threads,
            ..TrainConfig::default()
        };
        if train.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        let build = BuildParams {
            pq: PqConfig {
                subspaces: self.get("subspaces")?,
                bits: self.get("bits")?,
                iterations: self.get("pq_iterations")?,
                seed,
            },
            graph: GraphParams {
                max_neighbors: self.get("graph_neighbors")?,
                ef_construction: self.get("ef_construction")?,
                seed,
            },
            pq_sample: self.get("pq_sample")?,
            threads,
        };
        if !(1..=8).contains(&build.pq.bits) || build.pq.subspaces == 0 || build.pq.iterations == 0 {
            return Err(Error::Config("bits must be 1..=8; subspaces and pq_iterations positive".into()));
        }
        if build.graph.max_neighbors < 2 {
            return Err(Error::Config("graph_neighbors must be at least 2".into()));
        }
        let kc: usize = self.get("centroids_per_token")?;
        let ef = match self.values["ef_search"].as_str() {
            "auto" => default_ef(kc),
            _ => self.get("ef_search")?,
        };
        let search = SearchParams {
            centroids_per_token: kc,
            max_candidates: self.get("max_candidates")?,
            prune_ratio: self.get("prune_ratio")?,
            ef_search: ef,
            k: self.get("k")?,
        };
        search.validate()?;
        let synth = SynthConfig {
            num_docs: self.get("synth_docs")?,
            dim: self.get("synth_dim")?,
            vocab_size: self.get("synth_vocab")?,
            zipf_exponent: self.get("synth_zipf")?,
            min_doc_len: self.get("synth_min_len")?,
            max_doc_len: self.get("synth_max_len")?,
            max_modes: self.get("synth_modes")?,
            mode_spread: self.get("synth_mode_spread")?,
            noise: self.get("synth_noise")?,
            num_queries: self.get("synth_queries")?,
            query_len: self.get("synth_query_len")?,
            query_noise: self.get("synth_query_noise")?,
            seed,
        };
        synth.validate()?;
        Ok(RunConfig {
            allocation,
            train,
            build,
            search,
            synth,
        })
    }

    /// `# key=value` lines, sorted by key.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "# {k}={v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.conf");
        std::fs::write(&p, "# comment\nbudget = 512\nk = 5\n").unwrap();
        let args = ParamArgs {
            config: Some(p),
            k: Some(7),
            ..ParamArgs::default()
        };
        let s = Settings::resolve(&args).unwrap();
        let c = s.typed().unwrap();
        assert_eq!(c.allocation.budget, 512);
        assert_eq!(c.search.k, 7);
        assert_eq!(c.search.ef_search, 60);
        assert!(s.echo().contains("# budget=512\n"));
    }

    #[test]
    fn unknown_key_and_bad_values_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.conf");
        std::fs::write(&p, "bogus = 1\n").unwrap();
        let args = ParamArgs { config: Some(p), ..ParamArgs::default() };
        assert!(matches!(Settings::resolve(&args), Err(Error::Config(_))));
        let args = ParamArgs { prune_ratio: Some(1.5), ..ParamArgs::default() };
        assert!(matches!(Settings::resolve(&args).unwrap().typed(), Err(Error::Config(_))));
    }
}
