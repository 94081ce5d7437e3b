//! Command-line front end. `run` parses arguments and dispatches; the
//! binary only maps its result to an exit code.

pub mod bench;
pub mod commands;
pub mod config;
pub mod eval;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{ParamArgs, RunConfig, Settings};

use crate::corpus::DEFAULT_MAX_QUERY_TOKENS;
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "mvr", version, about = "Multi-vector retrieval with token-aware clustering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus, planted queries and relevance labels
    Synth {
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Allocate centroids per token, cluster and assign the corpus
    Cluster {
        #[arg(long)]
        corpus: PathBuf,
        /// Output directory for the codebook, assignment and plan
        #[arg(long)]
        out: PathBuf,
        /// Also run token-agnostic k-means with the same budget
        #[arg(long)]
        baseline: bool,
    },
    /// Train the codec, compress the corpus and build the search index
    Build {
        #[arg(long)]
        corpus: PathBuf,
        /// Output of `cluster`; clustering runs inline when omitted
        #[arg(long)]
        clusters: Option<PathBuf>,
        #[arg(long)]
        index: PathBuf,
    },
    /// Run queries against an index and write a run file
    Search {
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        queries: PathBuf,
        /// Run file, or a directory in grid mode
        #[arg(long)]
        output: PathBuf,
        /// Per-query timing CSV
        #[arg(long)]
        timing: Option<PathBuf>,
        /// Sweep the centroid and candidate grids
        #[arg(long)]
        grid: bool,
        /// Exact MaxSim over the uncompressed corpus instead of the index
        #[arg(long)]
        oracle: bool,
        /// Uncompressed corpus, required with --oracle
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_QUERY_TOKENS)]
        max_query_tokens: usize,
    },
    /// Score a run file against relevance labels
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        /// mrr@K, success@K or recall@K; repeatable
        #[arg(long = "metric", default_values_t = ["mrr@10".to_string(), "success@5".to_string()])]
        metrics: Vec<String>,
        /// Oracle run for recall
        #[arg(long)]
        oracle: Option<PathBuf>,
    },
    /// Repeat searches and report latency and layout statistics
    Bench {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 1)]
        warmup: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_QUERY_TOKENS)]
        max_query_tokens: usize,
    },
    /// Token histogram report
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        /// Write the full `token<TAB>count` histogram here
        #[arg(long)]
        histogram: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        top: usize,
    },
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let settings = Settings::resolve(&cli.params)?;
    let cfg = settings.typed()?;
    print!("{}", settings.echo());
    commands::execute(&cli.command, &cfg)
}
