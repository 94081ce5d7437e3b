use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::config::RunConfig;
use super::eval::{self, Metric};
use super::{bench, Command};
use crate::corpus::{self, NormPolicy, QuerySet, Qrels, Run, TokenVectorCorpus};
use crate::engine::{self, PhaseTiming, SearchIndex, SearchParams};
use crate::error::{Error, Result};
use crate::format;
use crate::synth;
use crate::tac::{self, train::thread_pool, Assignment, TokenPartitionedCodebook};

pub const CODEBOOK_FILE: &str = "codebook.bin";
pub const ASSIGNMENT_FILE: &str = "assignment.bin";
pub const PLAN_FILE: &str = "plan.txt";

/// Centroid counts swept in grid mode.
pub const GRID_CENTROIDS: [usize; 6] = [15, 20, 40, 80, 100, 120];
/// Candidate caps swept in grid mode.
pub const GRID_CANDIDATES: [usize; 5] = [250, 500, 1000, 2000, 4000];

pub fn execute(cmd: &Command, cfg: &RunConfig) -> Result<()> {
    match cmd {
        Command::Synth { out } => cmd_synth(cfg, out),
        Command::Cluster { corpus, out, baseline } => cmd_cluster(cfg, corpus, out, *baseline).map(|_| ()),
        Command::Build { corpus, clusters, index } => cmd_build(cfg, corpus, clusters.as_deref(), index),
        Command::Search {
            index,
            queries,
            output,
            timing,
            grid,
            oracle,
            corpus,
            max_query_tokens,
        } => {
            let queries = QuerySet::load(queries, *max_query_tokens, NormPolicy::Validate)?;
            if *oracle {
                let corpus = corpus
                    .as_deref()
                    .ok_or_else(|| Error::Config("--oracle needs --corpus".into()))?;
                return cmd_oracle(cfg, corpus, &queries, output);
            }
            let index = index.as_deref().ok_or_else(|| Error::Config("search needs --index".into()))?;
            cmd_search(cfg, index, &queries, output, timing.as_deref(), *grid)
        }
        Command::Eval {
            run,
            qrels,
            metrics,
            oracle,
        } => cmd_eval(run, qrels, metrics, oracle.as_deref()),
        Command::Bench {
            index,
            queries,
            warmup,
            repeats,
            max_query_tokens,
        } => {
            let queries = QuerySet::load(queries, *max_query_tokens, NormPolicy::Validate)?;
            let index = SearchIndex::load(index)?;
            let report = bench::run_bench(&index, &queries, &cfg.search, *warmup, *repeats)?;
            print!("{}", report.render());
            Ok(())
        }
        Command::Stats { corpus, histogram, top } => cmd_stats(corpus, histogram.as_deref(), *top),
    }
}

fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = synth::generate(&cfg.synth)?;
    data.corpus.save(&out.join("corpus.meta"))?;
    data.queries.save(&out.join("queries.meta"))?;
    data.qrels.save(&out.join("qrels.tsv"))?;
    println!(
        "synth\tdocs={} vectors={} distinct_tokens={} queries={}",
        data.corpus.num_docs(),
        data.corpus.num_vectors(),
        data.corpus.distinct_tokens(),
        data.queries.len()
    );
    Ok(())
}

/// Outcome of the clustering stage.
pub struct Clusters {
    pub codebook: TokenPartitionedCodebook,
    pub assignment: Assignment,
    pub report: String,
}

/// Token statistics, allocation, per-token training and assignment.
pub fn cluster(cfg: &RunConfig, corpus: &TokenVectorCorpus, baseline: bool) -> Result<Clusters> {
    let pool = thread_pool(cfg.train.threads)?;
    let t0 = Instant::now();
    let stats = pool.install(|| tac::compute_token_stats(corpus, tac::stats::DEFAULT_STATS_SAMPLE_CAP));
    let plan = tac::allocate(&stats, &cfg.allocation)?;
    let stats_time = t0.elapsed();
    let (codebook, train) = tac::train(corpus, &plan, &cfg.train)?;
    let (assignment, assign) = tac::assign(corpus, &codebook, cfg.train.threads)?;

    let mut report = String::new();
    let _ = writeln!(
        report,
        "clustering\tvectors={} tokens={} centroids={} iterations={} threads={}",
        corpus.num_vectors(),
        plan.entries.len(),
        codebook.len(),
        cfg.train.iterations,
        cfg.train.threads
    );
    report.push_str(&plan.report(&stats));
    let _ = writeln!(report, "time_stats_s\t{:.3}", stats_time.as_secs_f64());
    let _ = writeln!(report, "time_centroids_s\t{:.3}", train.wall.as_secs_f64());
    let _ = writeln!(report, "time_assign_s\t{:.3}", assign.wall.as_secs_f64());
    let tac_evals = train.distance_evals + assign.distance_evals;
    let _ = writeln!(report, "distance_evals\t{tac_evals}");
    let _ = writeln!(report, "inertia\t{:.6}", assignment.inertia());
    if baseline {
        let b = tac::baseline_kmeans(corpus, codebook.len(), &cfg.train)?;
        let base_evals = b.train.distance_evals + b.assign.distance_evals;
        let _ = writeln!(report, "baseline_time_centroids_s\t{:.3}", b.train.wall.as_secs_f64());
        let _ = writeln!(report, "baseline_time_assign_s\t{:.3}", b.assign.wall.as_secs_f64());
        let _ = writeln!(report, "baseline_distance_evals\t{base_evals}");
        let _ = writeln!(report, "baseline_inertia\t{:.6}", b.assignment.inertia());
        let _ = writeln!(report, "measured_ratio\t{:.6}", base_evals as f64 / tac_evals.max(1) as f64);
    }
    Ok(Clusters {
        codebook,
        assignment,
        report,
    })
}

fn cmd_cluster(cfg: &RunConfig, corpus_path: &Path, out: &Path, baseline: bool) -> Result<Clusters> {
    let corpus = corpus::load_corpus(corpus_path)?;
    let c = cluster(cfg, &corpus, baseline)?;
    c.codebook.save(&out.join(CODEBOOK_FILE))?;
    c.assignment.save(&out.join(ASSIGNMENT_FILE))?;
    // timings stay out of the plan file so reruns are byte-identical
    let plan: String = c.report.lines().filter(|l| !l.contains("time_")).map(|l| format!("{l}\n")).collect();
    format::write_file(&out.join(PLAN_FILE), plan.as_bytes())?;
    print!("{}", c.report);
    Ok(c)
}

fn cmd_build(cfg: &RunConfig, corpus_path: &Path, clusters: Option<&Path>, index_dir: &Path) -> Result<()> {
    let corpus = corpus::load_corpus(corpus_path)?;
    let (codebook, assignment) = match clusters {
        Some(dir) => {
            let cb = TokenPartitionedCodebook::load(&dir.join(CODEBOOK_FILE))?;
            let asg = Assignment::load(&dir.join(ASSIGNMENT_FILE))?;
            if asg.len() != corpus.num_vectors() {
                return Err(Error::Precondition(format!(
                    "assignment covers {} vectors, corpus has {}",
                    asg.len(),
                    corpus.num_vectors()
                )));
            }
            (cb, asg)
        }
        None => {
            let c = cluster(cfg, &corpus, false)?;
            print!("{}", c.report);
            (c.codebook, c.assignment)
        }
    };
    let t0 = Instant::now();
    let index = SearchIndex::build(&corpus, codebook, &assignment, &cfg.build)?;
    index.save(index_dir)?;
    let s = index.sizes();
    println!("build_time_s\t{:.3}", t0.elapsed().as_secs_f64());
    println!(
        "index\tdocs={} vectors={} centroids={}",
        index.num_docs(),
        corpus.num_vectors(),
        index.codebook().len()
    );
    println!(
        "size_bytes\tcentroid_ids={} codes={} norms={} graph={} postings={} per_vector={:.2}",
        s.centroid_ids,
        s.codes,
        s.norms,
        s.graph,
        s.postings,
        (s.centroid_ids + s.codes + s.norms) as f64 / corpus.num_vectors().max(1) as f64
    );
    Ok(())
}

/// Runs every query, on up to `threads` threads, preserving query order.
pub fn run_queries(
    index: &SearchIndex,
    queries: &QuerySet,
    params: &SearchParams,
    threads: usize,
) -> Result<(Run, Vec<PhaseTiming>)> {
    params.validate()?;
    let pool = thread_pool(threads)?;
    let results: Vec<_> = pool.install(|| {
        (0..queries.len())
            .into_par_iter()
            .map(|i| engine::search(index, queries.get(i).vectors, params))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut run = Run::default();
    let mut timings = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        let docs = r
            .hits
            .iter()
            .map(|&(d, s)| (index.doc_ids()[d as usize].clone(), s))
            .collect();
        run.push(queries.get(i).id, docs);
        timings.push(r.timing);
    }
    Ok((run, timings))
}

fn timing_csv(queries: &QuerySet, timings: &[PhaseTiming]) -> String {
    let mut out = String::from(PhaseTiming::CSV_HEADER);
    out.push('\n');
    for (q, t) in queries.iter().zip(timings) {
        out.push_str(&t.csv_row(q.id));
        out.push('\n');
    }
    out
}

fn mean_total_us(timings: &[PhaseTiming]) -> f64 {
    timings.iter().map(|t| t.total_us as f64).sum::<f64>() / timings.len().max(1) as f64
}

fn cmd_search(
    cfg: &RunConfig,
    index_dir: &Path,
    queries: &QuerySet,
    output: &Path,
    timing: Option<&Path>,
    grid: bool,
) -> Result<()> {
    let index = SearchIndex::load(index_dir)?;
    if queries.dim() != index.dim() {
        return Err(Error::DimensionMismatch {
            expected: index.dim(),
            actual: queries.dim(),
        });
    }
    if !grid {
        let (run, timings) = run_queries(&index, queries, &cfg.search, cfg.train.threads)?;
        run.save(output)?;
        if let Some(t) = timing {
            format::write_file(t, timing_csv(queries, &timings).as_bytes())?;
        }
        println!("search\tqueries={} mean_total_us={:.1}", queries.len(), mean_total_us(&timings));
        return Ok(());
    }
    let alpha = cfg.search.prune_ratio;
    for &kd in &GRID_CANDIDATES {
        for &kc in &GRID_CENTROIDS {
            let params = SearchParams::new(kc, kd, alpha, cfg.search.k);
            let (run, timings) = run_queries(&index, queries, &params, cfg.train.threads)?;
            let name = format!("kc{kc}.kd{kd}.a{alpha}");
            run.save(&output.join(format!("run.{name}.tsv")))?;
            format::write_file(
                &output.join(format!("timing.{name}.csv")),
                timing_csv(queries, &timings).as_bytes(),
            )?;
            println!("grid\t{name}\tmean_total_us={:.1}", mean_total_us(&timings));
        }
    }
    Ok(())
}

/// Exact MaxSim ranking of every query over the uncompressed corpus.
pub fn oracle_run(corpus: &TokenVectorCorpus, queries: &QuerySet, k: usize, threads: usize) -> Result<Run> {
    if queries.dim() != corpus.dim() {
        return Err(Error::DimensionMismatch {
            expected: corpus.dim(),
            actual: queries.dim(),
        });
    }
    let pool = thread_pool(threads)?;
    let hits: Vec<Vec<(u32, f32)>> = pool.install(|| {
        (0..queries.len())
            .into_par_iter()
            .map(|i| engine::exhaustive_maxsim(corpus, queries.get(i).vectors, k, None))
            .collect()
    });
    let mut run = Run::default();
    for (i, h) in hits.into_iter().enumerate() {
        run.push(
            queries.get(i).id,
            h.into_iter().map(|(d, s)| (corpus.doc_label(d as usize), s)).collect(),
        );
    }
    Ok(run)
}

fn cmd_oracle(cfg: &RunConfig, corpus_path: &Path, queries: &QuerySet, output: &Path) -> Result<()> {
    let corpus = corpus::load_corpus(corpus_path)?;
    let run = oracle_run(&corpus, queries, cfg.search.k, cfg.train.threads)?;
    run.save(output)?;
    println!("oracle\tqueries={} docs={}", queries.len(), corpus.num_docs());
    Ok(())
}

fn cmd_eval(run: &Path, qrels: &Path, metrics: &[String], oracle: Option<&Path>) -> Result<()> {
    let parsed: Vec<Metric> = metrics.iter().map(|m| Metric::parse(m)).collect::<Result<_>>()?;
    let run = Run::load(run)?;
    let qrels = Qrels::load(qrels)?;
    let oracle = oracle.map(Run::load).transpose()?;
    for m in parsed {
        let v = eval::evaluate(m, &run, &qrels, oracle.as_ref())?;
        println!("{}\t{v:.6}", m.name());
    }
    Ok(())
}

fn cmd_stats(corpus_path: &Path, histogram: Option<&Path>, top: usize) -> Result<()> {
    let corpus = corpus::load_corpus(corpus_path)?;
    let hist = corpus::token_histogram(&corpus);
    println!(
        "corpus\tdocs={} vectors={} dim={} vocab={} distinct_tokens={}",
        corpus.num_docs(),
        corpus.num_vectors(),
        corpus.dim(),
        corpus.vocab_size(),
        corpus.distinct_tokens()
    );
    for k in [1, 10, 100] {
        println!("top{k}_share\t{:.6}", corpus::top_k_share(&corpus, k));
    }
    let mut by_count: Vec<(u32, u64)> = hist.iter().map(|(&t, &c)| (t, c)).collect();
    by_count.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    println!("token\tcount");
    for (t, c) in by_count.iter().take(top) {
        println!("{t}\t{c}");
    }
    if let Some(path) = histogram {
        let mut out = String::from("token\tcount\n");
        for (t, c) in &hist {
            let _ = writeln!(out, "{t}\t{c}");
        }
        format::write_file(path, out.as_bytes())?;
    }
    Ok(())
}
