use std::path::Path;
use std::process::{Command, Output};

use mvr_core::corpus::{Qrels, Run};

const SMALL: [&str; 10] = [
    "--synth-docs",
    "300",
    "--synth-vocab",
    "80",
    "--synth-queries",
    "8",
    "--budget",
    "256",
    "--seed",
    "5",
];

fn mvr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvr"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("spawn mvr")
}

fn mvr_small(args: &[&str]) -> Output {
    let mut all: Vec<&str> = args.to_vec();
    all.extend_from_slice(&SMALL);
    all.extend_from_slice(&["--threads", "1", "--subspaces", "8", "--bits", "4", "--pq-sample", "4000"]);
    mvr(&all)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> String {
    assert_eq!(
        o.status.code(),
        Some(0),
        "stdout:\n{}\nstderr:\n{}",
        stdout(&o),
        String::from_utf8_lossy(&o.stderr)
    );
    stdout(&o)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(mvr(&["--help"]).status.code(), Some(0));
    assert_eq!(mvr(&["--version"]).status.code(), Some(0));
    assert_eq!(mvr(&[]).status.code(), Some(1));
    assert_eq!(mvr(&["stats", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(mvr(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn invalid_configuration_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = mvr(&["synth", "--out", p(&out), "--prune-ratio", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error:"));
    assert_eq!(mvr(&["synth", "--out", p(&out), "--threads", "0"]).status.code(), Some(1));
    assert_eq!(mvr(&["synth", "--out", p(&out), "--bits", "9"]).status.code(), Some(1));

    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "no_such_key = 3\n").unwrap();
    assert_eq!(mvr(&["synth", "--out", p(&out), "--config", p(&conf)]).status.code(), Some(1));
    std::fs::write(&conf, "budget: 3\n").unwrap();
    assert_eq!(mvr(&["synth", "--out", p(&out), "--config", p(&conf)]).status.code(), Some(2));
    assert_eq!(
        mvr(&["eval", "--run", "x", "--qrels", "y", "--metric", "ndcg@10"]).status.code(),
        Some(1)
    );
    assert!(!out.exists());
}

#[test]
fn missing_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.meta");
    assert_eq!(mvr(&["stats", "--corpus", p(&missing)]).status.code(), Some(2));
    let o = mvr(&["search", "--index", p(dir.path()), "--queries", p(&missing), "--output", "r.tsv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_echo_reflects_layering() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "# layered\nbudget = 300\nk = 4\n").unwrap();
    let out = ok(mvr(&[
        "synth",
        "--out",
        p(&dir.path().join("s")),
        "--config",
        p(&conf),
        "--k",
        "6",
        "--synth-docs",
        "20",
        "--synth-queries",
        "2",
    ]));
    assert!(out.contains("# budget=300\n"), "{out}");
    assert!(out.contains("# k=6\n"), "{out}");
    assert!(out.contains("# synth_docs=20\n"), "{out}");
    assert!(out.contains("synth\tdocs=20 "), "{out}");
    let echoed: Vec<&str> = out.lines().filter(|l| l.starts_with("# ")).collect();
    let mut sorted = echoed.clone();
    sorted.sort_unstable();
    assert_eq!(echoed, sorted);
}

#[test]
fn eval_scores_and_rejects_mismatched_ids() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run.tsv");
    let qrels = dir.path().join("qrels.tsv");
    let mut r = Run::default();
    r.push("q1", vec![("a".into(), 3.0), ("b".into(), 2.0), ("c".into(), 1.0)]);
    r.push("q2", vec![("x".into(), 3.0), ("y".into(), 2.0)]);
    r.save(&run).unwrap();
    let mut q = Qrels::default();
    q.insert("q1", "b", 1);
    q.insert("q2", "z", 1);
    q.save(&qrels).unwrap();

    let out = ok(mvr(&["eval", "--run", p(&run), "--qrels", p(&qrels)]));
    assert!(out.contains("MRR@10\t0.250000\n"), "{out}");
    assert!(out.contains("Success@5\t0.500000\n"), "{out}");

    let mut q = Qrels::default();
    q.insert("q1", "b", 1);
    q.insert("q3", "b", 1);
    q.save(&qrels).unwrap();
    let o = mvr(&["eval", "--run", p(&run), "--qrels", p(&qrels)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(mvr(&["eval", "--run", p(&run), "--qrels", p(&qrels), "--metric", "recall@5"]).status.code(), Some(1));
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let corpus = data.join("corpus.meta");
    let queries = data.join("queries.meta");
    let clusters = dir.path().join("clusters");
    let index = dir.path().join("index");

    ok(mvr_small(&["synth", "--out", p(&data)]));

    let hist = dir.path().join("hist.tsv");
    let stats = ok(mvr(&["stats", "--corpus", p(&corpus), "--histogram", p(&hist), "--top", "3"]));
    let vectors: u64 = stats
        .split_whitespace()
        .find_map(|w| w.strip_prefix("vectors="))
        .unwrap()
        .parse()
        .unwrap();
    let text = std::fs::read_to_string(&hist).unwrap();
    let total: u64 = text.lines().skip(1).map(|l| l.split('\t').nth(1).unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(total, vectors);
    let top_rows = stats.lines().skip_while(|l| *l != "token\tcount").skip(1).count();
    assert_eq!(top_rows, 3);

    ok(mvr_small(&["cluster", "--corpus", p(&corpus), "--out", p(&clusters), "--baseline"]));
    assert!(clusters.join("codebook.bin").is_file());
    assert!(clusters.join("assignment.bin").is_file());

    let build = ok(mvr_small(&["build", "--corpus", p(&corpus), "--clusters", p(&clusters), "--index", p(&index)]));
    assert!(build.contains("build_time_s\t"), "{build}");
    assert!(index.join("manifest.txt").is_file());

    let run = dir.path().join("run.tsv");
    let timing = dir.path().join("timing.csv");
    let out = ok(mvr_small(&[
        "search",
        "--index",
        p(&index),
        "--queries",
        p(&queries),
        "--output",
        p(&run),
        "--timing",
        p(&timing),
    ]));
    assert!(out.contains("search\tqueries=8 "), "{out}");
    let parsed = Run::load(&run).unwrap();
    assert_eq!(parsed.lists.len(), 8);
    assert!(parsed.lists.iter().all(|l| !l.docs.is_empty() && l.docs.len() <= 10));
    assert_eq!(std::fs::read_to_string(&timing).unwrap().lines().count(), 9);

    let oracle = dir.path().join("oracle.tsv");
    ok(mvr_small(&[
        "search",
        "--oracle",
        "--corpus",
        p(&corpus),
        "--queries",
        p(&queries),
        "--output",
        p(&oracle),
    ]));
    let eval = ok(mvr(&[
        "eval",
        "--run",
        p(&run),
        "--qrels",
        p(&data.join("qrels.tsv")),
        "--metric",
        "mrr@10",
        "--metric",
        "recall@10",
        "--oracle",
        p(&oracle),
    ]));
    let recall: f64 = eval
        .lines()
        .find_map(|l| l.strip_prefix("Recall@10\t"))
        .unwrap()
        .parse()
        .unwrap();
    assert!((0.0..=1.0).contains(&recall));
    assert!(eval.contains("MRR@10\t"));

    let bench = ok(mvr_small(&[
        "bench",
        "--index",
        p(&index),
        "--queries",
        p(&queries),
        "--repeats",
        "1",
        "--warmup",
        "0",
    ]));
    assert!(bench.contains("layout_ratio\t"), "{bench}");

    // A tampered component is refused with the data-error code.
    let compressed = index.join("compressed.bin");
    let mut bytes = std::fs::read(&compressed).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x40;
    std::fs::write(&compressed, bytes).unwrap();
    let o = mvr_small(&["search", "--index", p(&index), "--queries", p(&queries), "--output", p(&run)]);
    assert_eq!(o.status.code(), Some(2));
}
