//! The `gahne` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gahne_core::cli::{embeddings, load_model};
use gahne_core::config::RunConfig;
use gahne_core::hetgraph::{load_graph, synth_hin, GraphFiles, SynthParams};
use gahne_core::train::{evaluate, Reduction};

const SMALL: [&str; 8] = [
    "--synth-nodes-per-class",
    "30",
    "--synth-aux-per-class",
    "10",
    "--synth-intra",
    "0.2",
    "--synth-inter",
    "0.02",
];
const QUICK: [&str; 6] = ["--dim", "16", "--max-epochs", "30", "--patience", "10"];

fn gahne(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gahne")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = gahne(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path) {
    let mut args = vec!["synth", "--out", s(dir)];
    args.extend(SMALL);
    ok(&args);
}

fn train(data: &Path, out: &Path, extra: &[&str]) -> String {
    let mut args = vec!["train", "--data", s(data), "--out", s(out)];
    args.extend(QUICK);
    args.extend(extra);
    ok(&args)
}

#[test]
fn synth_files_load_back_to_the_same_graph() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let files = GraphFiles::in_dir(dir.path());
    let loaded = load_graph(
        &files.nodes,
        &files.edges,
        files.features.as_deref(),
        files.labels.as_deref(),
    )
    .unwrap();
    let direct = synth_hin(&SynthParams {
        nodes_per_class: 30,
        aux_nodes_per_class: Some(10),
        intra_edge_prob: 0.2,
        inter_edge_prob: 0.02,
        ..SynthParams::default()
    })
    .unwrap();
    assert_eq!(loaded.num_nodes(), direct.num_nodes());
    assert_eq!(loaded.edges(), direct.edges());
    assert_eq!(loaded.node_types(), direct.node_types());
    assert_eq!(loaded.labels(), direct.labels());
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains(&format!("num_nodes={}", direct.num_nodes())));
}

#[test]
fn checkpoint_reload_reproduces_validation_loss() {
    let dir = tempfile::tempdir().unwrap();
    let (data, out) = (dir.path().join("data"), dir.path().join("run"));
    synth(&data);
    let summary = train(&data, &out, &[]);
    assert!(summary.starts_with("best epoch"));

    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    let best = history
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap())
        .fold(f64::INFINITY, f64::min);

    let mut cfg = RunConfig::default();
    cfg.set("data", s(&data)).unwrap();
    cfg.set("out", s(&out)).unwrap();
    let m = load_model(&cfg).unwrap();
    let ck = &m.checkpoint;
    let (val, _) = evaluate(
        &m.inputs.tensors,
        &ck.params,
        &ck.model,
        &m.inputs.labels,
        &m.split.val_ids,
        Reduction::Sum,
    )
    .unwrap();
    assert_eq!(val, best);
}

#[test]
fn eval_and_embed_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (data, out) = (dir.path().join("data"), dir.path().join("run"));
    synth(&data);
    train(&data, &out, &[]);

    ok(&["eval", "--data", s(&data), "--out", s(&out), "--repeats", "1"]);
    let csv = fs::read_to_string(out.join("eval.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#') && l.contains(',')).collect();
    assert_eq!(rows[0], "fraction,metric,mean,sd");
    let f1_rows: Vec<&str> = rows.iter().copied().filter(|l| l.contains("_f1,")).collect();
    assert_eq!(f1_rows.len(), 8);
    for row in f1_rows
        .iter()
        .chain(rows.iter().filter(|l| l.starts_with("nmi") || l.starts_with("ari")))
    {
        assert_eq!(row.rsplit(',').next().unwrap(), "0.0000000000", "{row}");
    }
    assert!(csv.contains("# repeats=1"));

    ok(&["embed", "--data", s(&data), "--out", s(&out)]);
    let text = fs::read_to_string(out.join("embeddings.tsv")).unwrap();
    let mut cfg = RunConfig::default();
    cfg.set("data", s(&data)).unwrap();
    cfg.set("out", s(&out)).unwrap();
    let emb = embeddings(&load_model(&cfg).unwrap()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), emb.rows());
    for (v, line) in lines.iter().enumerate() {
        let (id, rest) = line.split_once('\t').unwrap();
        assert_eq!(id.parse::<usize>().unwrap(), v);
        let values: Vec<f64> = rest.split(' ').map(|x| x.parse().unwrap()).collect();
        assert_eq!(values.len() + 1, 17);
        for (a, b) in values.iter().zip(emb.row(v)) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn every_variant_trains_from_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data);
    for (i, flags) in [
        &["--aggregator", "gated"][..],
        &["--aggregator", "pooling"],
        &["--aggregator", "mean"],
        &["--aggregator", "single:1"],
        &["--fusion", "false"],
        &["--channels", "false"],
        &["--conv-order", "2", "--num-layers", "1"],
        &["--batch", "8", "--reduction", "mean"],
    ]
    .iter()
    .enumerate()
    {
        let out = dir.path().join(format!("run{i}"));
        let mut args = flags.to_vec();
        args.extend(["--max-epochs", "3", "--patience", "3"]);
        train(&data, &out, &args);
        let ck = fs::read_to_string(out.join("checkpoint.txt")).unwrap();
        let (key, value) = (flags[0].trim_start_matches("--").replace('-', "_"), flags[1]);
        assert!(
            ck.contains(&format!("config {key}={value}")) || key == "batch",
            "{key}={value}"
        );
    }
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data);
    let conf = dir.path().join("run.conf");
    fs::write(
        &conf,
        "# quick run\naggregator = mean\ndim = 8\nmax_epochs = 2\npatience = 2\n",
    )
    .unwrap();
    let out = dir.path().join("run");
    ok(&[
        "train",
        "--config",
        s(&conf),
        "--data",
        s(&data),
        "--out",
        s(&out),
        "--dim",
        "6",
    ]);
    let ck = fs::read_to_string(out.join("checkpoint.txt")).unwrap();
    assert!(ck.contains("config aggregator=mean"));
    assert!(ck.contains("config hidden_dims=6,6"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(gahne(&["train", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(gahne(&["train", "--dim", "wide"]).status.code(), Some(1));
    assert_eq!(gahne(&[]).status.code(), Some(1));
    let missing = dir.path().join("nowhere");
    let out = gahne(&["train", "--data", s(&missing), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));
    let out = gahne(&["gradcheck", "--inject-fault", "softmax_rows"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
    let out = gahne(&["gradcheck"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        text.lines().filter(|l| l.ends_with(" ok")).count(),
        text.lines().count() - 1
    );
    assert_eq!(gahne(&["eval", "--help"]).status.code(), Some(0));
}

#[test]
fn fixed_seed_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (data, out) = (dir.path().join("data"), dir.path().join("run"));
    let snapshot = |dirs: &[&Path]| -> Vec<(String, Vec<u8>)> {
        let mut files = Vec::new();
        for d in dirs {
            let mut entries: Vec<_> = fs::read_dir(d).unwrap().map(|e| e.unwrap().path()).collect();
            entries.sort();
            for p in entries {
                files.push((p.display().to_string(), fs::read(&p).unwrap()));
            }
        }
        files
    };
    let mut runs = Vec::new();
    for _ in 0..2 {
        synth(&data);
        let a = train(&data, &out, &["--seed", "9"]);
        let b = ok(&[
            "eval",
            "--data",
            s(&data),
            "--out",
            s(&out),
            "--seed",
            "9",
            "--repeats",
            "2",
        ]);
        let c = ok(&["embed", "--data", s(&data), "--out", s(&out), "--seed", "9"]);
        runs.push((snapshot(&[&data, &out]), a + &b + &c));
    }
    assert_eq!(runs[0].0.len(), 9);
    assert_eq!(runs[0], runs[1]);
}
