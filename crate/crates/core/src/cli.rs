//! The `gahne` command-line tool: `synth`, `train`, `eval`, `embed` and
//! `gradcheck` subcommands over a shared [`RunConfig`].
//!
//! Exit status: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Arg, ArgAction, ArgMatches, Command};

use crate::checkpoint::{model_config_pairs, Checkpoint};
use crate::config::{FeatureSetting, RunConfig, KEYS};
use crate::diff::OpKind;
use crate::error::{Error, Result};
use crate::eval::{run_classification_eval, run_clustering_eval, EvalReport};
use crate::hetgraph::{load_graph, make_splits, synth_hin, write_graph, FeatureMode, HeteroGraph, Split};
use crate::linalg::DenseMatrix;
use crate::model::{forward, gradcheck_combinations, init_params, model_gradcheck, GraphTensors};
use crate::train::{evaluate, train, EpochRecord, TrainHistory};

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

fn with_config_args(cmd: Command) -> Command {
    let cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("PATH")
            .help("key=value configuration file; flags override its values"),
    );
    KEYS.iter().fold(cmd, |cmd, k| {
        let default = if k.default.is_empty() { "none" } else { k.default };
        cmd.arg(
            Arg::new(k.name)
                .long(flag_name(k.name))
                .value_name("VALUE")
                .help(format!("{} [default: {default}]", k.help)),
        )
    })
}

pub fn command() -> Command {
    let sub = |name: &'static str, about: &'static str| {
        with_config_args(Command::new(name).about(about).args_override_self(true))
    };
    Command::new("gahne")
        .about("Heterogeneous network embedding with multi-relation graph convolutions")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(sub("synth", "Generate a synthetic labeled heterogeneous graph"))
        .subcommand(sub("train", "Train a model and write checkpoint, history and log"))
        .subcommand(sub(
            "eval",
            "Score checkpoint embeddings with KNN classification and K-means clustering",
        ))
        .subcommand(sub("embed", "Write the embedding of every node"))
        .subcommand(
            sub("gradcheck", "Check backward gradients against central differences").arg(
                Arg::new("inject_fault")
                    .long("inject-fault")
                    .value_name("OP")
                    .hide(true)
                    .action(ArgAction::Set),
            ),
        )
}

/// Builds the run configuration: defaults, then `--config`, then flags.
pub fn config_from_matches(m: &ArgMatches) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = m.get_one::<String>("config") {
        cfg.apply_file(Path::new(path)).map_err(|e| match e {
            Error::Io { path, source } => {
                Error::InvalidArgument(format!("cannot read config {}: {source}", path.display()))
            }
            other => other,
        })?;
    }
    for k in KEYS {
        if let Some(v) = m.get_one::<String>(k.name) {
            cfg.set(k.name, v)?;
        }
    }
    Ok(cfg)
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_out(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// The loaded graph and the tensors the model reads.
pub struct Inputs {
    pub graph: HeteroGraph,
    pub tensors: GraphTensors,
    pub feature_mode: FeatureMode,
    pub labels: Vec<Option<usize>>,
}

impl Inputs {
    /// Builds the model inputs for a labeled graph.
    pub fn from_graph(graph: HeteroGraph, features: FeatureSetting) -> Result<Self> {
        let labels = graph
            .labels()
            .ok_or_else(|| Error::InvalidArgument("the graph has no labels".into()))?
            .to_vec();
        let feature_mode = features.resolve(graph.features().is_some(), graph.num_nodes());
        let tensors = GraphTensors::from_graph(&graph, feature_mode)?;
        Ok(Self {
            graph,
            tensors,
            feature_mode,
            labels,
        })
    }
}

/// Loads the configured graph; labels are mandatory.
pub fn load_inputs(cfg: &RunConfig, feature_mode: Option<FeatureMode>) -> Result<Inputs> {
    let files = cfg.graph_files()?;
    let labels_path = match (&files.labels, &cfg.data) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => dir.join("labels.tsv"),
        (None, None) => {
            return Err(Error::InvalidArgument(
                "no labels file: set data=<dir> or labels=<file>".into(),
            ))
        }
    };
    if !labels_path.exists() {
        return Err(Error::io(
            &labels_path,
            io::Error::new(io::ErrorKind::NotFound, "labels file not found"),
        ));
    }
    let graph = load_graph(
        &files.nodes,
        &files.edges,
        files.features.as_deref(),
        Some(&labels_path),
    )?;
    let setting = feature_mode.map_or(cfg.features, FeatureSetting::Fixed);
    Inputs::from_graph(graph, setting)
}

/// Writes a synthetic graph and `manifest.txt` into the output directory.
pub fn cmd_synth(cfg: &RunConfig) -> Result<HeteroGraph> {
    let params = cfg.synth_params();
    let g = synth_hin(&params)?;
    create_out(&cfg.out)?;
    write_graph(&g, &cfg.out)?;
    let mut manifest = String::new();
    for (k, v) in [
        ("num_classes", params.num_classes.to_string()),
        ("nodes_per_class", params.nodes_per_class.to_string()),
        ("num_aux_types", params.num_aux_types.to_string()),
        ("aux_per_class", params.aux_per_class().to_string()),
        ("intra_edge_prob", params.intra_edge_prob.to_string()),
        ("inter_edge_prob", params.inter_edge_prob.to_string()),
        ("seed", params.seed.to_string()),
        ("num_nodes", g.num_nodes().to_string()),
        ("num_edges", g.num_edges().to_string()),
        ("num_labeled", g.labeled_nodes().len().to_string()),
    ] {
        let _ = writeln!(manifest, "{k}={v}");
    }
    write_out(&cfg.out.join("manifest.txt"), &manifest)?;
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val_loss: f64,
    pub test_accuracy: f64,
    pub checkpoint: PathBuf,
}

fn split_for(inputs: &Inputs, n_train: usize, n_val: usize, seed: u64) -> Result<Split> {
    make_splits(&inputs.graph, n_train, n_val, seed)
}

/// Result of [`fit`]: the best-epoch checkpoint, the history and the split.
#[derive(Debug)]
pub struct Fitted {
    pub checkpoint: Checkpoint,
    pub history: TrainHistory,
    pub split: Split,
    /// Set when training diverged; `checkpoint` then holds the best
    /// parameters seen before the failure.
    pub error: Option<Error>,
}

/// Splits the labeled nodes, initializes and trains a model as configured.
pub fn fit(inputs: &Inputs, cfg: &RunConfig, on_epoch: impl FnMut(&EpochRecord)) -> Result<Fitted> {
    let model = cfg.model_config();
    let (n_train, n_val) = cfg.split_sizes(inputs.graph.labeled_nodes().len());
    let split = split_for(inputs, n_train, n_val, cfg.seed)?;
    let gt = &inputs.tensors;
    let num_classes = inputs.graph.num_classes();
    let init = init_params(&model, gt.num_channels(), gt.input_dim(), num_classes, cfg.seed);
    let outcome = train(gt, &inputs.labels, &split, &model, &cfg.train_config(), init, on_epoch)?;
    let meta = [
        ("features", inputs.feature_mode.to_string()),
        ("n_train", n_train.to_string()),
        ("n_val", n_val.to_string()),
        ("seed", cfg.seed.to_string()),
        ("best_epoch", outcome.history.best_epoch.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    Ok(Fitted {
        checkpoint: Checkpoint {
            model,
            meta,
            num_channels: gt.num_channels(),
            num_classes,
            input_dim: gt.input_dim(),
            params: outcome.params,
        },
        history: outcome.history,
        split,
        error: outcome.error,
    })
}

/// Trains on the configured graph and writes `checkpoint.txt`,
/// `history.csv` and `train.log`.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    let inputs = load_inputs(cfg, None)?;
    create_out(&cfg.out)?;
    let mut log_text = String::new();
    let fitted = fit(&inputs, cfg, |r| {
        let line = r.log_line();
        log::info!("{line}");
        log_text.push_str(&line);
        log_text.push('\n');
    })?;
    write_out(&cfg.out.join("train.log"), &log_text)?;
    write_out(&cfg.out.join("history.csv"), &fitted.history.to_csv())?;
    if let Some(e) = fitted.error {
        return Err(e);
    }
    let path = cfg.checkpoint_path();
    fitted.checkpoint.save(&path)?;

    let history = &fitted.history;
    let best_val_loss = history
        .epochs
        .iter()
        .find(|r| r.epoch == history.best_epoch)
        .map_or(f64::NAN, |r| r.val_loss);
    let ck = &fitted.checkpoint;
    let test_accuracy = if fitted.split.test_ids.is_empty() {
        f64::NAN
    } else {
        evaluate(
            &inputs.tensors,
            &ck.params,
            &ck.model,
            &inputs.labels,
            &fitted.split.test_ids,
            cfg.reduction,
        )?
        .1
    };
    Ok(TrainSummary {
        best_epoch: history.best_epoch,
        epochs_run: history.epochs.len(),
        best_val_loss,
        test_accuracy,
        checkpoint: path,
    })
}

/// A checkpoint paired with the data it was trained on.
pub struct LoadedModel {
    pub checkpoint: Checkpoint,
    pub inputs: Inputs,
    pub split: Split,
}

fn meta_value<T: std::str::FromStr>(c: &Checkpoint, key: &str) -> Result<T> {
    c.meta(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Checkpoint(format!("missing or invalid meta {key}")))
}

impl LoadedModel {
    /// Pairs a checkpoint with an in-memory graph, checking that the shapes
    /// agree, and rebuilds the training split.
    pub fn from_parts(checkpoint: Checkpoint, graph: HeteroGraph) -> Result<Self> {
        let inputs = Inputs::from_graph(graph, FeatureSetting::Fixed(checkpoint_features(&checkpoint)?))?;
        Self::pair(checkpoint, inputs)
    }

    fn pair(checkpoint: Checkpoint, inputs: Inputs) -> Result<Self> {
        let gt = &inputs.tensors;
        let mismatch = |what: &str, ck: usize, data: usize| {
            Err(Error::Checkpoint(format!(
                "{what}: checkpoint has {ck}, data has {data}"
            )))
        };
        if checkpoint.input_dim != gt.input_dim() {
            return mismatch("input dimension", checkpoint.input_dim, gt.input_dim());
        }
        if checkpoint.num_channels != gt.num_channels() {
            return mismatch("relation count", checkpoint.num_channels, gt.num_channels());
        }
        if checkpoint.num_classes != inputs.graph.num_classes() {
            return mismatch("class count", checkpoint.num_classes, inputs.graph.num_classes());
        }
        let split = split_for(
            &inputs,
            meta_value(&checkpoint, "n_train")?,
            meta_value(&checkpoint, "n_val")?,
            meta_value(&checkpoint, "seed")?,
        )?;
        Ok(Self {
            checkpoint,
            inputs,
            split,
        })
    }
}

fn checkpoint_features(c: &Checkpoint) -> Result<FeatureMode> {
    meta_value::<String>(c, "features")?
        .parse()
        .map_err(|_| Error::Checkpoint("invalid feature mode".into()))
}

/// Loads the checkpoint and the graph, and rebuilds the training split.
pub fn load_model(cfg: &RunConfig) -> Result<LoadedModel> {
    let checkpoint = Checkpoint::load(&cfg.checkpoint_path())?;
    let inputs = load_inputs(cfg, Some(checkpoint_features(&checkpoint)?))?;
    LoadedModel::pair(checkpoint, inputs)
}

/// Dropout-free embeddings of every node.
pub fn embeddings(m: &LoadedModel) -> Result<DenseMatrix> {
    Ok(forward(&m.inputs.tensors, &m.checkpoint.params, &m.checkpoint.model, false, 0)?.embeddings)
}

/// Runs both evaluation protocols and writes `eval.csv`.
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalReport> {
    let m = load_model(cfg)?;
    let emb = embeddings(&m)?;
    let classification = run_classification_eval(
        &emb,
        &m.inputs.labels,
        &m.split.test_ids,
        &cfg.fractions,
        cfg.repeats,
        cfg.seed,
        cfg.knn_k,
    )?;
    let clustering = run_clustering_eval(&emb, &m.inputs.labels, cfg.repeats, cfg.seed)?;
    let mut header = model_config_pairs(&m.checkpoint.model);
    header.extend(m.checkpoint.meta.iter().map(|(k, v)| (format!("train_{k}"), v.clone())));
    for key in ["knn_k", "fractions"] {
        header.push((key.to_string(), cfg.get(key).expect("known key")));
    }
    header.push(("test_nodes".into(), m.split.test_ids.len().to_string()));
    let report = EvalReport {
        header,
        seed: cfg.seed,
        repeats: cfg.repeats,
        classification,
        clustering,
    };
    create_out(&cfg.out)?;
    write_out(&cfg.out.join("eval.csv"), &report.to_csv())?;
    Ok(report)
}

/// `<node_id>\t<e_1> ... <e_d>` with 17 significant digits.
pub fn format_embeddings(emb: &DenseMatrix) -> String {
    let mut s = String::new();
    for v in 0..emb.rows() {
        let row: Vec<String> = emb.row(v).iter().map(|x| format!("{x:.16e}")).collect();
        let _ = writeln!(s, "{v}\t{}", row.join(" "));
    }
    s
}

/// Writes `embeddings.tsv` for every node.
pub fn cmd_embed(cfg: &RunConfig) -> Result<DenseMatrix> {
    let m = load_model(cfg)?;
    let emb = embeddings(&m)?;
    create_out(&cfg.out)?;
    write_out(&cfg.out.join("embeddings.tsv"), &format_embeddings(&emb))?;
    Ok(emb)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckLine {
    pub variant: String,
    pub group: &'static str,
    pub max_error: f64,
}

/// One line per (configuration, parameter group).
pub fn cmd_gradcheck(cfg: &RunConfig, fault: Option<OpKind>) -> Result<Vec<GradcheckLine>> {
    let mut lines = Vec::new();
    for model in gradcheck_combinations() {
        let variant = format!(
            "aggregator={} fusion={} channels={}",
            model.aggregator, model.fusion_enabled, model.channels_enabled
        );
        for (group, max_error) in model_gradcheck(&model, cfg.gradcheck_eps, fault, cfg.seed)? {
            lines.push(GradcheckLine {
                variant: variant.clone(),
                group,
                max_error,
            });
        }
    }
    Ok(lines)
}

fn dispatch(name: &str, m: &ArgMatches, stdout: &mut dyn Write) -> Result<i32> {
    let cfg = config_from_matches(m)?;
    let mut say = |s: String| {
        let _ = writeln!(stdout, "{s}");
    };
    match name {
        "synth" => {
            let g = cmd_synth(&cfg)?;
            say(format!(
                "wrote {} nodes, {} edges, {} labeled to {}",
                g.num_nodes(),
                g.num_edges(),
                g.labeled_nodes().len(),
                cfg.out.display()
            ));
        }
        "train" => {
            let s = cmd_train(&cfg)?;
            say(format!(
                "best epoch {} of {} val_loss {:.6} test_acc {:.4} checkpoint {}",
                s.best_epoch,
                s.epochs_run,
                s.best_val_loss,
                s.test_accuracy,
                s.checkpoint.display()
            ));
        }
        "eval" => {
            let r = cmd_eval(&cfg)?;
            for row in &r.classification {
                say(format!(
                    "fraction {} macro_f1 {:.4} micro_f1 {:.4}",
                    row.fraction, row.macro_f1.mean, row.micro_f1.mean
                ));
            }
            say(format!(
                "nmi {:.4} ari {:.4}",
                r.clustering.nmi.mean, r.clustering.ari.mean
            ));
        }
        "embed" => {
            let e = cmd_embed(&cfg)?;
            say(format!(
                "wrote {}x{} embeddings to {}",
                e.rows(),
                e.cols(),
                cfg.out.join("embeddings.tsv").display()
            ));
        }
        "gradcheck" => {
            let fault = match m.get_one::<String>("inject_fault") {
                Some(op) => {
                    Some(OpKind::from_name(op).ok_or_else(|| Error::InvalidArgument(format!("unknown op {op:?}")))?)
                }
                None => None,
            };
            let lines = cmd_gradcheck(&cfg, fault)?;
            let mut failed = 0;
            for l in &lines {
                let ok = l.max_error <= cfg.gradcheck_tol;
                failed += usize::from(!ok);
                say(format!(
                    "{} group={} max_rel_err={:.3e} {}",
                    l.variant,
                    l.group,
                    l.max_error,
                    if ok { "ok" } else { "FAIL" }
                ));
            }
            if failed > 0 {
                say(format!(
                    "gradcheck FAILED: {failed} of {} groups above {}",
                    lines.len(),
                    cfg.gradcheck_tol
                ));
                return Ok(3);
            }
            say(format!(
                "gradcheck passed: {} groups within {}",
                lines.len(),
                cfg.gradcheck_tol
            ));
        }
        _ => unreachable!("clap restricts subcommands"),
    }
    Ok(0)
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                write!(stdout, "{rendered}")
            } else {
                write!(stderr, "{rendered}")
            };
            return code;
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    match dispatch(name, sub, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
