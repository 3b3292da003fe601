//! Run configuration: every setting the command-line tool understands.
//!
//! Settings come from built-in defaults, then an optional flat `key=value`
//! file (`#` starts a comment), then command-line flags. [`KEYS`] is the
//! single list of keys, defaults and descriptions; flags and `--help` text
//! are generated from it.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hetgraph::{FeatureMode, GraphFiles, SynthParams};
use crate::model::{Aggregator, ModelConfig};
use crate::train::{Batching, Reduction, TrainConfig};

pub struct ConfigKey {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> ConfigKey {
    ConfigKey { name, default, help }
}

/// Every configuration key with its default.
pub const KEYS: &[ConfigKey] = &[
    key("seed", "1", "root seed for every random stream"),
    key("out", "out", "output directory"),
    key("data", "", "graph directory holding nodes.tsv, edges.tsv and optionally features.tsv, labels.tsv"),
    key("nodes", "", "nodes file (overrides <data>/nodes.tsv)"),
    key("edges", "", "edges file (overrides <data>/edges.tsv)"),
    key("features_file", "", "features file (overrides <data>/features.tsv)"),
    key("labels", "", "labels file (overrides <data>/labels.tsv)"),
    key("checkpoint", "", "checkpoint to read (eval, embed); empty means <out>/checkpoint.txt"),
    key("features", "auto", "input features: auto, provided, onehot-id or onehot-type; auto uses the features file when given, else onehot-id up to 10000 nodes, else onehot-type"),
    key("num_layers", "2", "number of convolution layers"),
    key("dim", "64", "embedding width of every layer"),
    key("attention_dim", "128", "hidden width of the attention aggregator"),
    key("conv_order", "1", "order K of the relation convolutions"),
    key("aggregator", "attention", "channel aggregator: attention, gated, pooling, mean or single:<t>"),
    key("fusion", "true", "fuse a whole-graph branch into the final embeddings"),
    key("channels", "true", "use per-relation channels (false replaces them with a whole-graph branch)"),
    key("dropout", "0.5", "dropout rate"),
    key("learning_rate", "0.01", "Adam learning rate"),
    key("weight_decay", "0.0005", "L2 penalty on weight matrices"),
    key("max_epochs", "200", "maximum training epochs"),
    key("patience", "30", "epochs without validation-loss improvement before stopping"),
    key("batch", "full", "full, or a labeled-minibatch size"),
    key("reduction", "sum", "loss reduction over labeled nodes: sum or mean"),
    key("n_train", "auto", "training nodes; auto is 10% of labeled nodes"),
    key("n_val", "auto", "validation nodes; auto is 5% of labeled nodes"),
    key("knn_k", "5", "neighbours in the KNN classifier"),
    key("repeats", "10", "trials per evaluation setting"),
    key("fractions", "0.2,0.4,0.6,0.8", "fractions of test nodes used as the KNN reference set"),
    key("synth_classes", "3", "synthetic graph: classes"),
    key("synth_nodes_per_class", "200", "synthetic graph: target nodes per class"),
    key("synth_aux_types", "2", "synthetic graph: auxiliary node types (one relation each)"),
    key("synth_intra", "0.05", "synthetic graph: same-class link probability"),
    key("synth_inter", "0.005", "synthetic graph: cross-class link probability"),
    key("synth_aux_per_class", "auto", "synthetic graph: auxiliary nodes per class in each auxiliary type; auto matches synth_nodes_per_class"),
    key("gradcheck_eps", "0.00001", "gradient check: central-difference step"),
    key("gradcheck_tol", "0.0001", "gradient check: maximum relative error"),
];

/// How input features are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSetting {
    Auto,
    Fixed(FeatureMode),
}

/// Largest graph for which `auto` picks one-hot identity features.
pub const ONEHOT_ID_LIMIT: usize = 10_000;

impl FeatureSetting {
    pub fn resolve(self, has_features: bool, num_nodes: usize) -> FeatureMode {
        match self {
            Self::Fixed(m) => m,
            Self::Auto if has_features => FeatureMode::Provided,
            Self::Auto if num_nodes <= ONEHOT_ID_LIMIT => FeatureMode::OneHotId,
            Self::Auto => FeatureMode::OneHotType,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data: Option<PathBuf>,
    pub nodes: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub features_file: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub features: FeatureSetting,
    pub num_layers: usize,
    pub dim: usize,
    pub attention_dim: usize,
    pub conv_order: usize,
    pub aggregator: Aggregator,
    pub fusion: bool,
    pub channels: bool,
    pub dropout: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch: Batching,
    pub reduction: Reduction,
    pub n_train: Option<usize>,
    pub n_val: Option<usize>,
    pub knn_k: usize,
    pub repeats: usize,
    pub fractions: Vec<f64>,
    pub synth_classes: usize,
    pub synth_nodes_per_class: usize,
    pub synth_aux_types: usize,
    pub synth_intra: f64,
    pub synth_inter: f64,
    pub synth_aux_per_class: Option<usize>,
    pub gradcheck_eps: f64,
    pub gradcheck_tol: f64,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("invalid value {value:?} for {key}")))
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn auto_count(key: &str, v: &str) -> Result<Option<usize>> {
    if v == "auto" {
        Ok(None)
    } else {
        parse(key, v).map(Some)
    }
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut c = Self {
            seed: 0,
            out: PathBuf::new(),
            data: None,
            nodes: None,
            edges: None,
            features_file: None,
            labels: None,
            checkpoint: None,
            features: FeatureSetting::Auto,
            num_layers: 0,
            dim: 0,
            attention_dim: 0,
            conv_order: 0,
            aggregator: Aggregator::Attention,
            fusion: false,
            channels: false,
            dropout: 0.0,
            learning_rate: 0.0,
            weight_decay: 0.0,
            max_epochs: 0,
            patience: 0,
            batch: Batching::Full,
            reduction: Reduction::Sum,
            n_train: None,
            n_val: None,
            knn_k: 0,
            repeats: 0,
            fractions: Vec::new(),
            synth_classes: 0,
            synth_nodes_per_class: 0,
            synth_aux_types: 0,
            synth_intra: 0.0,
            synth_inter: 0.0,
            synth_aux_per_class: None,
            gradcheck_eps: 0.0,
            gradcheck_tol: 0.0,
        };
        for k in KEYS {
            c.set(k.name, k.default).expect("built-in defaults parse");
        }
        c
    }
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "data" => self.data = opt_path(v),
            "nodes" => self.nodes = opt_path(v),
            "edges" => self.edges = opt_path(v),
            "features_file" => self.features_file = opt_path(v),
            "labels" => self.labels = opt_path(v),
            "checkpoint" => self.checkpoint = opt_path(v),
            "features" => {
                self.features = if v == "auto" {
                    FeatureSetting::Auto
                } else {
                    FeatureSetting::Fixed(v.parse()?)
                }
            }
            "num_layers" => self.num_layers = parse(key, v)?,
            "dim" => self.dim = parse(key, v)?,
            "attention_dim" => self.attention_dim = parse(key, v)?,
            "conv_order" => self.conv_order = parse(key, v)?,
            "aggregator" => self.aggregator = v.parse()?,
            "fusion" => self.fusion = parse(key, v)?,
            "channels" => self.channels = parse(key, v)?,
            "dropout" => self.dropout = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "max_epochs" => self.max_epochs = parse(key, v)?,
            "patience" => self.patience = parse(key, v)?,
            "batch" => {
                self.batch = if v == "full" {
                    Batching::Full
                } else {
                    Batching::LabeledMinibatch(parse(key, v)?)
                }
            }
            "reduction" => {
                self.reduction = match v {
                    "sum" => Reduction::Sum,
                    "mean" => Reduction::Mean,
                    _ => {
                        return Err(Error::InvalidArgument(format!(
                            "reduction must be sum or mean, got {v:?}"
                        )))
                    }
                }
            }
            "n_train" => self.n_train = auto_count(key, v)?,
            "n_val" => self.n_val = auto_count(key, v)?,
            "knn_k" => self.knn_k = parse(key, v)?,
            "repeats" => self.repeats = parse(key, v)?,
            "fractions" => self.fractions = v.split(',').map(|f| parse(key, f.trim())).collect::<Result<_>>()?,
            "synth_classes" => self.synth_classes = parse(key, v)?,
            "synth_nodes_per_class" => self.synth_nodes_per_class = parse(key, v)?,
            "synth_aux_types" => self.synth_aux_types = parse(key, v)?,
            "synth_intra" => self.synth_intra = parse(key, v)?,
            "synth_inter" => self.synth_inter = parse(key, v)?,
            "synth_aux_per_class" => self.synth_aux_per_class = auto_count(key, v)?,
            "gradcheck_eps" => self.gradcheck_eps = parse(key, v)?,
            "gradcheck_tol" => self.gradcheck_tol = parse(key, v)?,
            _ => return Err(Error::InvalidArgument(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Current value of `key` in the same textual form [`set`](Self::set) accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        let auto = |n: Option<usize>| n.map_or("auto".to_string(), |n| n.to_string());
        Some(match key {
            "seed" => self.seed.to_string(),
            "out" => self.out.display().to_string(),
            "data" => show_path(&self.data),
            "nodes" => show_path(&self.nodes),
            "edges" => show_path(&self.edges),
            "features_file" => show_path(&self.features_file),
            "labels" => show_path(&self.labels),
            "checkpoint" => show_path(&self.checkpoint),
            "features" => match self.features {
                FeatureSetting::Auto => "auto".into(),
                FeatureSetting::Fixed(m) => m.to_string(),
            },
            "num_layers" => self.num_layers.to_string(),
            "dim" => self.dim.to_string(),
            "attention_dim" => self.attention_dim.to_string(),
            "conv_order" => self.conv_order.to_string(),
            "aggregator" => self.aggregator.to_string(),
            "fusion" => self.fusion.to_string(),
            "channels" => self.channels.to_string(),
            "dropout" => self.dropout.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "max_epochs" => self.max_epochs.to_string(),
            "patience" => self.patience.to_string(),
            "batch" => match self.batch {
                Batching::Full => "full".into(),
                Batching::LabeledMinibatch(n) => n.to_string(),
            },
            "reduction" => match self.reduction {
                Reduction::Sum => "sum".into(),
                Reduction::Mean => "mean".into(),
            },
            "n_train" => auto(self.n_train),
            "n_val" => auto(self.n_val),
            "knn_k" => self.knn_k.to_string(),
            "repeats" => self.repeats.to_string(),
            "fractions" => self
                .fractions
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(","),
            "synth_classes" => self.synth_classes.to_string(),
            "synth_nodes_per_class" => self.synth_nodes_per_class.to_string(),
            "synth_aux_types" => self.synth_aux_types.to_string(),
            "synth_intra" => self.synth_intra.to_string(),
            "synth_inter" => self.synth_inter.to_string(),
            "synth_aux_per_class" => auto(self.synth_aux_per_class),
            "gradcheck_eps" => self.gradcheck_eps.to_string(),
            "gradcheck_tol" => self.gradcheck_tol.to_string(),
            _ => return None,
        })
    }

    /// Every key with its current value, in [`KEYS`] order.
    pub fn pairs(&self) -> Vec<(String, String)> {
        KEYS.iter()
            .map(|k| (k.name.to_string(), self.get(k.name).expect("listed key")))
            .collect()
    }

    /// Applies a `key=value` file on top of the current values.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("{}:{}: expected key=value", origin.display(), i + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::InvalidArgument(format!("{}:{}: {e}", origin.display(), i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, path)
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            aggregator: self.aggregator,
            attention_dim: self.attention_dim,
            conv_order: self.conv_order,
            fusion_enabled: self.fusion,
            channels_enabled: self.channels,
            dropout_rate: self.dropout,
            ..ModelConfig::default()
        }
        .with_uniform_dims(self.num_layers, self.dim)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            max_epochs: self.max_epochs,
            patience: self.patience,
            batching: self.batch,
            reduction: self.reduction,
            seed: self.seed,
        }
    }

    pub fn synth_params(&self) -> SynthParams {
        SynthParams {
            num_classes: self.synth_classes,
            nodes_per_class: self.synth_nodes_per_class,
            num_aux_types: self.synth_aux_types,
            intra_edge_prob: self.synth_intra,
            inter_edge_prob: self.synth_inter,
            aux_nodes_per_class: self.synth_aux_per_class,
            seed: self.seed,
        }
    }

    /// Graph file locations: explicit paths win over the `data` directory.
    pub fn graph_files(&self) -> Result<GraphFiles> {
        let base = self.data.as_deref().map(GraphFiles::in_dir);
        let required = |explicit: &Option<PathBuf>, from_dir: Option<PathBuf>, what: &str| {
            explicit
                .clone()
                .or(from_dir)
                .ok_or_else(|| Error::InvalidArgument(format!("no {what} file: set data=<dir> or {what}=<file>")))
        };
        Ok(GraphFiles {
            nodes: required(&self.nodes, base.as_ref().map(|b| b.nodes.clone()), "nodes")?,
            edges: required(&self.edges, base.as_ref().map(|b| b.edges.clone()), "edges")?,
            features: self
                .features_file
                .clone()
                .or_else(|| base.as_ref().and_then(|b| b.features.clone())),
            labels: self
                .labels
                .clone()
                .or_else(|| base.as_ref().and_then(|b| b.labels.clone())),
        })
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.out.join("checkpoint.txt"))
    }

    /// `(n_train, n_val)` for `num_labeled` labeled nodes.
    pub fn split_sizes(&self, num_labeled: usize) -> (usize, usize) {
        let n_train = self
            .n_train
            .unwrap_or_else(|| ((num_labeled as f64 * 0.1).round() as usize).max(1));
        let n_val = self
            .n_val
            .unwrap_or_else(|| (num_labeled as f64 * 0.05).round() as usize);
        (n_train, n_val)
    }
}
