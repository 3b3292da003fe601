use std::collections::HashMap;

use rand::Rng;

use super::{Aggregator, ModelConfig};
use crate::diff::{NodeId, Tape};
use crate::linalg::DenseMatrix;
use crate::seed;

/// Whether weight decay applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    AttentionVector,
}

impl ParamKind {
    pub fn decays(self) -> bool {
        self == ParamKind::Weight
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub value: DenseMatrix,
}

/// Named trainable matrices in allocation order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

/// Parameter groups, in report order.
pub const PARAM_GROUPS: [&str; 11] = [
    "theta_channel",
    "att_q",
    "att_w",
    "att_b",
    "gate_w",
    "pool_w",
    "pool_b",
    "theta_global",
    "fc_w",
    "fc_b",
    "classifier",
];

/// Maps a parameter name to its entry in [`PARAM_GROUPS`].
pub fn param_group(name: &str) -> &'static str {
    let last = name.rsplit('.').next().unwrap_or(name);
    match name.split('.').next().unwrap_or("") {
        "attention" => match last {
            "q" => "att_q",
            "w" => "att_w",
            _ => "att_b",
        },
        "gate" => "gate_w",
        "pool" if last == "w" => "pool_w",
        "pool" => "pool_b",
        "global" | "global2" => "theta_global",
        "fusion" if last == "w" => "fc_w",
        "fusion" => "fc_b",
        "classifier" => "classifier",
        _ => "theta_channel",
    }
}

impl ModelParams {
    pub fn new(params: Vec<Param>) -> Self {
        let index = params.iter().enumerate().map(|(i, p)| (p.name.clone(), i)).collect();
        Self { params, index }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn get(&self, name: &str) -> Option<&DenseMatrix> {
        self.index.get(name).map(|&i| &self.params[i].value)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn values(&self) -> Vec<DenseMatrix> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    /// Replaces all values, keeping names and kinds.
    pub fn with_values(&self, values: Vec<DenseMatrix>) -> Self {
        assert_eq!(values.len(), self.params.len());
        let params = self
            .params
            .iter()
            .zip(values)
            .map(|(p, value)| Param {
                name: p.name.clone(),
                kind: p.kind,
                value,
            })
            .collect();
        Self {
            params,
            index: self.index.clone(),
        }
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.data().len()).sum()
    }

    /// Puts every parameter on `tape` as a differentiable input.
    pub fn record(&self, tape: &mut Tape) -> Vec<NodeId> {
        self.params.iter().map(|p| tape.input(p.value.clone())).collect()
    }
}

pub(crate) fn channel_theta(t: usize, layer: usize) -> String {
    format!("channel{t}.layer{layer}.theta")
}

pub(crate) fn global_theta(branch: &str, layer: usize) -> String {
    format!("{branch}.layer{layer}.theta")
}

struct Builder<R: Rng> {
    rng: R,
    params: Vec<Param>,
}

impl<R: Rng> Builder<R> {
    fn weight(&mut self, name: String, rows: usize, cols: usize, kind: ParamKind) {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| self.rng.gen_range(-bound..=bound)).collect();
        self.params.push(Param {
            name,
            kind,
            value: DenseMatrix::new(rows, cols, data).unwrap(),
        });
    }

    fn bias(&mut self, name: String, cols: usize) {
        self.params.push(Param {
            name,
            kind: ParamKind::Bias,
            value: DenseMatrix::zeros(1, cols),
        });
    }
}

/// Allocates exactly the parameters the configuration uses. Weights are
/// Glorot-uniform, biases zero; the attention vector is drawn like a weight.
pub fn init_params(
    config: &ModelConfig,
    num_channels: usize,
    input_dim: usize,
    num_classes: usize,
    seed: u64,
) -> ModelParams {
    let mut b = Builder {
        rng: seed::rng(seed, "init", 0),
        params: Vec::new(),
    };
    let active = config.active_channels(num_channels);
    let dims: Vec<usize> = std::iter::once(input_dim)
        .chain(config.hidden_dims.iter().copied())
        .collect();

    for l in 1..=config.num_layers {
        let (din, dout) = (dims[l - 1], dims[l]);
        for &t in &active {
            b.weight(channel_theta(t, l), din, dout, ParamKind::Weight);
        }
        if !active.is_empty() {
            match config.aggregator {
                Aggregator::Attention => {
                    let dq = config.attention_dim;
                    b.weight(format!("attention.layer{l}.q"), dq, 1, ParamKind::AttentionVector);
                    b.weight(format!("attention.layer{l}.w"), dq, dout, ParamKind::Weight);
                    b.bias(format!("attention.layer{l}.b"), dq);
                }
                Aggregator::Gated => {
                    for &t in &active {
                        b.weight(format!("gate.layer{l}.channel{t}.w"), dout, dout, ParamKind::Weight);
                    }
                }
                Aggregator::Pooling => {
                    b.weight(format!("pool.layer{l}.w"), dout, dout, ParamKind::Weight);
                    b.bias(format!("pool.layer{l}.b"), dout);
                }
                Aggregator::Mean | Aggregator::Single(_) => {}
            }
        }
    }
    let mut branches = Vec::new();
    if config.fusion_enabled {
        branches.push("global");
    }
    if !config.channels_enabled {
        branches.push("global2");
    }
    for branch in branches {
        for l in 1..=config.num_layers {
            b.weight(global_theta(branch, l), dims[l - 1], dims[l], ParamKind::Weight);
        }
    }
    let d = config.output_dim();
    if config.fusion_enabled {
        b.weight("fusion.w".into(), d, 2 * d, ParamKind::Weight);
        b.bias("fusion.b".into(), d);
    }
    b.weight("classifier.theta".into(), d, num_classes, ParamKind::Weight);
    ModelParams::new(b.params)
}
