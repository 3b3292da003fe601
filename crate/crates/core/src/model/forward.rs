use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{channel_theta, global_theta};
use super::{Aggregator, GraphTensors, ModelConfig, ModelParams};
use crate::diff::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SparseMatrix};
use crate::seed;

/// Inverted dropout: kept entries are scaled by `1 / (1 - rate)`.
pub struct Dropout {
    rate: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Self {
        Self {
            rate,
            rng: seed::rng(seed, "dropout", 0),
        }
    }

    fn apply(&mut self, tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        if self.rate <= 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - self.rate);
        if !tape.requires_grad(x) {
            // Constant inputs (often one-hot and mostly zero) are masked in
            // place; only nonzero entries consume a draw.
            let mut value = tape.value(x).clone();
            for v in value.data_mut().iter_mut().filter(|v| **v != 0.0) {
                *v = if self.rng.gen::<f64>() < self.rate {
                    0.0
                } else {
                    *v * keep
                };
            }
            return Ok(tape.constant(value));
        }
        let (rows, cols) = tape.value(x).shape();
        let data = (0..rows * cols)
            .map(|_| if self.rng.gen::<f64>() < self.rate { 0.0 } else { keep })
            .collect();
        tape.mul_const(x, DenseMatrix::new(rows, cols, data)?)
    }
}

fn maybe_dropout(tape: &mut Tape, dropout: &mut Option<Dropout>, x: NodeId) -> Result<NodeId> {
    match dropout {
        Some(d) => d.apply(tape, x),
        None => Ok(x),
    }
}

/// `ReLU(Σ_{k=1..K} P^k Z Θ)`. `ZΘ` is formed once and the powers of `P`
/// are applied to it by repeated sparse products.
pub fn channel_forward(
    tape: &mut Tape,
    p: &Arc<SparseMatrix>,
    z: NodeId,
    theta: NodeId,
    order: usize,
) -> Result<NodeId> {
    if order == 0 {
        return Err(Error::InvalidArgument("convolution order must be at least 1".into()));
    }
    let projected = tape.matmul(z, theta)?;
    let mut power = tape.spmm_const(p, projected)?;
    let mut total = power;
    for _ in 1..order {
        power = tape.spmm_const(p, power)?;
        total = tape.add(total, power)?;
    }
    tape.relu(total)
}

/// Returns the aggregated matrix and the `1×T` channel weight row `μ`.
pub fn aggregate_attention(
    tape: &mut Tape,
    hs: &[NodeId],
    q: NodeId,
    w: NodeId,
    b: NodeId,
) -> Result<(NodeId, NodeId)> {
    let mut scores = Vec::with_capacity(hs.len());
    for &h in hs {
        let proj = tape.matmul_bt(h, w)?;
        let proj = tape.add_bias_row(proj, b)?;
        let act = tape.tanh(proj)?;
        let per_node = tape.matmul(act, q)?;
        scores.push(tape.sum_all(per_node)?);
    }
    let scores = tape.concat_cols(&scores)?;
    let mu = tape.softmax_rows(scores)?;
    let weighted = hs
        .iter()
        .enumerate()
        .map(|(t, &h)| tape.scale_by_entry(h, mu, t))
        .collect::<Result<Vec<_>>>()?;
    Ok((tape.sum_of(&weighted)?, mu))
}

pub fn aggregate_gated(tape: &mut Tape, hs: &[NodeId], gates: &[NodeId]) -> Result<NodeId> {
    if hs.len() != gates.len() {
        return Err(Error::shape("aggregate_gated", "one gate matrix per channel"));
    }
    let gated = hs
        .iter()
        .zip(gates)
        .map(|(&h, &wg)| {
            let pre = tape.matmul_bt(h, wg)?;
            let g = tape.sigmoid(pre)?;
            tape.elem_mul(g, h)
        })
        .collect::<Result<Vec<_>>>()?;
    tape.sum_of(&gated)
}

pub fn aggregate_pooling(tape: &mut Tape, hs: &[NodeId], w: NodeId, b: NodeId) -> Result<NodeId> {
    let pooled = hs
        .iter()
        .map(|&h| {
            let pre = tape.matmul_bt(h, w)?;
            let pre = tape.add_bias_row(pre, b)?;
            tape.relu(pre)
        })
        .collect::<Result<Vec<_>>>()?;
    tape.mean_of_set(&pooled)
}

pub fn aggregate_mean(tape: &mut Tape, hs: &[NodeId]) -> Result<NodeId> {
    tape.mean_of_set(hs)
}

/// Tape handles of the interesting forward values.
#[derive(Debug, Clone)]
pub struct ForwardNodes {
    pub probs: NodeId,
    pub logits: NodeId,
    pub embeddings: NodeId,
    /// `μ` per layer (attention only).
    pub channel_weights: Vec<NodeId>,
    /// Per layer, `(channel, H_t)` for each computed channel.
    pub channel_outputs: Vec<Vec<(usize, NodeId)>>,
}

fn lookup(params: &ModelParams, nodes: &[NodeId], name: &str) -> Result<NodeId> {
    params
        .position(name)
        .map(|i| nodes[i])
        .ok_or_else(|| Error::InvalidArgument(format!("model has no parameter {name}")))
}

#[allow(clippy::too_many_arguments)]
fn whole_graph_branch(
    tape: &mut Tape,
    gt: &GraphTensors,
    x: NodeId,
    params: &ModelParams,
    nodes: &[NodeId],
    config: &ModelConfig,
    branch: &str,
    dropout: &mut Option<Dropout>,
) -> Result<NodeId> {
    let mut z = x;
    for l in 1..=config.num_layers {
        let input = maybe_dropout(tape, dropout, z)?;
        let theta = lookup(params, nodes, &global_theta(branch, l))?;
        z = channel_forward(tape, &gt.whole, input, theta, config.conv_order)?;
    }
    Ok(z)
}

/// Records the full forward pass on `tape`. `nodes` are the tape handles of
/// `params` (see [`ModelParams::record`]). Passing a [`Dropout`] switches on
/// training-mode dropout.
pub fn build_forward(
    tape: &mut Tape,
    gt: &GraphTensors,
    params: &ModelParams,
    nodes: &[NodeId],
    config: &ModelConfig,
    mut dropout: Option<Dropout>,
) -> Result<ForwardNodes> {
    config.validate(gt.num_channels())?;
    if nodes.len() != params.len() {
        return Err(Error::InvalidArgument(
            "parameter handles do not match parameters".into(),
        ));
    }
    let x = tape.constant(gt.features.clone());
    let active = config.active_channels(gt.num_channels());
    let mut channel_weights = Vec::new();
    let mut channel_outputs = Vec::new();

    let mut z = x;
    if config.channels_enabled {
        for l in 1..=config.num_layers {
            let input = maybe_dropout(tape, &mut dropout, z)?;
            let mut hs = Vec::with_capacity(active.len());
            for &t in &active {
                let theta = lookup(params, nodes, &channel_theta(t, l))?;
                hs.push(channel_forward(tape, &gt.channels[t], input, theta, config.conv_order)?);
            }
            z = match config.aggregator {
                Aggregator::Attention => {
                    let q = lookup(params, nodes, &format!("attention.layer{l}.q"))?;
                    let w = lookup(params, nodes, &format!("attention.layer{l}.w"))?;
                    let b = lookup(params, nodes, &format!("attention.layer{l}.b"))?;
                    let (agg, mu) = aggregate_attention(tape, &hs, q, w, b)?;
                    channel_weights.push(mu);
                    agg
                }
                Aggregator::Gated => {
                    let gates = active
                        .iter()
                        .map(|t| lookup(params, nodes, &format!("gate.layer{l}.channel{t}.w")))
                        .collect::<Result<Vec<_>>>()?;
                    aggregate_gated(tape, &hs, &gates)?
                }
                Aggregator::Pooling => {
                    let w = lookup(params, nodes, &format!("pool.layer{l}.w"))?;
                    let b = lookup(params, nodes, &format!("pool.layer{l}.b"))?;
                    aggregate_pooling(tape, &hs, w, b)?
                }
                Aggregator::Mean => aggregate_mean(tape, &hs)?,
                Aggregator::Single(_) => hs[0],
            };
            channel_outputs.push(active.iter().copied().zip(hs).collect());
        }
    } else {
        z = whole_graph_branch(tape, gt, x, params, nodes, config, "global2", &mut dropout)?;
    }

    let embeddings = if config.fusion_enabled {
        let zw = whole_graph_branch(tape, gt, x, params, nodes, config, "global", &mut dropout)?;
        let fused = tape.concat_cols(&[z, zw])?;
        let fused = maybe_dropout(tape, &mut dropout, fused)?;
        let w = lookup(params, nodes, "fusion.w")?;
        let b = lookup(params, nodes, "fusion.b")?;
        let pre = tape.matmul_bt(fused, w)?;
        let pre = tape.add_bias_row(pre, b)?;
        tape.relu(pre)?
    } else {
        z
    };

    let theta = lookup(params, nodes, "classifier.theta")?;
    let logits = tape.matmul(embeddings, theta)?;
    let probs = tape.softmax_rows(logits)?;
    Ok(ForwardNodes {
        probs,
        logits,
        embeddings,
        channel_weights,
        channel_outputs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// `N×C` class probabilities.
    pub probs: DenseMatrix,
    /// `N×d` final embeddings.
    pub embeddings: DenseMatrix,
    /// `μ` per layer (attention only).
    pub channel_weights: Vec<Vec<f64>>,
}

/// Runs the model outside of training. With `training` set, dropout masks
/// are drawn from `dropout_seed`.
pub fn forward(
    gt: &GraphTensors,
    params: &ModelParams,
    config: &ModelConfig,
    training: bool,
    dropout_seed: u64,
) -> Result<ForwardOutput> {
    let mut tape = Tape::new();
    let nodes: Vec<NodeId> = params.iter().map(|p| tape.constant(p.value.clone())).collect();
    let dropout = training.then(|| Dropout::new(config.dropout_rate, dropout_seed));
    let out = build_forward(&mut tape, gt, params, &nodes, config, dropout)?;
    Ok(ForwardOutput {
        probs: tape.value(out.probs).clone(),
        embeddings: tape.value(out.embeddings).clone(),
        channel_weights: out
            .channel_weights
            .iter()
            .map(|&m| tape.value(m).data().to_vec())
            .collect(),
    })
}

/// Row-wise argmax; ties go to the lowest class id.
pub fn predict_labels(probs: &DenseMatrix) -> Vec<usize> {
    (0..probs.rows())
        .map(|r| {
            let row = probs.row(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ln(v: f64) -> f64 {
        v.ln()
    }

    #[test]
    fn zero_row_yields_zero_output() {
        let mut t = Tape::new();
        let p = Arc::new(
            SparseMatrix::from_edges(&[(0, 1)], 3, 3, true)
                .unwrap()
                .row_normalize()
                .unwrap(),
        );
        let z = t.input(DenseMatrix::from_rows(&[
            vec![1.0, 2.0],
            vec![3.0, -1.0],
            vec![5.0, 5.0],
        ]));
        let th = t.input(DenseMatrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 1.0]]));
        let h = channel_forward(&mut t, &p, z, th, 2).unwrap();
        assert_eq!(t.value(h).row(2), &[0.0, 0.0]);
    }

    #[test]
    fn identity_channel_is_identity() {
        let mut t = Tape::new();
        let p = Arc::new(SparseMatrix::identity(3));
        let zv = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.25, 3.0], vec![0.0, 7.0]]);
        let z = t.input(zv.clone());
        let th = t.input(DenseMatrix::identity(2));
        let h = channel_forward(&mut t, &p, z, th, 1).unwrap();
        assert_eq!(t.value(h), &zv);
    }

    #[test]
    fn attention_singleton_and_identical_channels() {
        let mut t = Tape::new();
        let hv = DenseMatrix::from_rows(&[vec![0.3, -0.2], vec![1.0, 0.5]]);
        let h = t.input(hv.clone());
        let q = t.input(DenseMatrix::from_rows(&[vec![0.7], vec![-0.4], vec![0.1]]));
        let w = t.input(DenseMatrix::from_rows(&[
            vec![0.2, 0.1],
            vec![-0.3, 0.8],
            vec![0.5, 0.5],
        ]));
        let b = t.input(DenseMatrix::from_rows(&[vec![0.0, 0.1, -0.1]]));
        let (z, mu) = aggregate_attention(&mut t, &[h], q, w, b).unwrap();
        assert_eq!(t.value(mu).data(), &[1.0]);
        assert_eq!(t.value(z), &hv);

        let (h2, h3) = (t.input(hv.clone()), t.input(hv.clone()));
        let (z, mu) = aggregate_attention(&mut t, &[h, h2, h3], q, w, b).unwrap();
        for &m in t.value(mu).data() {
            assert!((m - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!(t.value(z).max_abs_diff(&hv) < 1e-12);
    }

    #[test]
    fn attention_scalar_hand_computation() {
        let mut t = Tape::new();
        let h1 = t.input(DenseMatrix::scalar(0.0));
        let h2 = t.input(DenseMatrix::scalar(1.0));
        let one = DenseMatrix::scalar(1.0);
        let (q, w) = (t.input(one.clone()), t.input(one));
        let b = t.input(DenseMatrix::scalar(0.0));
        let (_, mu) = aggregate_attention(&mut t, &[h1, h2], q, w, b).unwrap();
        let mu = t.value(mu).data();
        assert!((mu[0] - 0.3184).abs() < 1e-3 && (mu[1] - 0.6816).abs() < 1e-3);
        let w1 = 1f64.tanh();
        assert!((mu[1] - w1.exp() / (1.0 + w1.exp())).abs() < 1e-12);
    }

    #[test]
    fn gated_cases() {
        let mut t = Tape::new();
        let h1 = t.input(DenseMatrix::from_rows(&[vec![1.0, -2.0]]));
        let h2 = t.input(DenseMatrix::from_rows(&[vec![3.0, 0.5]]));
        let zero = t.input(DenseMatrix::zeros(2, 2));
        let z = aggregate_gated(&mut t, &[h1, h2], &[zero, zero]).unwrap();
        assert_eq!(t.value(z).row(0), &[2.0, -0.75]);

        let h = t.input(DenseMatrix::from_rows(&[vec![2.0, -2.0]]));
        let eye = t.input(DenseMatrix::identity(2));
        let z = aggregate_gated(&mut t, &[h], &[eye]).unwrap();
        let z = t.value(z).row(0);
        assert!((z[0] - 1.7616).abs() < 1e-3 && (z[1] + 0.2384).abs() < 1e-3);

        let hz = t.input(DenseMatrix::zeros(1, 2));
        let big = t.input(DenseMatrix::filled(2, 2, 9.0));
        let z = aggregate_gated(&mut t, &[hz], &[big]).unwrap();
        assert_eq!(t.value(z).row(0), &[0.0, 0.0]);
    }

    #[test]
    fn pooling_cases() {
        let mut t = Tape::new();
        let a = t.input(DenseMatrix::scalar(1.0));
        let b3 = t.input(DenseMatrix::scalar(3.0));
        let w = t.input(DenseMatrix::scalar(2.0));
        let b = t.input(DenseMatrix::scalar(-1.0));
        let z = aggregate_pooling(&mut t, &[a, b3], w, b).unwrap();
        assert_eq!(t.value(z).get(0, 0), 3.0);

        let hv = DenseMatrix::from_rows(&[vec![0.5, 2.0]]);
        let h = t.input(hv.clone());
        let eye = t.input(DenseMatrix::identity(2));
        let zb = t.input(DenseMatrix::zeros(1, 2));
        let z = aggregate_pooling(&mut t, &[h], eye, zb).unwrap();
        assert_eq!(t.value(z), &hv);
    }

    #[test]
    fn mean_cases() {
        let mut t = Tape::new();
        let a = t.input(DenseMatrix::scalar(0.0));
        let b = t.input(DenseMatrix::scalar(4.0));
        let z = aggregate_mean(&mut t, &[a, b]).unwrap();
        assert_eq!(t.value(z).get(0, 0), 2.0);
        let z = aggregate_mean(&mut t, &[b, b]).unwrap();
        assert_eq!(t.value(z).get(0, 0), 4.0);
    }

    #[test]
    fn argmax_ties_go_low() {
        let f = DenseMatrix::from_rows(&[vec![0.1, 0.7, 0.2], vec![1.0 / 3.0; 3]]);
        assert_eq!(predict_labels(&f), vec![1, 0]);
        let _ = ln(1.0);
    }
}
