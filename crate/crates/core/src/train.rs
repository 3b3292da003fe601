//! Semi-supervised training.
//!
//! The loss is masked cross-entropy over labeled nodes, optimized with Adam
//! (L2 folded into the gradient for weight matrices). After every epoch the
//! model is evaluated without dropout on the validation nodes; training
//! stops once validation loss has failed to improve for `patience`
//! consecutive epochs and the best-epoch parameters are returned.

use rand::seq::SliceRandom;

use crate::diff::Tape;
use crate::error::{Error, Result};
use crate::hetgraph::Split;
use crate::linalg::DenseMatrix;
use crate::model::{build_forward, predict_labels, Dropout, GraphTensors, ModelConfig, ModelParams};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Batching {
    Full,
    /// Loss restricted to successive chunks of the shuffled training nodes;
    /// the graph forward pass is still full-graph.
    LabeledMinibatch(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batching: Batching,
    pub reduction: Reduction,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            weight_decay: 0.0005,
            max_epochs: 200,
            patience: 30,
            batching: Batching::Full,
            reduction: Reduction::Sum,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be a finite non-negative number",
                self.learning_rate
            )));
        }
        if self.patience > self.max_epochs {
            return Err(Error::InvalidArgument("patience exceeds max_epochs".into()));
        }
        if self.batching == Batching::LabeledMinibatch(0) {
            return Err(Error::InvalidArgument("minibatch size must be positive".into()));
        }
        Ok(())
    }
}

/// Adam moments, one pair per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<DenseMatrix>,
    pub v: Vec<DenseMatrix>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<_> = params
            .iter()
            .map(|p| DenseMatrix::zeros(p.value.rows(), p.value.cols()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamHyper {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// One Adam update. Weight decay is added to the gradient of weight matrices
/// only (`g + λθ`); biases and the attention vector are not decayed.
pub fn adam_step(params: &mut ModelParams, grads: &[DenseMatrix], state: &mut AdamState, h: AdamHyper) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::shape("adam_step", "gradient count differs from parameter count"));
    }
    for (p, g) in params.iter().zip(grads) {
        if g.shape() != p.value.shape() {
            return Err(Error::shape(
                "adam_step",
                format!("{}: gradient {:?} for {:?}", p.name, g.shape(), p.value.shape()),
            ));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient of {}", p.name)));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - h.beta1.powi(t);
    let c2 = 1.0 - h.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let decay = if p.kind.decays() { h.weight_decay } else { 0.0 };
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (k, (theta, &g)) in p.value.data_mut().iter_mut().zip(grads[i].data()).enumerate() {
            let g = g + decay * *theta;
            m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * g;
            v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * g * g;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            *theta -= h.lr * m_hat / (v_hat.sqrt() + h.eps);
        }
    }
    Ok(())
}

/// `(row, class)` pairs for the given labeled nodes.
pub fn targets_for(labels: &[Option<usize>], ids: &[usize]) -> Result<Vec<(usize, usize)>> {
    ids.iter()
        .map(|&v| {
            labels
                .get(v)
                .copied()
                .flatten()
                .map(|c| (v, c))
                .ok_or_else(|| Error::InvalidArgument(format!("node {v} has no label")))
        })
        .collect()
}

fn reduction_weight(r: Reduction, n: usize) -> f64 {
    match r {
        Reduction::Sum => 1.0,
        Reduction::Mean => 1.0 / n as f64,
    }
}

/// Cross-entropy of `probs` at the labels of `ids`, not differentiated.
pub fn masked_cross_entropy(probs: &DenseMatrix, labels: &[Option<usize>], ids: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let f = tape.constant(probs.clone());
    let loss = tape.masked_cross_entropy(f, targets_for(labels, ids)?, 1.0)?;
    Ok(tape.value(loss).get(0, 0))
}

/// Loss on `ids` plus the gradient for every parameter.
pub fn loss_and_grads(
    gt: &GraphTensors,
    params: &ModelParams,
    config: &ModelConfig,
    labels: &[Option<usize>],
    ids: &[usize],
    reduction: Reduction,
    dropout: Option<Dropout>,
) -> Result<(f64, Vec<DenseMatrix>)> {
    let mut tape = Tape::new();
    let nodes = params.record(&mut tape);
    let out = build_forward(&mut tape, gt, params, &nodes, config, dropout)?;
    let weight = reduction_weight(reduction, ids.len());
    let loss = tape.masked_cross_entropy(out.probs, targets_for(labels, ids)?, weight)?;
    let value = tape.value(loss).get(0, 0);
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("training loss {value}")));
    }
    let mut grads = tape.backward(loss)?;
    Ok((value, nodes.iter().map(|&n| grads.take(n)).collect()))
}

/// Loss and micro-accuracy on `ids` with dropout off.
pub fn evaluate(
    gt: &GraphTensors,
    params: &ModelParams,
    config: &ModelConfig,
    labels: &[Option<usize>],
    ids: &[usize],
    reduction: Reduction,
) -> Result<(f64, f64)> {
    let out = crate::model::forward(gt, params, config, false, 0)?;
    let loss = masked_cross_entropy(&out.probs, labels, ids)? * reduction_weight(reduction, ids.len());
    let pred = predict_labels(&out.probs);
    let correct = ids.iter().filter(|&&v| Some(pred[v]) == labels[v]).count();
    Ok((loss, correct as f64 / ids.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

impl EpochRecord {
    pub fn log_line(&self) -> String {
        format!(
            "epoch {} train_loss {:.6} val_loss {:.6} val_acc {:.4}",
            self.epoch, self.train_loss, self.val_loss, self.val_acc
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stop_reason: StopReason,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,val_loss,val_acc";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e}\n",
                r.epoch, r.train_loss, r.val_loss, r.val_acc
            ));
        }
        out
    }
}

/// Output of a training run. When training diverges, `error` is set and
/// `params` holds the best parameters seen before the failure.
#[derive(Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: TrainHistory,
    pub error: Option<Error>,
}

/// Full training loop. `on_epoch` sees each record as it is produced.
#[allow(clippy::too_many_arguments)]
pub fn train(
    gt: &GraphTensors,
    labels: &[Option<usize>],
    split: &Split,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    init: ModelParams,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    train_config.validate()?;
    model_config.validate(gt.num_channels())?;
    if split.train_ids.is_empty() {
        return Err(Error::InvalidArgument("training split is empty".into()));
    }
    if labels.len() != gt.num_nodes() {
        return Err(Error::InvalidArgument("label vector does not cover every node".into()));
    }
    // Without a validation set the (dropout-free) training loss is monitored.
    let monitor_ids = if split.val_ids.is_empty() {
        &split.train_ids
    } else {
        &split.val_ids
    };
    let hyper = AdamHyper::new(train_config.learning_rate, train_config.weight_decay);

    let mut params = init;
    let mut state = AdamState::new(&params);
    let mut best = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut history = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=train_config.max_epochs {
        let batches: Vec<Vec<usize>> = match train_config.batching {
            Batching::Full => vec![split.train_ids.clone()],
            Batching::LabeledMinibatch(size) => {
                let mut ids = split.train_ids.clone();
                ids.shuffle(&mut seed::rng(train_config.seed, "batch", epoch as u64));
                ids.chunks(size).map(<[usize]>::to_vec).collect()
            }
        };
        let mut train_loss = 0.0;
        for (b, ids) in batches.iter().enumerate() {
            let dropout_seed = seed::derive(train_config.seed, "epoch-dropout", ((epoch as u64) << 20) | b as u64);
            let dropout = Some(Dropout::new(model_config.dropout_rate, dropout_seed));
            let step = loss_and_grads(gt, &params, model_config, labels, ids, train_config.reduction, dropout)
                .and_then(|(loss, grads)| adam_step(&mut params, &grads, &mut state, hyper).map(|_| loss));
            match step {
                Ok(loss) => train_loss += loss,
                Err(e) => return Ok(diverged(best, history, best_epoch, e)),
            }
        }
        let (val_loss, val_acc) = match evaluate(gt, &params, model_config, labels, monitor_ids, train_config.reduction)
        {
            Ok(v) if v.0.is_finite() => v,
            Ok(v) => {
                let e = Error::NonFinite(format!("validation loss {}", v.0));
                return Ok(diverged(best, history, best_epoch, e));
            }
            Err(e) => return Ok(diverged(best, history, best_epoch, e)),
        };
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_acc,
        };
        on_epoch(&record);
        history.push(record);

        if val_loss < best_loss {
            best_loss = val_loss;
            best_epoch = epoch;
            best = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= train_config.patience {
                stop_reason = StopReason::EarlyStop;
                break;
            }
        }
    }

    Ok(TrainOutcome {
        params: best,
        history: TrainHistory {
            epochs: history,
            best_epoch,
            stop_reason,
        },
        error: None,
    })
}

fn diverged(best: ModelParams, epochs: Vec<EpochRecord>, best_epoch: usize, e: Error) -> TrainOutcome {
    let e = match e {
        Error::NonFinite(m) => Error::NonFinite(format!("training diverged: {m}")),
        other => other,
    };
    TrainOutcome {
        params: best,
        history: TrainHistory {
            epochs,
            best_epoch,
            stop_reason: StopReason::EarlyStop,
        },
        error: Some(e),
    }
}
