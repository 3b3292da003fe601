use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SparseMatrix};

/// Probabilities are clamped to this floor before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub enum Op {
    Input,
    MatMul(NodeId, NodeId),
    /// `a · bᵀ`
    MatMulBt(NodeId, NodeId),
    /// Constant sparse operator applied on the left; no gradient flows to it.
    SpmmConst(Arc<SparseMatrix>, NodeId),
    /// Adds a `1×n` row to every row of an `m×n` matrix.
    AddBiasRow(NodeId, NodeId),
    Relu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    SoftmaxRows(NodeId),
    ElemMul(NodeId, NodeId),
    /// Elementwise product with a constant matrix (dropout masks).
    MulConst(NodeId, Arc<DenseMatrix>),
    ConcatCols(Vec<NodeId>),
    MeanOfSet(Vec<NodeId>),
    Scale(NodeId, f64),
    /// `a * s[0, col]` where `s` is a row vector on the tape.
    ScaleByEntry {
        a: NodeId,
        s: NodeId,
        col: usize,
    },
    Add(NodeId, NodeId),
    /// `-weight · Σ ln F[row, class]` over `targets`; `probs` holds `F`.
    MaskedCrossEntropy {
        probs: NodeId,
        targets: Arc<Vec<(usize, usize)>>,
        weight: f64,
    },
    SumAll(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Input,
    MatMul,
    MatMulBt,
    SpmmConst,
    AddBiasRow,
    Relu,
    Tanh,
    Sigmoid,
    SoftmaxRows,
    ElemMul,
    MulConst,
    ConcatCols,
    MeanOfSet,
    Scale,
    ScaleByEntry,
    Add,
    MaskedCrossEntropy,
    SumAll,
}

impl OpKind {
    pub const ALL: [OpKind; 18] = [
        OpKind::Input,
        OpKind::MatMul,
        OpKind::MatMulBt,
        OpKind::SpmmConst,
        OpKind::AddBiasRow,
        OpKind::Relu,
        OpKind::Tanh,
        OpKind::Sigmoid,
        OpKind::SoftmaxRows,
        OpKind::ElemMul,
        OpKind::MulConst,
        OpKind::ConcatCols,
        OpKind::MeanOfSet,
        OpKind::Scale,
        OpKind::ScaleByEntry,
        OpKind::Add,
        OpKind::MaskedCrossEntropy,
        OpKind::SumAll,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Input => "input",
            OpKind::MatMul => "matmul",
            OpKind::MatMulBt => "matmul_bt",
            OpKind::SpmmConst => "spmm_const",
            OpKind::AddBiasRow => "add_bias_row",
            OpKind::Relu => "relu",
            OpKind::Tanh => "tanh",
            OpKind::Sigmoid => "sigmoid",
            OpKind::SoftmaxRows => "softmax_rows",
            OpKind::ElemMul => "elemwise_mul",
            OpKind::MulConst => "mul_const",
            OpKind::ConcatCols => "concat_cols",
            OpKind::MeanOfSet => "mean_of_set",
            OpKind::Scale => "scale",
            OpKind::ScaleByEntry => "scale_by_entry",
            OpKind::Add => "add",
            OpKind::MaskedCrossEntropy => "masked_cross_entropy",
            OpKind::SumAll => "sum_all",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl Op {
    pub fn kind(&self) -> OpKind {
        match self {
            Op::Input => OpKind::Input,
            Op::MatMul(..) => OpKind::MatMul,
            Op::MatMulBt(..) => OpKind::MatMulBt,
            Op::SpmmConst(..) => OpKind::SpmmConst,
            Op::AddBiasRow(..) => OpKind::AddBiasRow,
            Op::Relu(_) => OpKind::Relu,
            Op::Tanh(_) => OpKind::Tanh,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::SoftmaxRows(_) => OpKind::SoftmaxRows,
            Op::ElemMul(..) => OpKind::ElemMul,
            Op::MulConst(..) => OpKind::MulConst,
            Op::ConcatCols(_) => OpKind::ConcatCols,
            Op::MeanOfSet(_) => OpKind::MeanOfSet,
            Op::Scale(..) => OpKind::Scale,
            Op::ScaleByEntry { .. } => OpKind::ScaleByEntry,
            Op::Add(..) => OpKind::Add,
            Op::MaskedCrossEntropy { .. } => OpKind::MaskedCrossEntropy,
            Op::SumAll(_) => OpKind::SumAll,
        }
    }

    pub fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Input => vec![],
            Op::MatMul(a, b) | Op::MatMulBt(a, b) | Op::AddBiasRow(a, b) | Op::ElemMul(a, b) | Op::Add(a, b) => {
                vec![*a, *b]
            }
            Op::ScaleByEntry { a, s, .. } => vec![*a, *s],
            Op::SpmmConst(_, a)
            | Op::Relu(a)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::SoftmaxRows(a)
            | Op::MulConst(a, _)
            | Op::Scale(a, _)
            | Op::SumAll(a) => vec![*a],
            Op::MaskedCrossEntropy { probs, .. } => vec![*probs],
            Op::ConcatCols(xs) | Op::MeanOfSet(xs) => xs.clone(),
        }
    }
}

struct Entry {
    op: Op,
    value: DenseMatrix,
    requires_grad: bool,
}

/// Recorded computation. Parents always precede children.
#[derive(Default)]
pub struct Tape {
    entries: Vec<Entry>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(x: &DenseMatrix) -> DenseMatrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &DenseMatrix {
        &self.entries[id.0].value
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.entries[id.0].op
    }

    /// Op kinds in recording order.
    pub fn kinds(&self) -> Vec<OpKind> {
        self.entries.iter().map(|e| e.op.kind()).collect()
    }

    /// Records a leaf that receives a gradient.
    pub fn input(&mut self, value: DenseMatrix) -> NodeId {
        self.push(Op::Input, value, true)
    }

    /// Records a leaf treated as data: backward never propagates into it or
    /// into anything computed only from constants.
    pub fn constant(&mut self, value: DenseMatrix) -> NodeId {
        self.push(Op::Input, value, false)
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.entries[id.0].requires_grad
    }

    fn push(&mut self, op: Op, value: DenseMatrix, requires_grad: bool) -> NodeId {
        self.entries.push(Entry {
            op,
            value,
            requires_grad,
        });
        NodeId(self.entries.len() - 1)
    }

    fn check(&self, id: NodeId) -> Result<&DenseMatrix> {
        self.entries
            .get(id.0)
            .map(|e| &e.value)
            .ok_or_else(|| Error::InvalidArgument(format!("node {} is not on this tape", id.0)))
    }

    /// Validates shapes, computes the forward value and appends the node.
    pub fn record(&mut self, op: Op) -> Result<NodeId> {
        let value = match &op {
            Op::Input => return Err(Error::InvalidArgument("inputs are recorded with Tape::input".into())),
            Op::MatMul(a, b) => self.check(*a)?.matmul(self.check(*b)?)?,
            Op::MatMulBt(a, b) => self.check(*a)?.matmul_bt(self.check(*b)?)?,
            Op::SpmmConst(p, a) => p.spmm(self.check(*a)?)?,
            Op::AddBiasRow(a, bias) => {
                let (a, bias) = (self.check(*a)?, self.check(*bias)?);
                if bias.rows() != 1 || bias.cols() != a.cols() {
                    return Err(Error::shape(
                        "add_bias_row",
                        format!("bias {:?} for input {:?}", bias.shape(), a.shape()),
                    ));
                }
                let mut out = a.clone();
                for r in 0..out.rows() {
                    for (o, b) in out.row_mut(r).iter_mut().zip(bias.data()) {
                        *o += b;
                    }
                }
                out
            }
            Op::Relu(a) => self.check(*a)?.map(|x| if x > 0.0 { x } else { 0.0 }),
            Op::Tanh(a) => self.check(*a)?.map(f64::tanh),
            Op::Sigmoid(a) => self.check(*a)?.map(sigmoid),
            Op::SoftmaxRows(a) => softmax_rows(self.check(*a)?),
            Op::ElemMul(a, b) => self.check(*a)?.zip_map(self.check(*b)?, |x, y| x * y)?,
            Op::MulConst(a, m) => self.check(*a)?.zip_map(m, |x, y| x * y)?,
            Op::ConcatCols(xs) => {
                if xs.is_empty() {
                    return Err(Error::shape("concat_cols", "no inputs"));
                }
                let parts = xs.iter().map(|x| self.check(*x)).collect::<Result<Vec<_>>>()?;
                DenseMatrix::concat_cols(&parts)?
            }
            Op::MeanOfSet(xs) => {
                let first = xs.first().ok_or_else(|| Error::shape("mean_of_set", "no inputs"))?;
                let mut acc = self.check(*first)?.clone();
                for x in &xs[1..] {
                    acc.add_assign(self.check(*x)?)
                        .map_err(|_| Error::shape("mean_of_set", "inputs differ in shape"))?;
                }
                acc.scale(1.0 / xs.len() as f64)
            }
            Op::Scale(a, s) => self.check(*a)?.scale(*s),
            Op::ScaleByEntry { a, s, col } => {
                let sv = self.check(*s)?;
                if sv.rows() != 1 || *col >= sv.cols() {
                    return Err(Error::shape(
                        "scale_by_entry",
                        format!("column {col} of {:?}", sv.shape()),
                    ));
                }
                self.check(*a)?.scale(sv.get(0, *col))
            }
            Op::Add(a, b) => {
                let mut out = self.check(*a)?.clone();
                out.add_assign(self.check(*b)?)
                    .map_err(|_| Error::shape("add", "inputs differ in shape"))?;
                out
            }
            Op::MaskedCrossEntropy { probs, targets, weight } => {
                let f = self.check(*probs)?;
                if targets.is_empty() {
                    return Err(Error::InvalidArgument("cross entropy over an empty mask".into()));
                }
                let mut loss = 0.0;
                for &(r, c) in targets.iter() {
                    if r >= f.rows() || c >= f.cols() {
                        return Err(Error::shape(
                            "masked_cross_entropy",
                            format!("target ({r}, {c}) outside {:?}", f.shape()),
                        ));
                    }
                    loss -= f.get(r, c).max(PROB_FLOOR).ln();
                }
                DenseMatrix::scalar(weight * loss)
            }
            Op::SumAll(a) => DenseMatrix::scalar(self.check(*a)?.sum()),
        };
        let requires_grad = op.parents().iter().any(|p| self.entries[p.0].requires_grad);
        Ok(self.push(op, value, requires_grad))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::MatMul(a, b))
    }

    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::MatMulBt(a, b))
    }

    pub fn spmm_const(&mut self, p: &Arc<SparseMatrix>, a: NodeId) -> Result<NodeId> {
        self.record(Op::SpmmConst(Arc::clone(p), a))
    }

    pub fn add_bias_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        self.record(Op::AddBiasRow(a, bias))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Relu(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Sigmoid(a))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::SoftmaxRows(a))
    }

    pub fn elem_mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::ElemMul(a, b))
    }

    pub fn mul_const(&mut self, a: NodeId, mask: DenseMatrix) -> Result<NodeId> {
        self.record(Op::MulConst(a, Arc::new(mask)))
    }

    pub fn concat_cols(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        self.record(Op::ConcatCols(xs.to_vec()))
    }

    pub fn mean_of_set(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        self.record(Op::MeanOfSet(xs.to_vec()))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        self.record(Op::Scale(a, s))
    }

    pub fn scale_by_entry(&mut self, a: NodeId, s: NodeId, col: usize) -> Result<NodeId> {
        self.record(Op::ScaleByEntry { a, s, col })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Add(a, b))
    }

    /// Left fold of [`Tape::add`].
    pub fn sum_of(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let (&first, rest) = xs.split_first().ok_or_else(|| Error::shape("sum_of", "no inputs"))?;
        rest.iter().try_fold(first, |acc, &x| self.add(acc, x))
    }

    pub fn masked_cross_entropy(&mut self, probs: NodeId, targets: Vec<(usize, usize)>, weight: f64) -> Result<NodeId> {
        self.record(Op::MaskedCrossEntropy {
            probs,
            targets: Arc::new(targets),
            weight,
        })
    }

    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::SumAll(a))
    }

    pub fn backward(&self, seed: NodeId) -> Result<Gradients> {
        self.backward_with_fault(seed, None)
    }

    /// Like [`Tape::backward`], but the backward rule of `fault` (if any)
    /// propagates a gradient scaled by 1.5. Used as a negative control for
    /// gradient checking.
    #[doc(hidden)]
    pub fn backward_with_fault(&self, seed: NodeId, fault: Option<OpKind>) -> Result<Gradients> {
        let seed_value = self.check(seed)?;
        if seed_value.shape() != (1, 1) {
            return Err(Error::shape(
                "backward",
                format!("seed node must be 1x1, is {:?}", seed_value.shape()),
            ));
        }
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; self.entries.len()];
        grads[seed.0] = Some(DenseMatrix::scalar(1.0));

        for idx in (0..=seed.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let entry = &self.entries[idx];
            if !entry.requires_grad {
                grads[idx] = Some(g);
                continue;
            }
            let g_in = if fault == Some(entry.op.kind()) {
                g.scale(1.5)
            } else {
                g.clone()
            };
            self.propagate(&entry.op, &entry.value, &g_in, &mut grads)?;
            grads[idx] = Some(g);
        }

        let grads = grads
            .into_iter()
            .zip(&self.entries)
            .map(|(g, e)| g.unwrap_or_else(|| DenseMatrix::zeros(e.value.rows(), e.value.cols())))
            .collect();
        Ok(Gradients { grads })
    }

    fn propagate(&self, op: &Op, out: &DenseMatrix, g: &DenseMatrix, grads: &mut [Option<DenseMatrix>]) -> Result<()> {
        let entries = &self.entries;
        let mut acc = |id: NodeId, contrib: DenseMatrix| -> Result<()> {
            if !entries[id.0].requires_grad {
                return Ok(());
            }
            match &mut grads[id.0] {
                Some(existing) => existing.add_assign(&contrib),
                slot @ None => {
                    *slot = Some(contrib);
                    Ok(())
                }
            }
        };
        match op {
            Op::Input => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    acc(*a, g.matmul_bt(bv)?)?;
                }
                if self.requires_grad(*b) {
                    acc(*b, av.matmul_at(g)?)?;
                }
            }
            Op::MatMulBt(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    acc(*a, g.matmul(bv)?)?;
                }
                if self.requires_grad(*b) {
                    acc(*b, g.matmul_at(av)?)?;
                }
            }
            Op::SpmmConst(p, a) => {
                if self.requires_grad(*a) {
                    acc(*a, p.spmm_transpose(g)?)?;
                }
            }
            Op::AddBiasRow(a, bias) => {
                acc(*a, g.clone())?;
                let mut gb = DenseMatrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                acc(*bias, gb)?;
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                acc(*a, g.zip_map(x, |gv, xv| if xv > 0.0 { gv } else { 0.0 })?)?;
            }
            Op::Tanh(a) => acc(*a, g.zip_map(out, |gv, y| gv * (1.0 - y * y))?)?,
            Op::Sigmoid(a) => acc(*a, g.zip_map(out, |gv, y| gv * y * (1.0 - y))?)?,
            Op::SoftmaxRows(a) => {
                let mut ga = DenseMatrix::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let (y, gr) = (out.row(r), g.row(r));
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((o, &yv), &gv) in ga.row_mut(r).iter_mut().zip(y).zip(gr) {
                        *o = yv * (gv - dot);
                    }
                }
                acc(*a, ga)?;
            }
            Op::ElemMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, g.zip_map(bv, |x, y| x * y)?)?;
                acc(*b, g.zip_map(av, |x, y| x * y)?)?;
            }
            Op::MulConst(a, m) => acc(*a, g.zip_map(m, |x, y| x * y)?)?,
            Op::ConcatCols(xs) => {
                let mut start = 0;
                for x in xs {
                    let w = self.value(*x).cols();
                    acc(*x, g.slice_cols(start, w))?;
                    start += w;
                }
            }
            Op::MeanOfSet(xs) => {
                let share = g.scale(1.0 / xs.len() as f64);
                for x in xs {
                    acc(*x, share.clone())?;
                }
            }
            Op::Scale(a, s) => acc(*a, g.scale(*s))?,
            Op::ScaleByEntry { a, s, col } => {
                let sv = self.value(*s);
                acc(*a, g.scale(sv.get(0, *col)))?;
                let dot: f64 = g.data().iter().zip(self.value(*a).data()).map(|(x, y)| x * y).sum();
                let mut gs = DenseMatrix::zeros(1, sv.cols());
                gs.set(0, *col, dot);
                acc(*s, gs)?;
            }
            Op::Add(a, b) => {
                acc(*a, g.clone())?;
                acc(*b, g.clone())?;
            }
            Op::MaskedCrossEntropy { probs, targets, weight } => {
                let f = self.value(*probs);
                let upstream = g.get(0, 0);
                let mut gf = DenseMatrix::zeros(f.rows(), f.cols());
                for &(r, c) in targets.iter() {
                    let p = f.get(r, c);
                    if p > PROB_FLOOR {
                        gf.set(r, c, gf.get(r, c) - upstream * weight / p);
                    }
                }
                acc(*probs, gf)?;
            }
            Op::SumAll(a) => {
                let x = self.value(*a);
                acc(*a, DenseMatrix::filled(x.rows(), x.cols(), g.get(0, 0)))?;
            }
        }
        Ok(())
    }
}

/// Gradient of the seed scalar with respect to every node on the tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<DenseMatrix>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> &DenseMatrix {
        &self.grads[id.0]
    }

    pub fn take(&mut self, id: NodeId) -> DenseMatrix {
        std::mem::replace(&mut self.grads[id.0], DenseMatrix::zeros(0, 0))
    }
}
