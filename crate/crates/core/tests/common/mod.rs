//! Shared fixtures and tape-free reference implementations.
#![allow(dead_code)]

use gahne_core::hetgraph::{Edge, HeteroGraph};
use gahne_core::linalg::DenseMatrix;
use gahne_core::model::{Aggregator, ModelConfig, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rows = Vec<Vec<f64>>;

pub fn rows_of(m: &DenseMatrix) -> Rows {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

pub fn matrix_of(rows: &Rows) -> DenseMatrix {
    DenseMatrix::from_rows(rows)
}

pub fn max_abs_diff(a: &Rows, b: &Rows) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len());
            x.iter().zip(y).map(|(p, q)| (p - q).abs())
        })
        .fold(0.0, f64::max)
}

/// A random multi-relation graph. Node types cycle through `num_types`, every
/// relation draws each unordered pair with probability `p`, and features are
/// uniform in [-1, 1]. Labels are `v % num_classes`.
pub fn random_graph(
    seed: u64,
    n: usize,
    num_types: usize,
    num_relations: usize,
    p: f64,
    dim: usize,
    num_classes: usize,
) -> HeteroGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let node_types = (0..n).map(|v| v % num_types).collect();
    let mut edges = Vec::new();
    for t in 0..num_relations {
        for s in 0..n {
            for d in s + 1..n {
                if rng.gen::<f64>() < p {
                    edges.push(Edge {
                        src: s,
                        dst: d,
                        edge_type: t,
                    });
                }
            }
        }
    }
    let features = (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect::<Rows>();
    let labels = (0..n).map(|v| Some(v % num_classes)).collect();
    HeteroGraph::new(
        node_types,
        (0..num_types).map(|i| format!("type{i}")).collect(),
        edges,
        (0..num_relations).map(|i| format!("rel{i}")).collect(),
        Some(matrix_of(&features)),
        Some((labels, (0..num_classes).map(|c| format!("c{c}")).collect())),
    )
    .unwrap()
}

pub fn zeros(r: usize, c: usize) -> Rows {
    vec![vec![0.0; c]; r]
}

pub fn mul(a: &Rows, b: &Rows) -> Rows {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            assert_eq!(row.len(), inner);
            (0..cols).map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum()).collect()
        })
        .collect()
}

pub fn transpose(a: &Rows) -> Rows {
    let cols = a.first().map_or(0, Vec::len);
    (0..cols).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn add(a: &Rows, b: &Rows) -> Rows {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
        .collect()
}

pub fn map(a: &Rows, f: impl Fn(f64) -> f64) -> Rows {
    a.iter().map(|r| r.iter().map(|&v| f(v)).collect()).collect()
}

pub fn add_row(a: &Rows, b: &[f64]) -> Rows {
    a.iter()
        .map(|r| r.iter().zip(b).map(|(p, q)| p + q).collect())
        .collect()
}

pub fn relu(a: &Rows) -> Rows {
    map(a, |v| v.max(0.0))
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Random-walk operator built straight from the edge list: every edge counts
/// once in each direction, rows are divided by their sums, empty rows stay 0.
pub fn dense_operator(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> Rows {
    let mut a = zeros(n, n);
    for (s, d) in edges {
        a[s][d] += 1.0;
        a[d][s] += 1.0;
    }
    for row in &mut a {
        let deg: f64 = row.iter().sum();
        if deg > 0.0 {
            row.iter_mut().for_each(|v| *v /= deg);
        }
    }
    a
}

/// `ReLU(Σ_{k=1..K} P^k Z Θ)` with the powers of `P` formed explicitly.
pub fn conv(p: &Rows, z: &Rows, theta: &Rows, order: usize) -> Rows {
    let zt = mul(z, theta);
    let mut power = p.clone();
    let mut total = mul(&power, &zt);
    for _ in 1..order {
        power = mul(&power, p);
        total = add(&total, &mul(&power, &zt));
    }
    relu(&total)
}

pub struct OracleOutput {
    pub probs: Rows,
    pub embeddings: Rows,
    pub mu: Vec<Vec<f64>>,
}

fn param(params: &ModelParams, name: &str) -> Rows {
    rows_of(params.get(name).unwrap_or_else(|| panic!("missing {name}")))
}

fn branch(p: &Rows, x: &Rows, params: &ModelParams, config: &ModelConfig, name: &str) -> Rows {
    let mut z = x.clone();
    for l in 1..=config.num_layers {
        z = conv(
            p,
            &z,
            &param(params, &format!("{name}.layer{l}.theta")),
            config.conv_order,
        );
    }
    z
}

/// Dropout-free forward pass written directly from the model equations.
pub fn oracle_forward(g: &HeteroGraph, x: &Rows, params: &ModelParams, config: &ModelConfig) -> OracleOutput {
    let n = g.num_nodes();
    let ops: Vec<Rows> = (0..g.num_edge_types())
        .map(|t| dense_operator(n, g.edges().iter().filter(|e| e.edge_type == t).map(|e| (e.src, e.dst))))
        .collect();
    let whole = dense_operator(n, g.edges().iter().map(|e| (e.src, e.dst)));
    let mut mu = Vec::new();

    let z = if config.channels_enabled {
        let mut z = x.clone();
        for l in 1..=config.num_layers {
            let channels: Vec<usize> = match config.aggregator {
                Aggregator::Single(t) => vec![t],
                _ => (0..ops.len()).collect(),
            };
            let hs: Vec<Rows> = channels
                .iter()
                .map(|&t| {
                    conv(
                        &ops[t],
                        &z,
                        &param(params, &format!("channel{t}.layer{l}.theta")),
                        config.conv_order,
                    )
                })
                .collect();
            let d = hs[0][0].len();
            z = match config.aggregator {
                Aggregator::Attention => {
                    let q = param(params, &format!("attention.layer{l}.q"));
                    let w = param(params, &format!("attention.layer{l}.w"));
                    let b = param(params, &format!("attention.layer{l}.b"));
                    let scores: Vec<f64> = hs
                        .iter()
                        .map(|h| {
                            h.iter()
                                .map(|hv| {
                                    (0..w.len())
                                        .map(|i| {
                                            let pre: f64 = (0..d).map(|j| w[i][j] * hv[j]).sum::<f64>() + b[0][i];
                                            q[i][0] * pre.tanh()
                                        })
                                        .sum::<f64>()
                                })
                                .sum()
                        })
                        .collect();
                    let weights = softmax(&scores);
                    let mut out = zeros(n, d);
                    for (h, &m) in hs.iter().zip(&weights) {
                        out = add(&out, &map(h, |v| m * v));
                    }
                    mu.push(weights);
                    out
                }
                Aggregator::Gated => {
                    let mut out = zeros(n, d);
                    for (&t, h) in channels.iter().zip(&hs) {
                        let wg = param(params, &format!("gate.layer{l}.channel{t}.w"));
                        let gate = map(&mul(h, &transpose(&wg)), |v| 1.0 / (1.0 + (-v).exp()));
                        let gated: Rows = gate
                            .iter()
                            .zip(h)
                            .map(|(g, hv)| g.iter().zip(hv).map(|(a, b)| a * b).collect())
                            .collect();
                        out = add(&out, &gated);
                    }
                    out
                }
                Aggregator::Pooling => {
                    let w = param(params, &format!("pool.layer{l}.w"));
                    let b = param(params, &format!("pool.layer{l}.b"));
                    let mut out = zeros(n, d);
                    for h in &hs {
                        out = add(&out, &relu(&add_row(&mul(h, &transpose(&w)), &b[0])));
                    }
                    map(&out, |v| v / hs.len() as f64)
                }
                Aggregator::Mean => {
                    let mut out = zeros(n, d);
                    for h in &hs {
                        out = add(&out, h);
                    }
                    map(&out, |v| v / hs.len() as f64)
                }
                Aggregator::Single(_) => hs[0].clone(),
            };
        }
        z
    } else {
        branch(&whole, x, params, config, "global2")
    };

    let embeddings = if config.fusion_enabled {
        let zw = branch(&whole, x, params, config, "global");
        let fused: Rows = z
            .iter()
            .zip(&zw)
            .map(|(a, b)| a.iter().chain(b).copied().collect())
            .collect();
        let w = param(params, "fusion.w");
        let b = param(params, "fusion.b");
        relu(&add_row(&mul(&fused, &transpose(&w)), &b[0]))
    } else {
        z
    };
    let logits = mul(&embeddings, &param(params, "classifier.theta"));
    OracleOutput {
        probs: logits.iter().map(|r| softmax(r)).collect(),
        embeddings,
        mu,
    }
}

/// Every aggregator crossed with fusion and channels on/off.
pub fn all_variants() -> Vec<ModelConfig> {
    let mut out = Vec::new();
    for aggregator in [
        Aggregator::Attention,
        Aggregator::Gated,
        Aggregator::Pooling,
        Aggregator::Mean,
        Aggregator::Single(1),
    ] {
        for fusion_enabled in [true, false] {
            for channels_enabled in [true, false] {
                out.push(ModelConfig {
                    num_layers: 2,
                    conv_order: 2,
                    hidden_dims: vec![5, 4],
                    aggregator,
                    attention_dim: 3,
                    fusion_enabled,
                    channels_enabled,
                    dropout_rate: 0.5,
                });
            }
        }
    }
    out
}

/// Binomial coefficient n choose 2 as a float.
pub fn pairs(n: usize) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// NMI by explicit contingency counting with natural logs and the geometric-mean normalizer.
pub fn brute_nmi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut joint = vec![vec![0.0; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        joint[x][y] += 1.0;
    }
    let ra: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let cb: Vec<f64> = (0..kb).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
    let entropy = |m: &[f64]| -> f64 { m.iter().filter(|&&c| c > 0.0).map(|&c| -(c / n) * (c / n).ln()).sum() };
    let (ha, hb) = (entropy(&ra), entropy(&cb));
    if ha == 0.0 || hb == 0.0 {
        return 0.0;
    }
    let mut mi = 0.0;
    for i in 0..ka {
        for j in 0..kb {
            let c = joint[i][j];
            if c > 0.0 {
                mi += (c / n) * (c * n / (ra[i] * cb[j])).ln();
            }
        }
    }
    mi / (ha * hb).sqrt()
}

/// ARI by enumerating every unordered pair of elements.
pub fn brute_ari(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut in_a, mut in_b) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            both += (sa && sb) as u8 as f64;
            in_a += sa as u8 as f64;
            in_b += sb as u8 as f64;
        }
    }
    let total = pairs(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = in_a * in_b / total;
    let max = (in_a + in_b) / 2.0;
    if max == expected {
        return 1.0;
    }
    (both - expected) / (max - expected)
}
