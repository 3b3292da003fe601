//! Whole-model gradient check on a small fixed instance.

use std::collections::BTreeMap;

use rand::Rng;

use super::{build_forward, init_params, param_group, Aggregator, Dropout, GraphTensors, ModelConfig, PARAM_GROUPS};
use crate::diff::{GradCheck, OpKind};
use crate::error::Result;
use crate::hetgraph::{Edge, FeatureMode, HeteroGraph};
use crate::linalg::DenseMatrix;
use crate::seed;

/// Eight nodes of three types joined by two relations; every node has at
/// least one edge, all nodes are labeled with one of three classes, and
/// features are three random columns.
pub fn gradcheck_graph(seed: u64) -> HeteroGraph {
    let e = |src, dst, edge_type| Edge { src, dst, edge_type };
    let edges = vec![
        e(0, 4, 0),
        e(1, 4, 0),
        e(2, 5, 0),
        e(3, 5, 0),
        e(0, 5, 0),
        e(0, 6, 1),
        e(1, 7, 1),
        e(2, 6, 1),
        e(3, 7, 1),
        e(2, 7, 1),
    ];
    let mut rng = seed::rng(seed, "gradcheck-features", 0);
    let features = DenseMatrix::new(8, 3, (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let labels = (0..8).map(|v| Some(v % 3)).collect();
    HeteroGraph::new(
        vec![0, 0, 0, 0, 1, 1, 2, 2],
        vec!["paper".into(), "author".into(), "venue".into()],
        edges,
        vec!["writes".into(), "published".into()],
        Some(features),
        Some((labels, vec!["c0".into(), "c1".into(), "c2".into()])),
    )
    .expect("fixed gradcheck graph is valid")
}

/// The configuration checked for one aggregator/fusion/channels combination:
/// two layers of width 4, attention width 3, second-order convolution.
pub fn gradcheck_config(aggregator: Aggregator, fusion: bool, channels: bool) -> ModelConfig {
    ModelConfig {
        num_layers: 2,
        conv_order: 2,
        hidden_dims: vec![4, 4],
        aggregator,
        attention_dim: 3,
        fusion_enabled: fusion,
        channels_enabled: channels,
        dropout_rate: 0.3,
    }
}

/// Every aggregator × fusion × channels combination.
pub fn gradcheck_combinations() -> Vec<ModelConfig> {
    let mut out = Vec::new();
    for agg in [
        Aggregator::Attention,
        Aggregator::Gated,
        Aggregator::Pooling,
        Aggregator::Mean,
    ] {
        for fusion in [true, false] {
            for channels in [true, false] {
                out.push(gradcheck_config(agg, fusion, channels));
            }
        }
    }
    out
}

/// Worst relative error per parameter group (only groups the configuration
/// allocates), in [`PARAM_GROUPS`] order.
pub fn model_gradcheck(
    config: &ModelConfig,
    eps: f64,
    fault: Option<OpKind>,
    seed: u64,
) -> Result<Vec<(&'static str, f64)>> {
    let g = gradcheck_graph(seed);
    let gt = GraphTensors::from_graph(&g, FeatureMode::Provided)?;
    let labels = g.labels().expect("labeled").to_vec();
    let mut params = init_params(config, gt.num_channels(), gt.input_dim(), g.num_classes(), seed);
    // Nonzero biases keep ReLU pre-activations away from the kink.
    let mut rng = seed::rng(seed, "gradcheck-bias", 0);
    for p in params.iter_mut() {
        if p.value.data().iter().all(|&v| v == 0.0) {
            p.value
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
    }
    let targets: Vec<(usize, usize)> = labels
        .iter()
        .enumerate()
        .filter_map(|(v, l)| l.map(|c| (v, c)))
        .collect();
    let dropout_seed = seed::derive(seed, "gradcheck-dropout", 0);
    let checker = GradCheck { eps, fault };
    let report = checker.run(&params.values(), |tape, nodes| {
        let out = build_forward(
            tape,
            &gt,
            &params,
            nodes,
            config,
            Some(Dropout::new(config.dropout_rate, dropout_seed)),
        )?;
        tape.masked_cross_entropy(out.probs, targets.clone(), 1.0)
    })?;
    let mut groups: BTreeMap<usize, f64> = BTreeMap::new();
    for (p, err) in params.iter().zip(&report.per_param) {
        let group = param_group(&p.name);
        let idx = PARAM_GROUPS.iter().position(|&n| n == group).expect("known group");
        let slot = groups.entry(idx).or_insert(0.0);
        *slot = slot.max(*err);
    }
    Ok(groups.into_iter().map(|(i, e)| (PARAM_GROUPS[i], e)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attention_with_fusion_passes() {
        let groups = model_gradcheck(&gradcheck_config(Aggregator::Attention, true, true), 1e-5, None, 1).unwrap();
        let names: Vec<_> = groups.iter().map(|g| g.0).collect();
        assert_eq!(
            names,
            [
                "theta_channel",
                "att_q",
                "att_w",
                "att_b",
                "theta_global",
                "fc_w",
                "fc_b",
                "classifier"
            ]
        );
        for (name, err) in groups {
            assert!(err <= 1e-4, "{name}: {err}");
        }
    }

    #[test]
    fn corrupted_softmax_rule_fails() {
        let cfg = gradcheck_config(Aggregator::Attention, true, true);
        let groups = model_gradcheck(&cfg, 1e-5, Some(OpKind::SoftmaxRows), 1).unwrap();
        assert!(groups.iter().any(|g| g.1 > 1e-4));
    }
}
