//! Planted-partition heterogeneous graphs.
//!
//! Target nodes carry class labels. Each auxiliary node type holds a block of
//! class-affiliated nodes and contributes one relation: a target links to an
//! auxiliary node with probability `intra_edge_prob` when their classes
//! match and `inter_edge_prob` otherwise.

use rand::Rng;

use super::{Edge, HeteroGraph};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub num_classes: usize,
    pub nodes_per_class: usize,
    pub num_aux_types: usize,
    pub intra_edge_prob: f64,
    pub inter_edge_prob: f64,
    /// Auxiliary nodes per class in each auxiliary type; `None` means
    /// `nodes_per_class`.
    pub aux_nodes_per_class: Option<usize>,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            num_classes: 3,
            nodes_per_class: 200,
            num_aux_types: 2,
            intra_edge_prob: 0.05,
            inter_edge_prob: 0.005,
            aux_nodes_per_class: None,
            seed: 1,
        }
    }
}

impl SynthParams {
    /// Auxiliary nodes per class in each auxiliary type.
    pub fn aux_per_class(&self) -> usize {
        self.aux_nodes_per_class.unwrap_or(self.nodes_per_class)
    }
}

pub fn synth_hin(p: &SynthParams) -> Result<HeteroGraph> {
    if p.num_classes == 0 || p.nodes_per_class == 0 || p.aux_per_class() == 0 {
        return Err(Error::InvalidArgument(
            "synthetic graph needs at least one class and one node per class".into(),
        ));
    }
    for (name, v) in [
        ("intra_edge_prob", p.intra_edge_prob),
        ("inter_edge_prob", p.inter_edge_prob),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!("{name} = {v} outside [0, 1]")));
        }
    }
    if p.intra_edge_prob < p.inter_edge_prob {
        return Err(Error::InvalidArgument(
            "intra_edge_prob must not be below inter_edge_prob".into(),
        ));
    }

    let c = p.num_classes;
    let n_targets = c * p.nodes_per_class;
    let aux_block = c * p.aux_per_class();

    let mut node_types = vec![0usize; n_targets];
    let mut node_type_names = vec!["target".to_string()];
    let mut edge_type_names = Vec::new();
    let mut edges = Vec::new();
    let mut rng = seed::rng(p.seed, "synth", 0);

    for a in 0..p.num_aux_types {
        let first = node_types.len();
        node_types.extend(std::iter::repeat_n(a + 1, aux_block));
        node_type_names.push(format!("aux{a}"));
        edge_type_names.push(format!("target-aux{a}"));
        for v in 0..n_targets {
            for j in 0..aux_block {
                let prob = if v % c == j % c {
                    p.intra_edge_prob
                } else {
                    p.inter_edge_prob
                };
                if rng.gen::<f64>() < prob {
                    edges.push(Edge {
                        src: v,
                        dst: first + j,
                        edge_type: a,
                    });
                }
            }
        }
    }

    let mut labels = vec![None; node_types.len()];
    for (v, l) in labels.iter_mut().enumerate().take(n_targets) {
        *l = Some(v % c);
    }
    let class_names = (0..c).map(|k| format!("class{k}")).collect();

    let g = HeteroGraph::new(
        node_types,
        node_type_names,
        edges,
        edge_type_names,
        None,
        Some((labels, class_names)),
    )?;
    if !g.is_heterogeneous() {
        return Err(Error::InvalidArgument(
            "synthetic graph must have |node types| + |edge types| > 2; use at least one auxiliary type".into(),
        ));
    }
    Ok(g)
}
