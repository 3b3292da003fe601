//! Heterogeneous graph data model.
//!
//! A [`HeteroGraph`] carries typed nodes, typed edges, optional dense node
//! features and optional class labels. Relation-type decomposition produces
//! one [`SubNetwork`] per edge type, each indexed over the full node set so
//! that nodes outside a relation simply have empty adjacency rows.

mod io;
mod split;
mod synth;

pub use io::{load_graph, write_graph, GraphFiles};
pub use split::{make_splits, Split};
pub use synth::{synth_hin, SynthParams};

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub edge_type: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    num_nodes: usize,
    node_types: Vec<usize>,
    edges: Vec<Edge>,
    node_type_names: Vec<String>,
    edge_type_names: Vec<String>,
    features: Option<DenseMatrix>,
    labels: Option<Vec<Option<usize>>>,
    class_names: Vec<String>,
}

impl HeteroGraph {
    /// Validates and assembles a graph. `labels`, when given, has one slot per
    /// node and its class ids must cover exactly `0..class_names.len()`.
    pub fn new(
        node_types: Vec<usize>,
        node_type_names: Vec<String>,
        edges: Vec<Edge>,
        edge_type_names: Vec<String>,
        features: Option<DenseMatrix>,
        labels: Option<(Vec<Option<usize>>, Vec<String>)>,
    ) -> Result<Self> {
        let num_nodes = node_types.len();
        if let Some(&t) = node_types.iter().find(|&&t| t >= node_type_names.len()) {
            return Err(Error::InvalidGraph(format!("node type id {t} has no name")));
        }
        for e in &edges {
            if e.src >= num_nodes || e.dst >= num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) references a node outside 0..{num_nodes}",
                    e.src, e.dst
                )));
            }
            if e.edge_type >= edge_type_names.len() {
                return Err(Error::InvalidGraph(format!("edge type id {} has no name", e.edge_type)));
            }
        }
        if let Some(f) = &features {
            if f.rows() != num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "feature matrix has {} rows for {num_nodes} nodes",
                    f.rows()
                )));
            }
        }
        let (labels, class_names) = match labels {
            Some((l, names)) => {
                if l.len() != num_nodes {
                    return Err(Error::InvalidGraph(
                        "label vector length differs from node count".into(),
                    ));
                }
                let mut seen = vec![false; names.len()];
                for &c in l.iter().flatten() {
                    if c >= names.len() {
                        return Err(Error::InvalidGraph(format!("class id {c} out of range")));
                    }
                    seen[c] = true;
                }
                if let Some(missing) = seen.iter().position(|s| !s) {
                    return Err(Error::InvalidGraph(format!(
                        "class ids are not contiguous: {missing} unused"
                    )));
                }
                (Some(l), names)
            }
            None => (None, Vec::new()),
        };
        Ok(Self {
            num_nodes,
            node_types,
            edges,
            node_type_names,
            edge_type_names,
            features,
            labels,
            class_names,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node_types(&self) -> &[usize] {
        &self.node_types
    }

    pub fn node_type_of(&self, v: usize) -> usize {
        self.node_types[v]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_type_names(&self) -> &[String] {
        &self.node_type_names
    }

    pub fn edge_type_names(&self) -> &[String] {
        &self.edge_type_names
    }

    pub fn num_edge_types(&self) -> usize {
        self.edge_type_names.len()
    }

    pub fn features(&self) -> Option<&DenseMatrix> {
        self.features.as_ref()
    }

    pub fn labels(&self) -> Option<&[Option<usize>]> {
        self.labels.as_deref()
    }

    pub fn label_of(&self, v: usize) -> Option<usize> {
        self.labels.as_ref().and_then(|l| l[v])
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Labeled node ids in ascending order.
    pub fn labeled_nodes(&self) -> Vec<usize> {
        match &self.labels {
            Some(l) => (0..self.num_nodes).filter(|&v| l[v].is_some()).collect(),
            None => Vec::new(),
        }
    }

    /// `|A| + |R| > 2`
    pub fn is_heterogeneous(&self) -> bool {
        self.node_type_names.len() + self.edge_type_names.len() > 2
    }

    /// Symmetrized adjacency over all edges regardless of type.
    pub fn whole_adjacency(&self) -> SparseMatrix {
        let pairs: Vec<_> = self.edges.iter().map(|e| (e.src, e.dst)).collect();
        SparseMatrix::from_edges(&pairs, self.num_nodes, self.num_nodes, true).expect("edges validated on construction")
    }
}

/// The subgraph induced by one edge type, over the full node index.
#[derive(Debug, Clone)]
pub struct SubNetwork {
    pub edge_type: usize,
    pub adjacency: SparseMatrix,
    pub participating: Vec<bool>,
}

/// Splits a graph into one symmetrized sub-network per edge type, in edge-type order.
pub fn decompose(g: &HeteroGraph) -> Vec<SubNetwork> {
    let n = g.num_nodes();
    let mut per_type: Vec<Vec<(usize, usize)>> = vec![Vec::new(); g.num_edge_types()];
    for e in g.edges() {
        per_type[e.edge_type].push((e.src, e.dst));
    }
    per_type
        .into_iter()
        .enumerate()
        .map(|(t, pairs)| {
            let mut participating = vec![false; n];
            for &(s, d) in &pairs {
                participating[s] = true;
                participating[d] = true;
            }
            let adjacency = SparseMatrix::from_edges(&pairs, n, n, true).expect("edges validated on construction");
            SubNetwork {
                edge_type: t,
                adjacency,
                participating,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    Provided,
    OneHotId,
    OneHotType,
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "provided" => Ok(Self::Provided),
            "onehot-id" => Ok(Self::OneHotId),
            "onehot-type" => Ok(Self::OneHotType),
            other => Err(Error::InvalidArgument(format!(
                "unknown feature mode {other:?} (expected provided, onehot-id or onehot-type)"
            ))),
        }
    }
}

impl std::fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Provided => "provided",
            Self::OneHotId => "onehot-id",
            Self::OneHotType => "onehot-type",
        })
    }
}

pub fn build_features(g: &HeteroGraph, mode: FeatureMode) -> Result<DenseMatrix> {
    match mode {
        FeatureMode::Provided => g
            .features()
            .cloned()
            .ok_or_else(|| Error::InvalidArgument("feature mode 'provided' but the graph has no features".into())),
        FeatureMode::OneHotId => Ok(DenseMatrix::identity(g.num_nodes())),
        FeatureMode::OneHotType => {
            let mut x = DenseMatrix::zeros(g.num_nodes(), g.node_type_names().len());
            for (v, &t) in g.node_types().iter().enumerate() {
                x.set(v, t, 1.0);
            }
            Ok(x)
        }
    }
}
