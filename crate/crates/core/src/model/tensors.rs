use std::sync::Arc;

use crate::error::Result;
use crate::hetgraph::{build_features, decompose, FeatureMode, HeteroGraph};
use crate::linalg::{DenseMatrix, SparseMatrix};

/// Everything the forward pass reads from a graph: input features, one
/// random-walk operator per relation, and the whole-graph operator.
#[derive(Debug, Clone)]
pub struct GraphTensors {
    pub features: DenseMatrix,
    pub channels: Vec<Arc<SparseMatrix>>,
    pub whole: Arc<SparseMatrix>,
}

impl GraphTensors {
    pub fn from_graph(g: &HeteroGraph, mode: FeatureMode) -> Result<Self> {
        let features = build_features(g, mode)?;
        let channels = decompose(g)
            .into_iter()
            .map(|s| s.adjacency.row_normalize().map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        let whole = Arc::new(g.whole_adjacency().row_normalize()?);
        Ok(Self {
            features,
            channels,
            whole,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn input_dim(&self) -> usize {
        self.features.cols()
    }

    /// Relabels nodes so that old node `i` becomes `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        let mut features = DenseMatrix::zeros(self.features.rows(), self.features.cols());
        for (i, &j) in perm.iter().enumerate() {
            features.row_mut(j).copy_from_slice(self.features.row(i));
        }
        Self {
            features,
            channels: self.channels.iter().map(|p| Arc::new(p.permute(perm))).collect(),
            whole: Arc::new(self.whole.permute(perm)),
        }
    }
}
