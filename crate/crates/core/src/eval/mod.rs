//! Downstream evaluation of node embeddings: KNN classification scored by
//! Macro/Micro-F1 and K-means clustering scored by NMI/ARI, each averaged
//! over repeated seeded trials.

mod kmeans;
mod knn;
mod metrics;
mod protocol;

pub use kmeans::{kmeans, kmeans_traced, KMeansResult};
pub use knn::knn_predict;
pub use metrics::{ari, f1_scores, nmi};
pub use protocol::{
    run_classification_eval, run_clustering_eval, ClassificationRow, ClusteringSummary, EvalReport, MeanSd,
    DEFAULT_FRACTIONS,
};
