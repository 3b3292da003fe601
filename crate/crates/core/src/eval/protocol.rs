use std::fmt::Write as _;

use rand::seq::SliceRandom;

use super::{ari, f1_scores, kmeans, knn_predict, nmi};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::seed;

pub const DEFAULT_FRACTIONS: [f64; 4] = [0.2, 0.4, 0.6, 0.8];
const KMEANS_MAX_ITERS: usize = 300;

/// Mean and population standard deviation over trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self { mean: 0.0, sd: 0.0 };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self { mean, sd: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationRow {
    pub fraction: f64,
    pub macro_f1: MeanSd,
    pub micro_f1: MeanSd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringSummary {
    pub nmi: MeanSd,
    pub ari: MeanSd,
}

fn fraction_key(f: f64) -> u64 {
    (f * 1e6).round() as u64
}

fn labeled(labels: &[Option<usize>], ids: &[usize]) -> Result<Vec<usize>> {
    ids.iter()
        .map(|&i| {
            labels
                .get(i)
                .copied()
                .flatten()
                .ok_or_else(|| Error::InvalidArgument(format!("evaluation node {i} has no label")))
        })
        .collect()
}

/// KNN classification over the `test_ids` embeddings: per fraction `f`, each
/// trial draws `round(f * n)` of them as the reference set and scores the rest.
pub fn run_classification_eval(
    emb: &DenseMatrix,
    labels: &[Option<usize>],
    test_ids: &[usize],
    fractions: &[f64],
    repeats: usize,
    seed: u64,
    k: usize,
) -> Result<Vec<ClassificationRow>> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let truth = labeled(labels, test_ids)?;
    let num_classes = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let n = test_ids.len();
    fractions
        .iter()
        .map(|&f| {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidArgument(format!("fraction {f} outside (0, 1)")));
            }
            let n_ref = (f * n as f64).round() as usize;
            if n_ref < k {
                return Err(Error::InvalidArgument(format!(
                    "fraction {f} of {n} test nodes gives {n_ref} reference points, fewer than k = {k}"
                )));
            }
            if n_ref >= n {
                return Err(Error::InvalidArgument(format!(
                    "fraction {f} of {n} test nodes leaves nothing to score"
                )));
            }
            let mut macros = Vec::with_capacity(repeats);
            let mut micros = Vec::with_capacity(repeats);
            for r in 0..repeats {
                let mut rng = seed::rng(seed, "knn-trial", (fraction_key(f) << 20) | r as u64);
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut rng);
                let (reference, scored) = order.split_at(n_ref);
                let ref_ids: Vec<usize> = reference.iter().map(|&i| test_ids[i]).collect();
                let score_ids: Vec<usize> = scored.iter().map(|&i| test_ids[i]).collect();
                let ref_labels: Vec<usize> = reference.iter().map(|&i| truth[i]).collect();
                let score_truth: Vec<usize> = scored.iter().map(|&i| truth[i]).collect();
                let pred = knn_predict(&emb.select_rows(&ref_ids), &ref_labels, &emb.select_rows(&score_ids), k)?;
                let (ma, mi) = f1_scores(&pred, &score_truth, num_classes)?;
                macros.push(ma);
                micros.push(mi);
            }
            Ok(ClassificationRow {
                fraction: f,
                macro_f1: MeanSd::of(&macros),
                micro_f1: MeanSd::of(&micros),
            })
        })
        .collect()
}

/// K-means with `k` = number of classes over the labeled nodes, scored
/// against the ground truth.
pub fn run_clustering_eval(
    emb: &DenseMatrix,
    labels: &[Option<usize>],
    repeats: usize,
    seed: u64,
) -> Result<ClusteringSummary> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let ids: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_some()).collect();
    let truth = labeled(labels, &ids)?;
    let k = truth.iter().max().map_or(0, |m| m + 1);
    let x = emb.select_rows(&ids);
    let mut nmis = Vec::with_capacity(repeats);
    let mut aris = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let assign = kmeans(&x, k, seed::derive(seed, "kmeans-trial", r as u64), KMEANS_MAX_ITERS)?;
        nmis.push(nmi(&assign, &truth)?);
        aris.push(ari(&assign, &truth)?);
    }
    Ok(ClusteringSummary {
        nmi: MeanSd::of(&nmis),
        ari: MeanSd::of(&aris),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Echoed configuration, in output order.
    pub header: Vec<(String, String)>,
    pub seed: u64,
    pub repeats: usize,
    pub classification: Vec<ClassificationRow>,
    pub clustering: ClusteringSummary,
}

impl EvalReport {
    /// `#`-prefixed header lines, then the classification block
    /// (`fraction,metric,mean,sd`), a blank line and the clustering block
    /// (`metric,mean,sd`).
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# seed={}", self.seed);
        let _ = writeln!(s, "# repeats={}", self.repeats);
        for (k, v) in &self.header {
            let _ = writeln!(s, "# {k}={v}");
        }
        s.push_str("fraction,metric,mean,sd\n");
        for row in &self.classification {
            for (name, m) in [("macro_f1", row.macro_f1), ("micro_f1", row.micro_f1)] {
                let _ = writeln!(s, "{},{name},{:.10},{:.10}", row.fraction, m.mean, m.sd);
            }
        }
        s.push_str("\nmetric,mean,sd\n");
        for (name, m) in [("nmi", self.clustering.nmi), ("ari", self.clustering.ari)] {
            let _ = writeln!(s, "{name},{:.10},{:.10}", m.mean, m.sd);
        }
        s
    }
}
