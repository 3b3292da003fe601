use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Majority vote among the `k` nearest reference rows (Euclidean).
///
/// Distance ties go to the lower reference index; vote ties to the lowest
/// class id.
pub fn knn_predict(
    train_emb: &DenseMatrix,
    train_labels: &[usize],
    test_emb: &DenseMatrix,
    k: usize,
) -> Result<Vec<usize>> {
    if train_emb.rows() == 0 {
        return Err(Error::InvalidArgument("KNN reference set is empty".into()));
    }
    if k == 0 || k > train_emb.rows() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} with {} reference points",
            train_emb.rows()
        )));
    }
    if train_labels.len() != train_emb.rows() {
        return Err(Error::shape("knn_predict", "one label per reference row"));
    }
    if train_emb.cols() != test_emb.cols() {
        return Err(Error::shape("knn_predict", "reference and query dimensions differ"));
    }
    let num_classes = train_labels.iter().max().map_or(0, |m| m + 1);
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(train_emb.rows());
    let mut votes = vec![0usize; num_classes];
    Ok((0..test_emb.rows())
        .map(|q| {
            let query = test_emb.row(q);
            order.clear();
            order.extend((0..train_emb.rows()).map(|i| (sq_dist(train_emb.row(i), query), i)));
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            votes.iter_mut().for_each(|v| *v = 0);
            for &(_, i) in &order[..k] {
                votes[train_labels[i]] += 1;
            }
            let mut best = 0;
            for c in 1..num_classes {
                if votes[c] > votes[best] {
                    best = c;
                }
            }
            best
        })
        .collect())
}
