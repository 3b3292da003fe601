use rand::seq::SliceRandom;

use super::HeteroGraph;
use crate::error::{Error, Result};
use crate::seed;

/// Disjoint train/validation/test partition of the labeled nodes. Each list
/// is sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train_ids: Vec<usize>,
    pub val_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub seed: u64,
}

/// Uniformly random partition of the labeled nodes; whatever is not drawn
/// for training or validation becomes the test set.
pub fn make_splits(g: &HeteroGraph, n_train: usize, n_val: usize, seed: u64) -> Result<Split> {
    let mut ids = g.labeled_nodes();
    if n_train + n_val > ids.len() {
        return Err(Error::InvalidArgument(format!(
            "split needs {} labeled nodes, graph has {}",
            n_train + n_val,
            ids.len()
        )));
    }
    ids.shuffle(&mut seed::rng(seed, "split", 0));
    let mut test_ids = ids.split_off(n_train + n_val);
    let mut val_ids = ids.split_off(n_train);
    let mut train_ids = ids;
    train_ids.sort_unstable();
    val_ids.sort_unstable();
    test_ids.sort_unstable();
    Ok(Split {
        train_ids,
        val_ids,
        test_ids,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(n: usize) -> HeteroGraph {
        HeteroGraph::new(
            vec![0; n],
            vec!["t".into()],
            vec![],
            vec![],
            None,
            Some(((0..n).map(|v| Some(v % 2)).collect(), vec!["a".into(), "b".into()])),
        )
        .unwrap()
    }

    #[test]
    fn partition_is_disjoint_and_complete() {
        let g = labeled(50);
        let s = make_splits(&g, 10, 5, 3).unwrap();
        assert_eq!((s.train_ids.len(), s.val_ids.len(), s.test_ids.len()), (10, 5, 35));
        let mut all: Vec<usize> = [&s.train_ids[..], &s.val_ids, &s.test_ids].concat();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn all_train_leaves_empty_test() {
        let s = make_splits(&labeled(8), 8, 0, 1).unwrap();
        assert!(s.test_ids.is_empty() && s.val_ids.is_empty());
        assert!(make_splits(&labeled(8), 8, 1, 1).is_err());
    }

    #[test]
    fn seeded_determinism() {
        let g = labeled(100);
        assert_eq!(make_splits(&g, 20, 10, 9).unwrap(), make_splits(&g, 20, 10, 9).unwrap());
        assert_ne!(
            make_splits(&g, 20, 10, 9).unwrap().train_ids,
            make_splits(&g, 20, 10, 10).unwrap().train_ids
        );
    }
}
