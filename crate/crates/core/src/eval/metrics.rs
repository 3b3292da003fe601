use std::collections::HashMap;

use crate::error::{Error, Result};

fn check_lengths(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::InvalidArgument(format!("{what}: lengths {a} and {b} differ")));
    }
    Ok(())
}

/// `(macro_f1, micro_f1)` over classes `0..num_classes`. Undefined ratios
/// (0/0) count as 0.
pub fn f1_scores(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<(f64, f64)> {
    check_lengths(pred.len(), truth.len(), "f1_scores")?;
    if let Some(&c) = pred.iter().chain(truth).find(|&&c| c >= num_classes) {
        return Err(Error::InvalidArgument(format!("label {c} outside 0..{num_classes}")));
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fn_ = vec![0usize; num_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let f1 = |tp: usize, fp: usize, fn_: usize| {
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    let macro_f1 = if num_classes == 0 {
        0.0
    } else {
        (0..num_classes).map(|c| f1(tp[c], fp[c], fn_[c])).sum::<f64>() / num_classes as f64
    };
    let micro_f1 = f1(tp.iter().sum(), fp.iter().sum(), fn_.iter().sum());
    Ok((macro_f1, micro_f1))
}

/// Compact relabeling to `0..k` plus the contingency counts.
fn contingency(a: &[usize], b: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    fn compact(xs: &[usize]) -> (Vec<usize>, usize) {
        let mut ids = HashMap::new();
        let out = xs
            .iter()
            .map(|x| {
                let n = ids.len();
                *ids.entry(*x).or_insert(n)
            })
            .collect();
        (out, ids.len())
    }
    let (a, ka) = compact(a);
    let (b, kb) = compact(b);
    let mut table = vec![vec![0.0; kb]; ka];
    for (&i, &j) in a.iter().zip(&b) {
        table[i][j] += 1.0;
    }
    let rows = table.iter().map(|r| r.iter().sum()).collect();
    let cols = (0..kb).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    (table, rows, cols)
}

fn entropy(counts: &[f64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information `I(a;b) / sqrt(H(a) H(b))`, natural logs.
/// Zero when either partition has zero entropy.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    check_lengths(a.len(), b.len(), "nmi")?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let n = a.len() as f64;
    let (table, rows, cols) = contingency(a, b);
    let (ha, hb) = (entropy(&rows, n), entropy(&cols, n));
    if ha <= 0.0 || hb <= 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0.0 {
                mi += nij / n * (n * nij / (rows[i] * cols[j])).ln();
            }
        }
    }
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}

fn pairs(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index. Returns 1 when the expected and maximum indices
/// coincide (both partitions all-singletons, or both a single cluster).
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    check_lengths(a.len(), b.len(), "ari")?;
    let n = a.len() as f64;
    let (table, rows, cols) = contingency(a, b);
    let index: f64 = table.iter().flatten().map(|&x| pairs(x)).sum();
    let sum_a: f64 = rows.iter().map(|&x| pairs(x)).sum();
    let sum_b: f64 = cols.iter().map(|&x| pairs(x)).sum();
    let total = pairs(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}
