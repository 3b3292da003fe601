use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Compressed sparse row matrix in canonical form: column indices strictly
/// increasing within each row, duplicates coalesced.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a 0/1 adjacency-style matrix from `(row, col)` pairs. Repeated
    /// pairs are summed; with `symmetrize` every pair also contributes its
    /// transpose.
    pub fn from_edges(edges: &[(usize, usize)], n_rows: usize, n_cols: usize, symmetrize: bool) -> Result<Self> {
        let mut triplets = Vec::with_capacity(edges.len() * if symmetrize { 2 } else { 1 });
        for &(r, c) in edges {
            triplets.push((r, c, 1.0));
            if symmetrize {
                triplets.push((c, r, 1.0));
            }
        }
        Self::from_triplets(triplets, n_rows, n_cols)
    }

    pub fn from_triplets(mut triplets: Vec<(usize, usize, f64)>, n_rows: usize, n_cols: usize) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|&&(r, c, _)| r >= n_rows || c >= n_cols) {
            return Err(Error::InvalidArgument(format!(
                "entry ({r}, {c}) out of range for {n_rows}x{n_cols} matrix"
            )));
        }
        triplets.sort_by_key(|&(r, c, _)| (r, c));

        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            col_indices.push(c);
            values.push(v);
            row_offsets[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..n_rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        (&self.col_indices[span.clone()], &self.values[span])
    }

    pub fn row_is_empty(&self, r: usize) -> bool {
        self.row_offsets[r] == self.row_offsets[r + 1]
    }

    /// Random-walk normalization `D⁻¹A`. Rows with zero degree stay zero.
    pub fn row_normalize(&self) -> Result<Self> {
        if let Some(v) = self.values.iter().find(|&&v| v < 0.0 || v.is_nan()) {
            return Err(Error::InvalidArgument(format!(
                "row_normalize needs non-negative entries, found {v}"
            )));
        }
        let mut out = self.clone();
        for r in 0..self.n_rows {
            let span = self.row_offsets[r]..self.row_offsets[r + 1];
            let degree: f64 = self.values[span.clone()].iter().sum();
            if degree > 0.0 {
                for v in &mut out.values[span] {
                    *v /= degree;
                }
            }
        }
        Ok(out)
    }

    /// Sparse × dense product. Each output row accumulates in column order.
    pub fn spmm(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_cols != x.rows() {
            return Err(Error::shape(
                "spmm",
                format!("({}x{}) · ({}x{})", self.n_rows, self.n_cols, x.rows(), x.cols()),
            ));
        }
        let n = x.cols();
        let mut out = DenseMatrix::zeros(self.n_rows, n);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let o_row = out.row_mut(r);
            for (&c, &v) in cols.iter().zip(vals) {
                for (o, &b) in o_row.iter_mut().zip(x.row(c)) {
                    *o += v * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · g` without materializing the transpose.
    pub fn spmm_transpose(&self, g: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_rows != g.rows() {
            return Err(Error::shape(
                "spmm_transpose",
                format!("({}x{})ᵀ · ({}x{})", self.n_rows, self.n_cols, g.rows(), g.cols()),
            ));
        }
        let n = g.cols();
        let mut out = DenseMatrix::zeros(self.n_cols, n);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let g_row = g.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                for (o, &b) in out.row_mut(c).iter_mut().zip(g_row) {
                    *o += v * b;
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            triplets.extend(cols.iter().zip(vals).map(|(&c, &v)| (c, r, v)));
        }
        Self::from_triplets(triplets, self.n_cols, self.n_rows).expect("indices already validated")
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out.set(r, c, v);
            }
        }
        out
    }

    /// Returns the matrix with rows and columns relabeled so that old index
    /// `i` becomes `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        assert_eq!(self.n_rows, self.n_cols);
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            triplets.extend(cols.iter().zip(vals).map(|(&c, &v)| (perm[r], perm[c], v)));
        }
        Self::from_triplets(triplets, self.n_rows, self.n_cols).expect("permutation in range")
    }
}
