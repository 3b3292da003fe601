//! Dense and compressed-sparse-row matrices.
//!
//! Everything is `f64`. Dense storage is row-major. Sparse matrices are kept
//! in canonical CSR form (sorted, coalesced column indices per row) and act as
//! constant propagation operators; powers `P^k` are never materialized, only
//! applied as repeated sparse-dense products.

mod dense;
mod sparse;

pub use dense::DenseMatrix;
pub use sparse::SparseMatrix;
