//! Sparse bipartite graph structures.
//!
//! Node ordering is users first (`0..n_users`) then items
//! (`n_users..n_users + n_items`). Matrices are stored row-major with
//! sorted column indices, which keeps products deterministic.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::data::InteractionDataset;
use crate::error::{Error, Result};

/// Row-compressed sparse matrix with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets in any order. Repeated
    /// coordinates and non-finite values are rejected.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut prev: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::DimensionMismatch(format!(
                    "entry ({r}, {c}) outside {rows}x{cols}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::Numeric(format!("non-finite entry at ({r}, {c})")));
            }
            if prev == Some((r, c)) {
                return Err(Error::InvalidArgument(format!("duplicate entry ({r}, {c})")));
            }
            prev = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of one row.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map_or(0.0, |k| vals[k])
    }

    /// Row-major `(row, col, value)` iteration.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn row_sums(&self) -> Array1<f64> {
        (0..self.rows).map(|r| self.row(r).1.iter().sum()).collect()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for (r, c, v) in self.triplets() {
            out[[r, c]] = v;
        }
        out
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols && self.triplets().all(|(r, c, v)| (self.get(c, r) - v).abs() <= tol)
    }

    pub fn matvec(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect())
    }

    /// Sparse × dense product.
    pub fn spmm(&self, dense: ArrayView2<f64>) -> Result<Array2<f64>> {
        if dense.nrows() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix times {}x{} matrix",
                self.rows,
                self.cols,
                dense.nrows(),
                dense.ncols()
            )));
        }
        let mut out = Array2::zeros((self.rows, dense.ncols()));
        for (r, mut out_row) in out.rows_mut().into_iter().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out_row.scaled_add(v, &dense.row(c));
            }
        }
        Ok(out)
    }

    /// Returns `self * s` entrywise.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }
}

/// The user–item interaction graph built from a training set.
#[derive(Debug, Clone)]
pub struct BipartiteGraph {
    pub n_users: usize,
    pub n_items: usize,
    pub adjacency: SparseMatrix,
    pub degree: Array1<f64>,
}

impl BipartiteGraph {
    /// `A[u, |U|+i] = A[|U|+i, u] = 1` for every training pair.
    pub fn build(train: &InteractionDataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyDataset("training set has no interactions".into()));
        }
        let n = train.n_nodes();
        let offset = train.n_users;
        let mut triplets = Vec::with_capacity(2 * train.n_interactions());
        for &(u, i) in &train.pairs {
            triplets.push((u, offset + i, 1.0));
            triplets.push((offset + i, u, 1.0));
        }
        let adjacency = SparseMatrix::from_triplets(n, n, triplets)?;
        let degree = adjacency.row_sums();
        Ok(Self {
            n_users: train.n_users,
            n_items: train.n_items,
            adjacency,
            degree,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_users + self.n_items
    }

    /// Number of edges, |D|.
    pub fn n_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    /// `L = D - A`.
    pub fn laplacian(&self) -> SparseMatrix {
        let n = self.n_nodes();
        let mut triplets: Vec<_> = self.adjacency.triplets().map(|(r, c, v)| (r, c, -v)).collect();
        triplets.extend(
            (0..n)
                .filter(|&v| self.degree[v] != 0.0)
                .map(|v| (v, v, self.degree[v])),
        );
        SparseMatrix::from_triplets(n, n, triplets).expect("laplacian entries are unique")
    }

    /// `D^{-1/2} A D^{-1/2}`; isolated nodes keep an all-zero row and column.
    pub fn normalized_adjacency(&self) -> SparseMatrix {
        let inv_sqrt: Vec<f64> = self
            .degree
            .iter()
            .map(|&d| if d > 0.0 { d.sqrt().recip() } else { 0.0 })
            .collect();
        let n = self.n_nodes();
        let triplets = self
            .adjacency
            .triplets()
            .map(|(r, c, v)| (r, c, v * inv_sqrt[r] * inv_sqrt[c]))
            .collect();
        SparseMatrix::from_triplets(n, n, triplets).expect("same pattern as adjacency")
    }
}

/// Something that acts linearly on node signals.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64>;
    fn apply_matrix(&self, x: ArrayView2<f64>) -> Array2<f64>;
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        self.rows
    }

    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.matvec(x).expect("operator dimension checked by caller")
    }

    fn apply_matrix(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.spmm(x).expect("operator dimension checked by caller")
    }
}

impl LinearOperator for Array2<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.dot(&x)
    }

    fn apply_matrix(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.dot(&x)
    }
}
