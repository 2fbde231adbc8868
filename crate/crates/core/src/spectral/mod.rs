//! Graph-spectral laboratory for small graphs.
//!
//! Everything here is dense and exact: Laplacian eigendecomposition, the
//! graph Fourier transform, the Rayleigh-quotient smoothness measure,
//! polynomial graph filters, and (in the submodules) the embedding-induced
//! affinity graph with the contrastive learning dynamics built on it.
//! Sizes are capped at [`DENSE_LIMIT`] nodes.

mod affinity;
mod checks;

pub use affinity::{
    alignment_step, combined_operator, dynamics_step, simulate_stacked, AffinityMatrix, Dynamics, Trajectory,
};
pub use checks::{
    default_gamma, equilibrium_residual, fit_equilibrium, implicit_mf_residual, smoothing_direction_check,
    DirectionTally, EquilibriumFit, SmoothingDirectionReport,
};

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::graph::{LinearOperator, SparseMatrix};

/// Largest node count the lab will materialise densely.
pub const DENSE_LIMIT: usize = 4096;

pub(crate) fn check_dense_size(n: usize) -> Result<()> {
    if n > DENSE_LIMIT {
        Err(Error::SizeGuard { n, limit: DENSE_LIMIT })
    } else {
        Ok(())
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
/// Column `k` of `eigenvectors` belongs to `eigenvalues[k]`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Largest eigenvalue, λ_n.
    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.dim() - 1]
    }

    /// Graph Fourier transform, `Uᵀx`.
    pub fn gft(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_len(x.len())?;
        Ok(self.eigenvectors.t().dot(&x))
    }

    /// Inverse transform, `U x̂`.
    pub fn inverse_gft(&self, coords: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_len(coords.len())?;
        Ok(self.eigenvectors.dot(&coords))
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "signal of length {len} for a spectrum of size {}",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Eigendecomposition of a (Laplacian-like) sparse symmetric matrix.
pub fn eigendecompose(l: &SparseMatrix) -> Result<Spectrum> {
    let (rows, cols) = l.shape();
    if rows != cols {
        return Err(Error::DimensionMismatch(format!("{rows}x{cols} is not square")));
    }
    check_dense_size(rows)?;
    symmetric_eigen(&l.to_dense())
}

/// Eigendecomposition of a dense symmetric matrix.
pub fn symmetric_eigen(m: &Array2<f64>) -> Result<Spectrum> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch(format!("{}x{} is not square", n, m.ncols())));
    }
    check_dense_size(n)?;
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    let asym = (0..n)
        .flat_map(|r| (0..r).map(move |c| (r, c)))
        .fold(0.0f64, |acc, (r, c)| acc.max((m[[r, c]] - m[[c, r]]).abs()));
    if asym > 1e-12 * scale {
        return Err(Error::NotSymmetric(asym));
    }

    let dm = DMatrix::from_fn(n, n, |r, c| m[[r, c]]);
    let eig = SymmetricEigen::new(dm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut eigenvectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            eigenvectors[[r, dst]] = eig.eigenvectors[(r, src)];
        }
    }
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// Rayleigh quotient `xᵀLx / xᵀx`.
///
/// With `L = D - A` this equals `½ Σ_ij A_ij (x_i - x_j)² / ‖x‖²`, and an
/// eigenvector `u_k` scores exactly `λ_k`.
pub fn smoothness<L: LinearOperator + ?Sized>(x: ArrayView1<f64>, l: &L) -> Result<f64> {
    if x.len() != l.dim() {
        return Err(Error::DimensionMismatch(format!(
            "signal of length {} on a graph with {} nodes",
            x.len(),
            l.dim()
        )));
    }
    let energy = x.dot(&x);
    if energy == 0.0 {
        return Err(Error::ZeroSignal);
    }
    Ok(x.dot(&l.apply(x)) / energy)
}

/// Matrix a polynomial filter is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterBase {
    /// `L = D - A` of the interaction graph.
    Laplacian,
    /// `A` of the interaction graph.
    InteractionAdjacency,
    /// `A'(t)` induced by the current embeddings.
    Affinity,
}

impl std::fmt::Display for FilterBase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FilterBase::Laplacian => "laplacian",
            FilterBase::InteractionAdjacency => "interaction_adjacency",
            FilterBase::Affinity => "affinity",
        };
        f.write_str(s)
    }
}

/// `Σ_k coefficients[k] · M^k` for the chosen base `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSpec {
    pub base: FilterBase,
    pub coefficients: Vec<f64>,
}

impl FilterSpec {
    pub fn new(base: FilterBase, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "filter coefficients must be finite and non-empty, got {coefficients:?}"
            )));
        }
        Ok(Self { base, coefficients })
    }

    pub fn identity() -> Self {
        Self {
            base: FilterBase::Laplacian,
            coefficients: vec![1.0],
        }
    }

    /// `I - γL`
    pub fn low_pass(gamma: f64) -> Self {
        Self {
            base: FilterBase::Laplacian,
            coefficients: vec![1.0, -gamma],
        }
    }

    /// `I + γL`
    pub fn high_pass(gamma: f64) -> Self {
        Self {
            base: FilterBase::Laplacian,
            coefficients: vec![1.0, gamma],
        }
    }

    /// `I + γA/|D|`, the update produced by the alignment term.
    pub fn alignment(gamma: f64, n_edges: usize) -> Self {
        Self {
            base: FilterBase::InteractionAdjacency,
            coefficients: vec![1.0, gamma / n_edges as f64],
        }
    }

    /// `I - γA'`, the update produced by the uniformity term.
    pub fn uniformity(gamma: f64) -> Self {
        Self {
            base: FilterBase::Affinity,
            coefficients: vec![1.0, -gamma],
        }
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }
}

/// Base matrices a filter may be evaluated against.
#[derive(Debug, Clone, Copy, Default)]
pub struct FilterContext<'a> {
    pub laplacian: Option<&'a SparseMatrix>,
    pub adjacency: Option<&'a SparseMatrix>,
    pub affinity: Option<&'a Array2<f64>>,
}

impl<'a> FilterContext<'a> {
    fn base(&self, base: FilterBase) -> Result<&'a dyn LinearOperator> {
        let op: Option<&dyn LinearOperator> = match base {
            FilterBase::Laplacian => self.laplacian.map(|m| m as &dyn LinearOperator),
            FilterBase::InteractionAdjacency => self.adjacency.map(|m| m as &dyn LinearOperator),
            FilterBase::Affinity => self.affinity.map(|m| m as &dyn LinearOperator),
        };
        op.ok_or_else(|| Error::UnknownFilterBase(base.to_string()))
    }
}

/// Graph convolution: applies the filter to every column of `x` by Horner's
/// rule, `y = h_k x; y = M y + h_j x` for `j = k-1..0`.
pub fn apply_filter(f: &FilterSpec, x: ArrayView2<f64>, ctx: &FilterContext) -> Result<Array2<f64>> {
    let m = ctx.base(f.base)?;
    if x.nrows() != m.dim() {
        return Err(Error::DimensionMismatch(format!(
            "signal with {} rows for a {}-node filter base",
            x.nrows(),
            m.dim()
        )));
    }
    let k = f.degree();
    let mut y = x.to_owned() * f.coefficients[k];
    for &h in f.coefficients[..k].iter().rev() {
        y = m.apply_matrix(y.view());
        y.scaled_add(h, &x);
    }
    Ok(y)
}

/// Single-signal convenience over [`apply_filter`].
pub fn apply_filter_vec(f: &FilterSpec, x: ArrayView1<f64>, ctx: &FilterContext) -> Result<Array1<f64>> {
    let col = x.insert_axis(ndarray::Axis(1));
    Ok(apply_filter(f, col, ctx)?.column(0).to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::InteractionDataset;
    use crate::graph::BipartiteGraph;
    use ndarray::array;

    fn tiny_laplacian() -> SparseMatrix {
        let ds = InteractionDataset::from_pairs(2, 2, [(0, 0), (0, 1), (1, 1)]).unwrap();
        BipartiteGraph::build(&ds).unwrap().laplacian()
    }

    #[test]
    fn spectrum_is_ascending_and_orthonormal() {
        let s = eigendecompose(&tiny_laplacian()).unwrap();
        assert!(s.eigenvalues.windows(2).into_iter().all(|w| w[0] <= w[1]));
        let gram = s.eigenvectors.t().dot(&s.eigenvectors);
        for ((r, c), v) in gram.indexed_iter() {
            let expect = if r == c { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn asymmetric_input_rejected() {
        let m = array![[0.0, 1.0], [0.0, 0.0]];
        assert!(matches!(symmetric_eigen(&m), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn size_guard() {
        let big = SparseMatrix::identity(DENSE_LIMIT + 1);
        assert!(matches!(eigendecompose(&big), Err(Error::SizeGuard { .. })));
    }

    #[test]
    fn gft_of_eigenvector_is_unit_coordinate() {
        let s = eigendecompose(&tiny_laplacian()).unwrap();
        let coords = s.gft(s.eigenvectors.column(2)).unwrap();
        for (k, c) in coords.iter().enumerate() {
            let expect = if k == 2 { 1.0 } else { 0.0 };
            assert!((c - expect).abs() < 1e-10);
        }
        assert!(s.gft(Array1::zeros(4).view()).unwrap().iter().all(|&v| v == 0.0));
        assert!(s.gft(Array1::zeros(3).view()).is_err());
    }

    #[test]
    fn smoothness_of_constant_and_zero() {
        let l = tiny_laplacian();
        assert_eq!(smoothness(Array1::from_elem(4, 3.0).view(), &l).unwrap(), 0.0);
        assert!(matches!(
            smoothness(Array1::zeros(4).view(), &l),
            Err(Error::ZeroSignal)
        ));
    }

    #[test]
    fn filter_identity_and_missing_base() {
        let l = tiny_laplacian();
        let ctx = FilterContext {
            laplacian: Some(&l),
            ..Default::default()
        };
        let x = array![[1.0, 0.5], [2.0, -1.0], [3.0, 0.0], [4.0, 2.0]];
        assert_eq!(apply_filter(&FilterSpec::identity(), x.view(), &ctx).unwrap(), x);
        let f = FilterSpec::uniformity(0.1);
        assert!(matches!(
            apply_filter(&f, x.view(), &ctx),
            Err(Error::UnknownFilterBase(_))
        ));
    }

    #[test]
    fn horner_matches_expanded_polynomial() {
        let l = tiny_laplacian();
        let dense = l.to_dense();
        let ctx = FilterContext {
            laplacian: Some(&l),
            ..Default::default()
        };
        let f = FilterSpec::new(FilterBase::Laplacian, vec![0.5, -0.25, 0.125]).unwrap();
        let x = array![1.0, -2.0, 0.5, 3.0];
        let got = apply_filter_vec(&f, x.view(), &ctx).unwrap();
        let expect = &x * 0.5 - dense.dot(&x) * 0.25 + dense.dot(&dense.dot(&x)) * 0.125;
        for (a, b) in got.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn filter_rejects_non_finite_coefficients() {
        assert!(FilterSpec::new(FilterBase::Laplacian, vec![]).is_err());
        assert!(FilterSpec::new(FilterBase::Laplacian, vec![1.0, f64::NAN]).is_err());
    }
}
