//! Embedding-induced affinity graph and the full-batch contrastive dynamics.
//!
//! The affinity matrix places the degree-weighted Boltzmann distribution
//! `A'_ui = d_u d_i exp(e_u·e_i) / Z` on the user–item and item–user blocks
//! and zeros elsewhere. One gradient step on the joint contrastive loss is
//! then the graph convolution `E ← (I + γ(A/|D| - A'))E`.

use ndarray::{s, Array2, ArrayView2, Axis};

use super::{check_dense_size, smoothness};
use crate::data::InteractionDataset;
use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;

/// Dense `n × n` affinity matrix with its log-partition.
#[derive(Debug, Clone)]
pub struct AffinityMatrix {
    matrix: Array2<f64>,
    log_partition: f64,
    n_users: usize,
}

impl AffinityMatrix {
    /// Builds `A'` from embeddings (users first) and training degrees.
    /// Exponentials are shifted by the largest weighted score so `Z` stays
    /// representable.
    pub fn new(e: ArrayView2<f64>, ds: &InteractionDataset) -> Result<Self> {
        let (nu, ni) = (ds.n_users, ds.n_items);
        let n = nu + ni;
        if e.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} embedding rows for {n} nodes",
                e.nrows()
            )));
        }
        check_dense_size(n)?;
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite embedding".into()));
        }

        let scores = e.slice(s![..nu, ..]).dot(&e.slice(s![nu.., ..]).t());
        let mut shift = f64::NEG_INFINITY;
        for u in 0..nu {
            for i in 0..ni {
                if ds.user_degree[u] > 0 && ds.item_degree[i] > 0 {
                    shift = shift.max(scores[[u, i]]);
                }
            }
        }
        if !shift.is_finite() {
            return Err(Error::Numeric("no user-item pair with positive degrees".into()));
        }

        let mut block = Array2::zeros((nu, ni));
        for u in 0..nu {
            for i in 0..ni {
                let w = (ds.user_degree[u] * ds.item_degree[i]) as f64;
                if w > 0.0 {
                    block[[u, i]] = w * (scores[[u, i]] - shift).exp();
                }
            }
        }
        let z_shifted: f64 = block.sum();
        if !z_shifted.is_finite() || z_shifted <= 0.0 {
            return Err(Error::Numeric(format!("partition function {z_shifted}")));
        }
        block /= z_shifted;

        let mut matrix = Array2::zeros((n, n));
        matrix.slice_mut(s![..nu, nu..]).assign(&block);
        matrix.slice_mut(s![nu.., ..nu]).assign(&block.t());
        Ok(Self {
            matrix,
            log_partition: shift + z_shifted.ln(),
            n_users: nu,
        })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    /// `log Z` of the unshifted partition function.
    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    /// The `|U| × |I|` Boltzmann block; a probability distribution.
    pub fn user_item_block(&self) -> ArrayView2<'_, f64> {
        self.matrix.slice(s![..self.n_users, self.n_users..])
    }

    /// `L' = D' - A'` with `D'` the row sums of `A'`.
    pub fn laplacian(&self) -> Array2<f64> {
        let mut l = -&self.matrix;
        for (v, d) in self.matrix.sum_axis(Axis(1)).iter().enumerate() {
            l[[v, v]] += d;
        }
        l
    }
}

/// `A'' = A/|D| - A'`.
pub fn combined_operator(g: &BipartiteGraph, affinity: &AffinityMatrix) -> Array2<f64> {
    let mut out = -affinity.matrix();
    let scale = 1.0 / g.n_edges() as f64;
    for (r, c, v) in g.adjacency.triplets() {
        out[[r, c]] += v * scale;
    }
    out
}

/// One step of the full contrastive dynamics, `(I + γA''(t))E`.
pub fn dynamics_step(
    e: ArrayView2<f64>,
    g: &BipartiteGraph,
    ds: &InteractionDataset,
    gamma: f64,
) -> Result<Array2<f64>> {
    check_gamma(gamma)?;
    let affinity = AffinityMatrix::new(e, ds)?;
    let a2 = combined_operator(g, &affinity);
    let mut next = e.to_owned();
    next.scaled_add(gamma, &a2.dot(&e));
    Ok(next)
}

/// Alignment-only step, `(I + γA/|D|)E`.
pub fn alignment_step(e: ArrayView2<f64>, g: &BipartiteGraph, gamma: f64) -> Result<Array2<f64>> {
    check_gamma(gamma)?;
    let mut next = e.to_owned();
    next.scaled_add(gamma / g.n_edges() as f64, &g.adjacency.spmm(e)?);
    Ok(next)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::InvalidArgument(format!("learning rate {gamma}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dynamics {
    /// Alignment and uniformity, `I + γA''(t)`.
    Full,
    /// Alignment only, `I + γA/|D|`.
    AlignmentOnly,
}

/// Result of stacking `T` dynamics steps.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// `E(1) .. E(T)` (fewer if the run diverged).
    pub states: Vec<Array2<f64>>,
    /// Interaction-graph smoothness of each embedding column for
    /// `E(0) .. E(T)`; `NaN` marks an all-zero column.
    pub column_smoothness: Vec<Vec<f64>>,
    /// `trace(A''(t))` for every full step taken.
    pub operator_trace: Vec<f64>,
    pub diverged: bool,
}

const DIVERGENCE_NORM: f64 = 1e6;

/// Repeatedly applies [`dynamics_step`] (or the alignment-only variant).
pub fn simulate_stacked(
    e0: ArrayView2<f64>,
    g: &BipartiteGraph,
    ds: &InteractionDataset,
    gamma: f64,
    steps: usize,
    dynamics: Dynamics,
) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::InvalidArgument("need at least one step".into()));
    }
    check_gamma(gamma)?;
    let laplacian = g.laplacian();
    let column_smoothness = |e: &Array2<f64>| -> Vec<f64> {
        e.columns()
            .into_iter()
            .map(|c| smoothness(c, &laplacian).unwrap_or(f64::NAN))
            .collect()
    };

    let mut current = e0.to_owned();
    let mut traj = Trajectory {
        states: Vec::with_capacity(steps),
        column_smoothness: vec![column_smoothness(&current)],
        operator_trace: Vec::new(),
        diverged: false,
    };
    for _ in 0..steps {
        current = match dynamics {
            Dynamics::Full => {
                let affinity = AffinityMatrix::new(current.view(), ds)?;
                let a2 = combined_operator(g, &affinity);
                traj.operator_trace.push(a2.diag().sum());
                let mut next = current.clone();
                next.scaled_add(gamma, &a2.dot(&current));
                next
            }
            Dynamics::AlignmentOnly => alignment_step(current.view(), g, gamma)?,
        };
        let norm = current.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            traj.diverged = true;
            break;
        }
        traj.column_smoothness.push(column_smoothness(&current));
        traj.states.push(current.clone());
    }
    Ok(traj)
}
