//! Smoothing-direction and equilibrium checks built on the affinity graph.

use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use super::affinity::AffinityMatrix;
use super::{eigendecompose, smoothness, DENSE_LIMIT};
use crate::data::InteractionDataset;
use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;
use crate::losses::joint_contrastive_loss;

/// `0.1 / λ_n(L)` of the interaction graph.
pub fn default_gamma(g: &BipartiteGraph) -> Result<f64> {
    let spectrum = eigendecompose(&g.laplacian())?;
    Ok(0.1 / spectrum.max_eigenvalue())
}

/// How often one filter moved smoothness in the expected direction.
#[derive(Debug, Clone, Serialize)]
pub struct DirectionTally {
    pub before: Vec<f64>,
    pub after: Vec<f64>,
    pub held: usize,
    /// Largest move against the expected direction (0 if none).
    pub worst_violation: f64,
}

impl DirectionTally {
    fn new() -> Self {
        Self {
            before: Vec::new(),
            after: Vec::new(),
            held: 0,
            worst_violation: 0.0,
        }
    }

    /// `violation` is positive when the expected direction failed.
    fn record(&mut self, before: f64, after: f64, violation: f64) {
        let slack = 1e-12 * before.abs().max(1.0);
        if violation <= slack {
            self.held += 1;
        } else {
            self.worst_violation = self.worst_violation.max(violation);
        }
        self.before.push(before);
        self.after.push(after);
    }

    pub fn total(&self) -> usize {
        self.before.len()
    }

    pub fn fraction_held(&self) -> f64 {
        if self.total() == 0 {
            1.0
        } else {
            self.held as f64 / self.total() as f64
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SmoothingDirectionReport {
    pub gamma: f64,
    /// `I + γA/|D|` measured with `L`; expected to lower smoothness.
    pub interaction: DirectionTally,
    /// `I - γA'` measured with `L' = D' - A'`; expected to raise it.
    pub affinity: DirectionTally,
}

/// Applies the alignment and uniformity filters to each column of `signals`
/// and records the smoothness before and after on the matching graph.
/// Violations are tallied, never raised.
pub fn smoothing_direction_check(
    signals: ArrayView2<f64>,
    g: &BipartiteGraph,
    ds: &InteractionDataset,
    e: ArrayView2<f64>,
    gamma: f64,
) -> Result<SmoothingDirectionReport> {
    let n = g.n_nodes();
    if signals.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "signals have {} rows for {n} nodes",
            signals.nrows()
        )));
    }
    let laplacian = g.laplacian();
    let affinity = AffinityMatrix::new(e, ds)?;
    let aff_laplacian = affinity.laplacian();
    let step = gamma / g.n_edges() as f64;

    let mut report = SmoothingDirectionReport {
        gamma,
        interaction: DirectionTally::new(),
        affinity: DirectionTally::new(),
    };
    for x in signals.columns() {
        let smoothed = &x + &(g.adjacency.matvec(x)? * step);
        let before = smoothness(x, &laplacian)?;
        let after = smoothness(smoothed.view(), &laplacian)?;
        report.interaction.record(before, after, after - before);

        let dispersed = &x - &(affinity.matrix().dot(&x) * gamma);
        let before = smoothness(x, &aff_laplacian)?;
        let after = smoothness(dispersed.view(), &aff_laplacian)?;
        report.affinity.record(before, after, before - after);
    }
    Ok(report)
}

/// `max_{u,i} |A'_ui(E) - A_ui/|D||` over all user–item pairs.
pub fn equilibrium_residual(e: ArrayView2<f64>, ds: &InteractionDataset) -> Result<f64> {
    let affinity = AffinityMatrix::new(e, ds)?;
    let block = affinity.user_item_block();
    let target = 1.0 / ds.n_interactions() as f64;
    let observed = ds.pair_set();
    let mut worst = 0.0f64;
    for ((u, i), &p) in block.indexed_iter() {
        let empirical = if observed.contains(&(u, i)) { target } else { 0.0 };
        worst = worst.max((p - empirical).abs());
    }
    Ok(worst)
}

/// `max_{(u,i) ∈ D} |e_u·e_i - (log(1/(|D| d_u d_i)) + log Z)|`.
///
/// Only observed pairs are scored; the target is `-∞` elsewhere.
pub fn implicit_mf_residual(e: ArrayView2<f64>, ds: &InteractionDataset) -> Result<f64> {
    let affinity = AffinityMatrix::new(e, ds)?;
    let log_z = affinity.log_partition();
    let n_edges = ds.n_interactions() as f64;
    let nu = ds.n_users;
    let mut worst = 0.0f64;
    for &(u, i) in &ds.pairs {
        let score = e.row(u).dot(&e.row(nu + i));
        let weight = n_edges * (ds.user_degree[u] * ds.item_degree[i]) as f64;
        let target = -weight.ln() + log_z;
        worst = worst.max((score - target).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
pub struct EquilibriumFit {
    pub embeddings: Array2<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub loss: f64,
}

/// Full-batch gradient descent on the joint contrastive loss until the
/// gradient norm drops below `grad_tol`, the equilibrium residual drops
/// below `residual_tol`, or `max_iters` is reached.
///
/// Datasets with unobserved pairs only reach equilibrium as their scores go
/// to `-∞`, so the gradient norm shrinks roughly like `1/t`; the residual
/// stop is what terminates those runs in practice.
pub fn fit_equilibrium(
    ds: &InteractionDataset,
    e0: ArrayView2<f64>,
    learning_rate: f64,
    grad_tol: f64,
    residual_tol: f64,
    max_iters: usize,
) -> Result<EquilibriumFit> {
    if ds.n_nodes() > DENSE_LIMIT {
        return Err(Error::SizeGuard {
            n: ds.n_nodes(),
            limit: DENSE_LIMIT,
        });
    }
    let mut e = e0.to_owned();
    let mut iterations = 0;
    loop {
        let lg = joint_contrastive_loss(e.view(), ds)?;
        let grad_norm = lg.grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        let done = grad_norm < grad_tol
            || iterations >= max_iters
            || (iterations % 64 == 0 && equilibrium_residual(e.view(), ds)? < residual_tol);
        if done {
            return Ok(EquilibriumFit {
                embeddings: e,
                iterations,
                grad_norm,
                loss: lg.value,
            });
        }
        e.scaled_add(-learning_rate, &lg.grad);
        iterations += 1;
    }
}
