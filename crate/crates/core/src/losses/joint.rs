//! Joint-probability contrastive loss over the whole training set.
//!
//! ```text
//! l         = l_align + l_uniform
//! l_align   = -(1/|D|) Σ_{(u,i)∈D} e_u·e_i
//! l_uniform = log Σ_{(u,i)∈U×I} d_u d_i exp(e_u·e_i)
//! ```
//!
//! Gradients: `∂l_align/∂e_u = -(1/|D|) Σ_{i∈N(u)} e_i` and
//! `∂l_uniform/∂e_u = Σ_i P_ui e_i` with `P_ui = d_u d_i exp(e_u·e_i)/Z`
//! (symmetrically for items). Stacked, `∇l = -(A/|D| - A')E`.

use ndarray::{s, Array2, ArrayView2};

use super::LossValueAndGrad;
use crate::data::InteractionDataset;
use crate::error::{Error, Result};

/// Largest `|U|·|I|` the dense evaluation accepts.
pub const JOINT_PAIR_LIMIT: usize = 10_000_000;

struct Terms {
    align: f64,
    uniform: f64,
    boltzmann: Array2<f64>,
}

fn terms(e: ArrayView2<f64>, ds: &InteractionDataset) -> Result<Terms> {
    let (nu, ni) = (ds.n_users, ds.n_items);
    if nu * ni > JOINT_PAIR_LIMIT {
        return Err(Error::SizeGuard {
            n: nu * ni,
            limit: JOINT_PAIR_LIMIT,
        });
    }
    if e.nrows() != nu + ni {
        return Err(Error::DimensionMismatch(format!(
            "{} embedding rows for {} nodes",
            e.nrows(),
            nu + ni
        )));
    }
    if ds.is_empty() {
        return Err(Error::EmptyDataset("joint loss needs interactions".into()));
    }
    let users = e.slice(s![..nu, ..]);
    let items = e.slice(s![nu.., ..]);
    let scores = users.dot(&items.t());

    let align = -ds.pairs.iter().map(|&(u, i)| scores[[u, i]]).sum::<f64>() / ds.n_interactions() as f64;

    let mut shift = f64::NEG_INFINITY;
    for ((u, i), &sc) in scores.indexed_iter() {
        if ds.user_degree[u] > 0 && ds.item_degree[i] > 0 {
            shift = shift.max(sc);
        }
    }
    let mut boltzmann = Array2::zeros((nu, ni));
    for ((u, i), p) in boltzmann.indexed_iter_mut() {
        let w = (ds.user_degree[u] * ds.item_degree[i]) as f64;
        if w > 0.0 {
            *p = w * (scores[[u, i]] - shift).exp();
        }
    }
    let z_shifted = boltzmann.sum();
    if !z_shifted.is_finite() || z_shifted <= 0.0 {
        return Err(Error::Numeric(format!("partition function {z_shifted}")));
    }
    boltzmann /= z_shifted;
    Ok(Terms {
        align,
        uniform: shift + z_shifted.ln(),
        boltzmann,
    })
}

/// `(l_align, l_uniform)`.
pub fn joint_contrastive_terms(e: ArrayView2<f64>, ds: &InteractionDataset) -> Result<(f64, f64)> {
    let t = terms(e, ds)?;
    Ok((t.align, t.uniform))
}

pub fn joint_contrastive_loss(e: ArrayView2<f64>, ds: &InteractionDataset) -> Result<LossValueAndGrad> {
    let t = terms(e, ds)?;
    let nu = ds.n_users;
    let users = e.slice(s![..nu, ..]);
    let items = e.slice(s![nu.., ..]);

    let mut grad = Array2::zeros(e.raw_dim());
    grad.slice_mut(s![..nu, ..]).assign(&t.boltzmann.dot(&items));
    grad.slice_mut(s![nu.., ..]).assign(&t.boltzmann.t().dot(&users));
    let inv_edges = 1.0 / ds.n_interactions() as f64;
    for &(u, i) in &ds.pairs {
        grad.row_mut(u).scaled_add(-inv_edges, &items.row(i));
        grad.row_mut(nu + i).scaled_add(-inv_edges, &users.row(u));
    }
    Ok(LossValueAndGrad {
        value: t.align + t.uniform,
        grad,
    })
}
