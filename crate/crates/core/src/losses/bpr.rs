//! Pairwise ranking loss with one sampled negative per positive.
//!
//! `l = (1/m) Σ softplus(-(s_up - s_un))`, `s = e_u·e_i`; with
//! `g = -σ(-x)/m` for `x = s_up - s_un`:
//! `∂l/∂e_u = g(e_p - e_n)`, `∂l/∂e_p = g·e_u`, `∂l/∂e_n = -g·e_u`.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::LossValueAndGrad;
use crate::data::InteractionDataset;
use crate::error::{Error, Result};

const MAX_TRIES: usize = 100;

/// Draws negatives uniformly from the items a user has not interacted with.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    n_items: usize,
    seen: Vec<HashSet<usize>>,
}

impl NegativeSampler {
    pub fn new(train: &InteractionDataset) -> Self {
        let mut seen = vec![HashSet::new(); train.n_users];
        for &(u, i) in &train.pairs {
            seen[u].insert(i);
        }
        Self {
            n_items: train.n_items,
            seen,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, user: usize, rng: &mut R) -> Result<usize> {
        for _ in 0..MAX_TRIES {
            let j = rng.random_range(0..self.n_items);
            if !self.seen[user].contains(&j) {
                return Ok(j);
            }
        }
        Err(Error::NegativeSampling { user, tries: MAX_TRIES })
    }

    /// `(u, i_pos, i_neg)` for each pair.
    pub fn triplets<R: Rng + ?Sized>(
        &self,
        pairs: &[(usize, usize)],
        rng: &mut R,
    ) -> Result<Vec<(usize, usize, usize)>> {
        pairs.iter().map(|&(u, i)| Ok((u, i, self.sample(u, rng)?))).collect()
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let ex = x.exp();
        ex / (1.0 + ex)
    }
}

/// Triplets hold item indices; item rows start at `n_users`.
pub fn bpr_loss(e: ArrayView2<f64>, n_users: usize, triplets: &[(usize, usize, usize)]) -> Result<LossValueAndGrad> {
    if triplets.is_empty() {
        return Err(Error::InvalidArgument("no triplets".into()));
    }
    for &(u, p, n) in triplets {
        if u >= n_users || n_users + p.max(n) >= e.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "triplet ({u}, {p}, {n}) outside a {}-row embedding",
                e.nrows()
            )));
        }
    }
    let mf = triplets.len() as f64;
    let mut value = 0.0;
    let mut grad = Array2::zeros(e.raw_dim());
    for &(u, p, n) in triplets {
        let (eu, ep, en) = (e.row(u), e.row(n_users + p), e.row(n_users + n));
        let x = eu.dot(&ep) - eu.dot(&en);
        value += softplus(-x);
        let g = -sigmoid(-x) / mf;
        grad.row_mut(u).scaled_add(g, &ep);
        grad.row_mut(u).scaled_add(-g, &en);
        grad.row_mut(n_users + p).scaled_add(g, &eu);
        grad.row_mut(n_users + n).scaled_add(-g, &eu);
    }
    Ok(LossValueAndGrad {
        value: value / mf,
        grad,
    })
}
