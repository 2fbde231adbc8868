//! Two-kernel contrastive objective over in-batch user–item crossings.
//!
//! With `c = cos(e_u, e_i)` the pair similarity is
//! `sim = exp(c/τ) + exp(c²/τ)`, and for a batch of `m` pairs
//!
//! ```text
//! l = -(1/m) Σ_k log sim(u_k, i_k) + log((1/m²) Σ_{a,b} sim(u_a, i_b))
//! ```
//!
//! where the second sum runs over all `m²` crossings, the positives
//! included. Derivative w.r.t. a similarity `c`:
//! `sim'(c) = exp(c/τ)/τ + 2c·exp(c²/τ)/τ`, so
//! `∂l/∂c_ab = sim'(c_ab)/Σsim - [a=b]·sim'(c_aa)/(m·sim(c_aa))`.
//! Cosine is then differentiated through the row normalisation.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use super::{normalize, normalize_backward, Batch, LossValueAndGrad, Similarity};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SccfParams {
    pub tau: f64,
    /// Include the `exp(c²/τ)` kernel.
    pub squared_term: bool,
    /// How `c` is computed during training.
    pub similarity: Similarity,
}

impl Default for SccfParams {
    fn default() -> Self {
        Self {
            tau: 0.25,
            squared_term: true,
            similarity: Similarity::Cosine,
        }
    }
}

/// `exp(c/τ) + exp(c²/τ)` for the cosine `c` of two non-zero vectors.
pub fn sccf_similarity(e_u: ArrayView1<f64>, e_i: ArrayView1<f64>, tau: f64) -> Result<f64> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!("temperature {tau}")));
    }
    let nu = e_u.dot(&e_u).sqrt();
    let ni = e_i.dot(&e_i).sqrt();
    if nu == 0.0 || ni == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let c = (e_u.dot(&e_i) / (nu * ni)).clamp(-1.0, 1.0);
    Ok((c / tau).exp() + (c * c / tau).exp())
}

pub fn sccf_loss(e: ArrayView2<f64>, batch: &Batch, params: &SccfParams) -> Result<LossValueAndGrad> {
    let tau = params.tau;
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!("temperature {tau}")));
    }
    batch.check_rows(e.nrows())?;
    let m = batch.len();
    let d = e.ncols();

    // Per-position (possibly normalised) user and item vectors.
    let mut users = Array2::zeros((m, d));
    let mut items = Array2::zeros((m, d));
    let mut user_norms = vec![0.0; m];
    let mut item_norms = vec![0.0; m];
    for k in 0..m {
        let (ur, ir) = (e.row(batch.user_row(k)), e.row(batch.item_row(k)));
        match params.similarity {
            Similarity::Cosine => {
                let (u, nu) = normalize(ur);
                let (i, ni) = normalize(ir);
                users.row_mut(k).assign(&u);
                items.row_mut(k).assign(&i);
                user_norms[k] = nu;
                item_norms[k] = ni;
            }
            Similarity::InnerProduct => {
                users.row_mut(k).assign(&ur);
                items.row_mut(k).assign(&ir);
            }
        }
    }

    // One m×m buffer: similarities, then kernel slopes, then ∂l/∂c.
    let mut sims = users.dot(&items.t());
    let diag = sims.diag().to_vec();
    let squared = params.squared_term;
    let exponent = |c: f64| {
        let a = c / tau;
        if squared {
            a.max(c * c / tau)
        } else {
            a
        }
    };
    let shift = sims.fold(f64::NEG_INFINITY, |acc, &c| acc.max(exponent(c)));
    if !shift.is_finite() {
        return Err(Error::Numeric(format!("non-finite similarity exponent {shift}")));
    }

    let mut total = 0.0;
    for c in sims.iter_mut() {
        let v = *c;
        let wa = (v / tau - shift).exp();
        let (kernel, slope) = if squared {
            let wb = (v * v / tau - shift).exp();
            (wa + wb, (wa + wb * 2.0 * v) / tau)
        } else {
            (wa, wa / tau)
        };
        total += kernel;
        *c = slope;
    }

    // Positive term per pair, evaluated without the global shift so a
    // small positive kernel cannot underflow.
    let mut positive = 0.0;
    let mut pos_slope = vec![0.0; m];
    for (k, &c) in diag.iter().enumerate() {
        let a = c / tau;
        let (log_sim, slope) = if squared {
            let b = c * c / tau;
            let top = a.max(b);
            let wa = (a - top).exp();
            let wb = (b - top).exp();
            (top + (wa + wb).ln(), (wa + wb * 2.0 * c) / (tau * (wa + wb)))
        } else {
            (a, 1.0 / tau)
        };
        positive += log_sim;
        pos_slope[k] = slope;
    }
    let mf = m as f64;
    let value = -positive / mf + shift + (total / (mf * mf)).ln();

    let mut dsim = sims;
    dsim /= total;
    for k in 0..m {
        dsim[[k, k]] -= pos_slope[k] / mf;
    }
    let d_users = dsim.dot(&items);
    let d_items = dsim.t().dot(&users);

    let mut grad = Array2::zeros(e.raw_dim());
    for k in 0..m {
        let (ur, ir) = (batch.user_row(k), batch.item_row(k));
        match params.similarity {
            Similarity::Cosine => {
                normalize_backward(d_users.row(k), users.row(k), user_norms[k], grad.row_mut(ur));
                normalize_backward(d_items.row(k), items.row(k), item_norms[k], grad.row_mut(ir));
            }
            Similarity::InnerProduct => {
                grad.row_mut(ur).scaled_add(1.0, &d_users.row(k));
                grad.row_mut(ir).scaled_add(1.0, &d_items.row(k));
            }
        }
    }
    debug_assert_eq!(grad.len_of(Axis(0)), e.nrows());
    Ok(LossValueAndGrad { value, grad })
}
