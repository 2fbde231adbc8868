//! Alignment + uniformity on L2-normalised embeddings.
//!
//! ```text
//! l_align   = (1/m) Σ_k ‖ê_{u_k} - ê_{i_k}‖²
//! l_uniform = log mean_{a<b} exp(-2‖ê_{u_a} - ê_{u_b}‖²)
//!           + log mean_{a<b} exp(-2‖ê_{i_a} - ê_{i_b}‖²)
//! l         = l_align + β·l_uniform
//! ```
//!
//! Pairs are taken over batch positions. A side with a single position has
//! no pairs and contributes nothing.

use ndarray::{Array1, Array2, ArrayView2};

use super::{normalize, normalize_backward, Batch, LossValueAndGrad};
use crate::error::{Error, Result};

/// Value and gradient (w.r.t. the normalised rows) of one uniformity term.
fn uniformity(x: &Array2<f64>) -> (f64, Array2<f64>) {
    let k = x.nrows();
    let mut grad = Array2::zeros(x.raw_dim());
    if k < 2 {
        return (0.0, grad);
    }
    let gram = x.dot(&x.t());
    let sq: Array1<f64> = gram.diag().to_owned();
    let dist = |a: usize, b: usize| (sq[a] + sq[b] - 2.0 * gram[[a, b]]).max(0.0);

    let mut top = f64::NEG_INFINITY;
    for a in 0..k {
        for b in a + 1..k {
            top = top.max(-2.0 * dist(a, b));
        }
    }
    // weights[a, b] = ∂U/∂δ_ab, symmetric with zero diagonal.
    let mut weights = Array2::zeros((k, k));
    let mut total = 0.0;
    for a in 0..k {
        for b in a + 1..k {
            let w = (-2.0 * dist(a, b) - top).exp();
            weights[[a, b]] = w;
            weights[[b, a]] = w;
            total += w;
        }
    }
    let n_pairs = (k * (k - 1) / 2) as f64;
    let value = top + (total / n_pairs).ln();
    weights *= -2.0 / total;

    // ∂U/∂x_a = Σ_b W_ab · 2(x_a - x_b)
    let row_sums = weights.sum_axis(ndarray::Axis(1));
    let mixed = weights.dot(x);
    for a in 0..k {
        let mut g = grad.row_mut(a);
        g.scaled_add(2.0 * row_sums[a], &x.row(a));
        g.scaled_add(-2.0, &mixed.row(a));
    }
    (value, grad)
}

pub fn directau_loss(e: ArrayView2<f64>, batch: &Batch, beta: f64) -> Result<LossValueAndGrad> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::InvalidArgument(format!("beta {beta}")));
    }
    batch.check_rows(e.nrows())?;
    let m = batch.len();
    let d = e.ncols();

    let mut users = Array2::zeros((m, d));
    let mut items = Array2::zeros((m, d));
    let mut user_norms = vec![0.0; m];
    let mut item_norms = vec![0.0; m];
    for k in 0..m {
        let (u, nu) = normalize(e.row(batch.user_row(k)));
        let (i, ni) = normalize(e.row(batch.item_row(k)));
        users.row_mut(k).assign(&u);
        items.row_mut(k).assign(&i);
        user_norms[k] = nu;
        item_norms[k] = ni;
    }

    let mf = m as f64;
    let diff = &users - &items;
    let align = diff.iter().map(|v| v * v).sum::<f64>() / mf;
    let (uni_users, g_users) = uniformity(&users);
    let (uni_items, g_items) = uniformity(&items);

    let d_users = &diff * (2.0 / mf) + &g_users * beta;
    let d_items = &diff * (-2.0 / mf) + &g_items * beta;

    let mut grad = Array2::zeros(e.raw_dim());
    for k in 0..m {
        normalize_backward(
            d_users.row(k),
            users.row(k),
            user_norms[k],
            grad.row_mut(batch.user_row(k)),
        );
        normalize_backward(
            d_items.row(k),
            items.row(k),
            item_norms[k],
            grad.row_mut(batch.item_row(k)),
        );
    }
    Ok(LossValueAndGrad {
        value: align + beta * (uni_users + uni_items),
        grad,
    })
}
