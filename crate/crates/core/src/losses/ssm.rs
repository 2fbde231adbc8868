//! Sampled softmax with in-batch item negatives.
//!
//! For each pair `(u_k, i_k)` the softmax runs over the distinct items of
//! the batch: `l = (1/m) Σ_k [logsumexp_j(s_kj) - s_{k,pos(k)}]`, with
//! `s_kj = e_{u_k}·e_j`. Then `∂l/∂s_kj = (p_kj - [j = pos(k)]) / m`.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView2};

use super::{Batch, LossValueAndGrad};
use crate::error::Result;

pub fn ssm_loss(e: ArrayView2<f64>, batch: &Batch) -> Result<LossValueAndGrad> {
    batch.check_rows(e.nrows())?;
    let m = batch.len();
    let d = e.ncols();

    let mut slot: HashMap<usize, usize> = HashMap::new();
    let mut item_rows = Vec::new();
    let positive: Vec<usize> = (0..m)
        .map(|k| {
            let row = batch.item_row(k);
            *slot.entry(row).or_insert_with(|| {
                item_rows.push(row);
                item_rows.len() - 1
            })
        })
        .collect();

    let users = Array2::from_shape_fn((m, d), |(k, c)| e[[batch.user_row(k), c]]);
    let items = Array2::from_shape_fn((item_rows.len(), d), |(j, c)| e[[item_rows[j], c]]);
    let mut probs = users.dot(&items.t());

    let mf = m as f64;
    let mut value = 0.0;
    for (k, mut row) in probs.rows_mut().into_iter().enumerate() {
        let top = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let pos_score = row[positive[k]];
        row.mapv_inplace(|s| (s - top).exp());
        let sum = row.sum();
        value += top + sum.ln() - pos_score;
        row /= sum;
    }
    value /= mf;

    let mut dscore = probs;
    for k in 0..m {
        dscore[[k, positive[k]]] -= 1.0;
    }
    dscore /= mf;

    let d_users = dscore.dot(&items);
    let d_items = dscore.t().dot(&users);
    let mut grad = Array2::zeros(e.raw_dim());
    for k in 0..m {
        grad.row_mut(batch.user_row(k)).scaled_add(1.0, &d_users.row(k));
    }
    for (j, &row) in item_rows.iter().enumerate() {
        grad.row_mut(row).scaled_add(1.0, &d_items.row(j));
    }
    Ok(LossValueAndGrad { value, grad })
}
