//! Full-ranking top-K evaluation.
//!
//! Every item except the user's known ones (train, plus validation when
//! scoring the test split) is a candidate. Ties break toward the lower item
//! index, and users are aggregated in index order, so reports are
//! bit-stable for a given embedding.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::time::Instant;

use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use serde::Serialize;

use crate::data::SplitDataset;
use crate::error::{Error, Result};
use crate::losses::Similarity;

const USER_CHUNK: usize = 512;

/// Recall@K: fraction of the ground truth found in the first `k` entries.
pub fn recall_at_k(topk: &[usize], truth: &HashSet<usize>, k: usize) -> Option<f64> {
    if truth.is_empty() {
        return None;
    }
    let hits = topk.iter().take(k).filter(|i| truth.contains(i)).count();
    Some(hits as f64 / truth.len() as f64)
}

/// NDCG@K with binary relevance; rank `r` (1-based) is discounted by
/// `1/log2(r+1)` and the ideal list holds `min(k, |truth|)` hits.
pub fn ndcg_at_k(topk: &[usize], truth: &HashSet<usize>, k: usize) -> Option<f64> {
    if truth.is_empty() {
        return None;
    }
    let discount = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg: f64 = topk
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| truth.contains(i))
        .map(|(pos, _)| discount(pos + 1))
        .sum();
    let idcg: f64 = (1..=k.min(truth.len())).map(discount).sum();
    Some(if idcg > 0.0 { dcg / idcg } else { 0.0 })
}

fn by_score_then_index(scores: ArrayView1<'_, f64>) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// Indices of the `k` best scores, skipping `excluded[i] == true`.
pub fn top_k_from_scores(scores: ArrayView1<f64>, k: usize, excluded: &[bool]) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..scores.len()).filter(|&i| !excluded[i]).collect();
    let cmp = by_score_then_index(scores);
    if k == 0 {
        return Vec::new();
    }
    if candidates.len() > k {
        candidates.select_nth_unstable_by(k - 1, &cmp);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(&cmp);
    candidates
}

/// Rows scaled to unit length (zero rows stay zero).
pub fn normalized_rows(e: ArrayView2<f64>) -> Array2<f64> {
    let mut out = e.to_owned();
    for mut row in out.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row /= n;
        }
    }
    out
}

/// Top-`k` items for one user under the chosen similarity.
pub fn rank_topk(
    e_infer: ArrayView2<f64>,
    n_users: usize,
    user: usize,
    k: usize,
    exclusions: &HashSet<usize>,
    similarity: Similarity,
) -> Result<Vec<usize>> {
    if user >= n_users || n_users > e_infer.nrows() {
        return Err(Error::InvalidArgument(format!("user {user} of {n_users}")));
    }
    let items = e_infer.slice(s![n_users.., ..]);
    let u = e_infer.row(user);
    let scores = match similarity {
        Similarity::InnerProduct => items.dot(&u),
        Similarity::Cosine => {
            let un = u.dot(&u).sqrt();
            let mut sc = items.dot(&u);
            for (s, row) in sc.iter_mut().zip(items.rows()) {
                let denom = un * row.dot(&row).sqrt();
                *s = if denom > 0.0 { *s / denom } else { 0.0 };
            }
            sc
        }
    };
    let mut excluded = vec![false; items.nrows()];
    for &i in exclusions {
        if i < excluded.len() {
            excluded[i] = true;
        }
    }
    Ok(top_k_from_scores(scores.view(), k, &excluded))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalTarget {
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub target: EvalTarget,
    pub epoch: Option<usize>,
    pub ks: Vec<usize>,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub users_evaluated: usize,
    pub seconds: f64,
}

impl EvalReport {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|p| self.recall[p])
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|p| self.ndcg[p])
    }

    /// Same metrics, ignoring timing and epoch.
    pub fn same_metrics(&self, other: &EvalReport) -> bool {
        self.ks == other.ks && self.recall == other.recall && self.ndcg == other.ndcg
    }
}

/// Macro-averaged Recall@K / NDCG@K over users with non-empty ground truth.
pub fn evaluate(
    e_infer: ArrayView2<f64>,
    split: &SplitDataset,
    target: EvalTarget,
    ks: &[usize],
    similarity: Similarity,
) -> Result<EvalReport> {
    let started = Instant::now();
    let (nu, ni) = (split.n_users(), split.n_items());
    if e_infer.nrows() != nu + ni {
        return Err(Error::DimensionMismatch(format!(
            "{} embedding rows for {} nodes",
            e_infer.nrows(),
            nu + ni
        )));
    }
    if ks.is_empty() {
        return Err(Error::InvalidArgument("no cutoffs given".into()));
    }
    let max_k = *ks.iter().max().expect("non-empty");

    let mut known: Vec<Vec<usize>> = vec![Vec::new(); nu];
    for &(u, i) in &split.train.pairs {
        known[u].push(i);
    }
    let truth_pairs = match target {
        EvalTarget::Validation => &split.validation,
        EvalTarget::Test => {
            for &(u, i) in &split.validation {
                known[u].push(i);
            }
            &split.test
        }
    };
    let mut truth: Vec<HashSet<usize>> = vec![HashSet::new(); nu];
    for &(u, i) in truth_pairs {
        truth[u].insert(i);
    }

    let prepared = match similarity {
        Similarity::Cosine => normalized_rows(e_infer),
        Similarity::InnerProduct => e_infer.to_owned(),
    };
    let users = prepared.slice(s![..nu, ..]);
    let items_t = prepared.slice(s![nu.., ..]).reversed_axes();

    let mut recall = vec![0.0; ks.len()];
    let mut ndcg = vec![0.0; ks.len()];
    let mut evaluated = 0usize;
    let mut excluded = vec![false; ni];

    let active: Vec<usize> = (0..nu).filter(|&u| !truth[u].is_empty()).collect();
    for chunk in active.chunks(USER_CHUNK) {
        let block = users.select(Axis(0), chunk).dot(&items_t);
        for (row, &u) in block.rows().into_iter().zip(chunk) {
            for &i in &known[u] {
                excluded[i] = true;
            }
            let top = top_k_from_scores(row, max_k, &excluded);
            for &i in &known[u] {
                excluded[i] = false;
            }
            for (slot, &k) in ks.iter().enumerate() {
                recall[slot] += recall_at_k(&top, &truth[u], k).expect("non-empty truth");
                ndcg[slot] += ndcg_at_k(&top, &truth[u], k).expect("non-empty truth");
            }
            evaluated += 1;
        }
    }
    if evaluated > 0 {
        let n = evaluated as f64;
        recall.iter_mut().for_each(|v| *v /= n);
        ndcg.iter_mut().for_each(|v| *v /= n);
    }
    Ok(EvalReport {
        target,
        epoch: None,
        ks: ks.to_vec(),
        recall,
        ndcg,
        users_evaluated: evaluated,
        seconds: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn set(items: &[usize]) -> HashSet<usize> {
        items.iter().copied().collect()
    }

    #[test]
    fn recall_examples() {
        let top: Vec<usize> = (0..20).collect();
        assert_eq!(recall_at_k(&top, &set(&[3]), 20), Some(1.0));
        assert_eq!(recall_at_k(&[7, 1], &set(&[7, 9]), 2), Some(0.5));
        assert_eq!(recall_at_k(&[0, 1, 2], &set(&[10, 11, 12, 13, 14]), 3), Some(0.0));
        assert_eq!(recall_at_k(&[0], &set(&[]), 1), None);
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&[4, 1, 2], &set(&[4]), 3), Some(1.0));
        let second = ndcg_at_k(&[1, 4], &set(&[4]), 2).unwrap();
        assert_eq!(second, 1.0 / 3f64.log2());
        assert!((second - 0.6309).abs() < 1e-4);
        assert_eq!(ndcg_at_k(&[2, 0, 1, 9], &set(&[0, 1, 2]), 4), Some(1.0));
        assert_eq!(ndcg_at_k(&[0], &set(&[]), 1), None);
    }

    #[test]
    fn top_k_orders_by_score_and_skips_exclusions() {
        let scores = array![0.9, 0.1];
        assert_eq!(top_k_from_scores(scores.view(), 1, &[false, false]), vec![0]);
        let tied = array![0.5, 0.7, 0.5, 0.5];
        assert_eq!(top_k_from_scores(tied.view(), 3, &[false; 4]), vec![1, 0, 2]);
        assert_eq!(
            top_k_from_scores(tied.view(), 3, &[false, true, false, false]),
            vec![0, 2, 3]
        );
        // fewer candidates than k
        assert_eq!(top_k_from_scores(tied.view(), 10, &[true, true, false, true]), vec![2]);
        assert!(top_k_from_scores(tied.view(), 0, &[false; 4]).is_empty());
    }

    #[test]
    fn cosine_and_inner_product_rank_differently() {
        // one user, three items; item 2 is long but less aligned
        let e = array![[1.0, 0.0], [1.0, 0.1], [0.9, -0.3], [5.0, 4.0]];
        let ex = HashSet::new();
        let ip = rank_topk(e.view(), 1, 0, 3, &ex, Similarity::InnerProduct).unwrap();
        let cos = rank_topk(e.view(), 1, 0, 3, &ex, Similarity::Cosine).unwrap();
        assert_eq!(ip, vec![2, 0, 1]);
        assert_eq!(cos, vec![0, 1, 2]);
    }
}
