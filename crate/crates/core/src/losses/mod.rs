//! Training objectives with hand-derived gradients.
//!
//! Every loss takes the full embedding matrix `E` (users in rows
//! `0..n_users`, items after) and returns its value together with a gradient
//! of the same shape; rows the loss does not touch stay zero.

mod bpr;
mod directau;
mod joint;
mod sccf;
mod ssm;

pub use bpr::{bpr_loss, NegativeSampler};
pub use directau::directau_loss;
pub use joint::{joint_contrastive_loss, joint_contrastive_terms, JOINT_PAIR_LIMIT};
pub use sccf::{sccf_loss, sccf_similarity, SccfParams};
pub use ssm::ssm_loss;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to embedding norms before dividing.
pub const NORM_EPS: f64 = 1e-12;

/// `m` interactions drawn from the training set. The implicit negatives
/// are all `m × m` user–item crossings of the batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub n_users: usize,
    pub pairs: Vec<(usize, usize)>,
}

impl Batch {
    pub fn new(n_users: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        Ok(Self { n_users, pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Embedding row of the `k`-th user.
    pub fn user_row(&self, k: usize) -> usize {
        self.pairs[k].0
    }

    /// Embedding row of the `k`-th item.
    pub fn item_row(&self, k: usize) -> usize {
        self.n_users + self.pairs[k].1
    }

    fn check_rows(&self, n_rows: usize) -> Result<()> {
        let top = self
            .pairs
            .iter()
            .map(|&(u, i)| u.max(self.n_users + i))
            .max()
            .unwrap_or(0);
        if top >= n_rows || self.pairs.iter().any(|&(u, _)| u >= self.n_users) {
            return Err(Error::DimensionMismatch(format!(
                "batch references row {top} of a {n_rows}-row embedding"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LossValueAndGrad {
    pub value: f64,
    pub grad: Array2<f64>,
}

impl LossValueAndGrad {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.grad.iter().all(|v| v.is_finite())
    }
}

/// Similarity used to score a user–item pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    Cosine,
    InnerProduct,
}

impl FromStr for Similarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" | "cos" => Ok(Similarity::Cosine),
            "inner_product" | "ip" | "dot" => Ok(Similarity::InnerProduct),
            other => Err(Error::Config(format!("unknown similarity {other:?}"))),
        }
    }
}

impl fmt::Display for Similarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Similarity::Cosine => "cosine",
            Similarity::InnerProduct => "inner_product",
        })
    }
}

/// Loss names accepted in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Sccf,
    Ssm,
    Joint,
    Bpr,
    DirectAu,
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sccf" => Ok(LossKind::Sccf),
            "ssm" => Ok(LossKind::Ssm),
            "joint" => Ok(LossKind::Joint),
            "bpr" => Ok(LossKind::Bpr),
            "directau" => Ok(LossKind::DirectAu),
            other => Err(Error::Config(format!("unknown loss {other:?}"))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Sccf => "sccf",
            LossKind::Ssm => "ssm",
            LossKind::Joint => "joint",
            LossKind::Bpr => "bpr",
            LossKind::DirectAu => "directau",
        })
    }
}

/// `e / max(‖e‖, ε)` together with the raw norm.
pub(crate) fn normalize(e: ArrayView1<f64>) -> (Array1<f64>, f64) {
    let norm = e.dot(&e).sqrt();
    (&e / norm.max(NORM_EPS), norm)
}

/// Pulls a gradient w.r.t. the normalised vector back to the raw vector:
/// `(g - (g·ê)ê) / ‖e‖`, or `g / ε` inside the clamped region.
pub(crate) fn normalize_backward(g: ArrayView1<f64>, unit: ArrayView1<f64>, norm: f64, mut out: ArrayViewMut1<f64>) {
    if norm <= NORM_EPS {
        out.scaled_add(1.0 / NORM_EPS, &g);
        return;
    }
    let radial = g.dot(&unit);
    out.scaled_add(1.0 / norm, &g);
    out.scaled_add(-radial / norm, &unit);
}
