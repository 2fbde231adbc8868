//! Embedding encoders.
//!
//! The naive encoder is the lookup table itself. The LightGCN encoder maps
//! the table `E0` through `Σ_k α_k Ã^k E0` with `Ã = D^{-1/2} A D^{-1/2}`;
//! training and inference may use different layer counts.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::SparseMatrix;

/// Dense `(|U| + |I|) × d` embeddings, users first.
pub type EmbeddingMatrix = Array2<f64>;

/// Xavier-normal initialisation, `N(0, 2/(n + d))`, deterministic per seed.
pub fn init_embeddings(n: usize, d: usize, seed: u64) -> Result<EmbeddingMatrix> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument(format!("embedding shape {n}x{d}")));
    }
    let std = (2.0 / (n + d) as f64).sqrt();
    let normal = Normal::new(0.0, std).map_err(|e| Error::Numeric(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Array2::from_shape_simple_fn((n, d), || normal.sample(&mut rng)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Naive,
    LightGcn,
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(EncoderKind::Naive),
            "lightgcn" => Ok(EncoderKind::LightGcn),
            other => Err(Error::Config(format!("unknown encoder {other:?}"))),
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderKind::Naive => "naive",
            EncoderKind::LightGcn => "lightgcn",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub train_layers: usize,
    pub infer_layers: usize,
    /// Explicit `α_0..α_K` for the training depth; any other depth uses
    /// uniform `1/(K+1)`.
    pub layer_weights: Option<Vec<f64>>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::naive()
    }
}

impl EncoderConfig {
    pub fn naive() -> Self {
        Self {
            kind: EncoderKind::Naive,
            train_layers: 0,
            infer_layers: 0,
            layer_weights: None,
        }
    }

    pub fn lightgcn(train_layers: usize, infer_layers: usize) -> Self {
        Self {
            kind: EncoderKind::LightGcn,
            train_layers,
            infer_layers,
            layer_weights: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == EncoderKind::Naive && (self.train_layers != 0 || self.infer_layers != 0) {
            return Err(Error::Config("the naive encoder has no layers".into()));
        }
        if let Some(w) = &self.layer_weights {
            if w.len() != self.train_layers + 1 || w.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!(
                    "layer_weights needs {} finite entries, got {w:?}",
                    self.train_layers + 1
                )));
            }
        }
        Ok(())
    }

    /// `α_0..α_K` for a `K`-layer pass.
    pub fn weights(&self, layers: usize) -> Vec<f64> {
        match &self.layer_weights {
            Some(w) if w.len() == layers + 1 => w.clone(),
            _ => vec![1.0 / (layers + 1) as f64; layers + 1],
        }
    }
}

/// `Σ_{k=0..K} α_k Ã^k E0`, propagating `E^{(k+1)} = Ã E^{(k)}`.
pub fn lightgcn_forward(
    e0: ArrayView2<f64>,
    norm_adj: &SparseMatrix,
    layers: usize,
    alpha: &[f64],
) -> Result<EmbeddingMatrix> {
    if alpha.len() != layers + 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} layer weights for {layers} layers",
            alpha.len()
        )));
    }
    let mut out = &e0 * alpha[0];
    if layers == 0 {
        return Ok(out);
    }
    let mut current = norm_adj.spmm(e0)?;
    for (k, &a) in alpha.iter().enumerate().skip(1) {
        out.scaled_add(a, &current);
        if k < layers {
            current = norm_adj.spmm(current.view())?;
        }
    }
    Ok(out)
}

/// Embeddings used for ranking: the learned table pushed through
/// `infer_layers` propagation steps (naive encoders pass through).
pub fn inference_embeddings(
    learned: ArrayView2<f64>,
    config: &EncoderConfig,
    norm_adj: Option<&SparseMatrix>,
) -> Result<EmbeddingMatrix> {
    match config.kind {
        EncoderKind::Naive => Ok(learned.to_owned()),
        EncoderKind::LightGcn => {
            if config.infer_layers == 0 {
                return Ok(learned.to_owned());
            }
            let adj = norm_adj.ok_or_else(|| Error::InvalidArgument("lightgcn inference needs Ã".into()))?;
            lightgcn_forward(learned, adj, config.infer_layers, &config.weights(config.infer_layers))
        }
    }
}

/// Training-time encoder. Because the propagation polynomial is linear and
/// `Ã` is symmetric, the backward pass applies the same polynomial to the
/// output gradient.
#[derive(Debug, Clone)]
pub struct Encoder {
    config: EncoderConfig,
    norm_adj: Option<SparseMatrix>,
}

impl Encoder {
    pub fn new(config: EncoderConfig, norm_adj: Option<SparseMatrix>) -> Result<Self> {
        config.validate()?;
        if config.kind == EncoderKind::LightGcn && norm_adj.is_none() {
            return Err(Error::InvalidArgument("lightgcn encoder needs Ã".into()));
        }
        Ok(Self { config, norm_adj })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn norm_adj(&self) -> Option<&SparseMatrix> {
        self.norm_adj.as_ref()
    }

    fn propagates(&self) -> bool {
        self.config.kind == EncoderKind::LightGcn && self.config.train_layers > 0
    }

    /// `None` when the encoder is the identity, so callers can skip a copy.
    pub fn forward(&self, table: ArrayView2<f64>) -> Result<Option<EmbeddingMatrix>> {
        if !self.propagates() {
            return Ok(None);
        }
        let k = self.config.train_layers;
        let adj = self.norm_adj.as_ref().expect("checked in new");
        lightgcn_forward(table, adj, k, &self.config.weights(k)).map(Some)
    }

    pub fn backward(&self, grad_out: Array2<f64>) -> Result<Array2<f64>> {
        if !self.propagates() {
            return Ok(grad_out);
        }
        let k = self.config.train_layers;
        let adj = self.norm_adj.as_ref().expect("checked in new");
        lightgcn_forward(grad_out.view(), adj, k, &self.config.weights(k))
    }

    pub fn inference(&self, table: ArrayView2<f64>) -> Result<EmbeddingMatrix> {
        inference_embeddings(table, &self.config, self.norm_adj.as_ref())
    }
}
