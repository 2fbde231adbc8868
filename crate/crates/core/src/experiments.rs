//! Ablation grids and the train-then-test runner they share.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::data::SplitDataset;
use crate::encoder::{EncoderConfig, EncoderKind};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, EvalTarget};
use crate::losses::{LossKind, Similarity};
use crate::train::{build_encoder, train_with, EpochRecord, TrainOutcome};

/// Temperatures swept by [`Ablation::Temperature`].
pub const TEMPERATURE_GRID: [f64; 8] = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.5, 1.0];

/// `(training layers, inference layers)` pairs of the layer grid.
pub const LAYER_GRID: [(usize, usize); 7] = [(0, 0), (1, 1), (2, 2), (3, 3), (3, 0), (3, 1), (3, 2)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Training × inference similarity, cosine or inner product.
    Similarity,
    /// SCCF with and without the squared-cosine kernel.
    SquaredTerm,
    Temperature,
    /// DirectAU with LightGCN at several training/inference depths.
    Layers,
    /// SCCF on the naive table vs LightGCN with 1 to 3 layers.
    Encoders,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::Similarity,
        Ablation::SquaredTerm,
        Ablation::Temperature,
        Ablation::Layers,
        Ablation::Encoders,
    ];
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "similarity" => Ablation::Similarity,
            "squared_term" | "squared-term" => Ablation::SquaredTerm,
            "temperature" | "tau" => Ablation::Temperature,
            "layers" => Ablation::Layers,
            "encoders" => Ablation::Encoders,
            other => return Err(Error::Config(format!("unknown ablation {other:?}"))),
        })
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::Similarity => "similarity",
            Ablation::SquaredTerm => "squared_term",
            Ablation::Temperature => "temperature",
            Ablation::Layers => "layers",
            Ablation::Encoders => "encoders",
        })
    }
}

/// One arm of an ablation: a label and the config it trains.
#[derive(Debug, Clone)]
pub struct Arm {
    pub label: String,
    pub config: ExperimentConfig,
}

fn arm(label: impl Into<String>, base: &ExperimentConfig, edit: impl FnOnce(&mut ExperimentConfig)) -> Arm {
    let mut config = base.clone();
    edit(&mut config);
    Arm {
        label: label.into(),
        config,
    }
}

fn encoder_for(train_layers: usize, infer_layers: usize) -> EncoderConfig {
    if train_layers == 0 && infer_layers == 0 {
        EncoderConfig::naive()
    } else {
        EncoderConfig::lightgcn(train_layers, infer_layers)
    }
}

/// Expands an ablation into arms derived from `base`.
pub fn recipe(ablation: Ablation, base: &ExperimentConfig) -> Vec<Arm> {
    use Similarity::{Cosine, InnerProduct};
    match ablation {
        Ablation::Similarity => [
            (Cosine, InnerProduct),
            (Cosine, Cosine),
            (InnerProduct, InnerProduct),
            (InnerProduct, Cosine),
        ]
        .into_iter()
        .map(|(t, i)| {
            arm(format!("train={t},infer={i}"), base, |c| {
                c.loss = LossKind::Sccf;
                c.train_similarity = t;
                c.infer_similarity = i;
            })
        })
        .collect(),
        Ablation::SquaredTerm => [true, false]
            .into_iter()
            .map(|on| {
                arm(format!("squared_term={on}"), base, |c| {
                    c.loss = LossKind::Sccf;
                    c.squared_term = on;
                })
            })
            .collect(),
        Ablation::Temperature => TEMPERATURE_GRID
            .into_iter()
            .map(|tau| {
                arm(format!("tau={tau}"), base, |c| {
                    c.loss = LossKind::Sccf;
                    c.tau = tau;
                })
            })
            .collect(),
        Ablation::Layers => LAYER_GRID
            .into_iter()
            .map(|(t, i)| {
                arm(format!("train_layers={t},infer_layers={i}"), base, |c| {
                    c.loss = LossKind::DirectAu;
                    c.encoder = encoder_for(t, i);
                })
            })
            .collect(),
        Ablation::Encoders => (0..=3)
            .map(|k| {
                let label = if k == 0 {
                    "naive".to_string()
                } else {
                    format!("lightgcn-{k}")
                };
                arm(label, base, |c| {
                    c.loss = LossKind::Sccf;
                    c.encoder = encoder_for(k, k);
                })
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub label: String,
    pub loss: LossKind,
    pub encoder: EncoderKind,
    pub learning_rate: f64,
    pub best_epoch: Option<usize>,
    pub validation: Option<EvalReport>,
    pub test: EvalReport,
}

/// Trains `config`, then scores the selected epoch on the test split.
pub fn train_and_test(
    label: &str,
    config: &ExperimentConfig,
    split: &SplitDataset,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<(TrainOutcome, RunReport)> {
    let outcome = train_with(config, split, on_epoch)?;
    let encoder = build_encoder(config, split)?;
    let inferred = encoder.inference(outcome.embeddings.view())?;
    let mut test = evaluate(
        inferred.view(),
        split,
        EvalTarget::Test,
        &config.eval_ks,
        config.infer_similarity,
    )?;
    test.epoch = outcome.best_epoch;
    let report = RunReport {
        label: label.to_string(),
        loss: config.loss,
        encoder: config.encoder.kind,
        learning_rate: config.learning_rate,
        best_epoch: outcome.best_epoch,
        validation: outcome.best_validation.clone(),
        test,
    };
    Ok((outcome, report))
}
