//! Mini-batch SGD training with validation-based model selection.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::data::{InteractionDataset, SplitDataset};
use crate::encoder::{init_embeddings, EmbeddingMatrix, Encoder};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, EvalTarget};
use crate::graph::BipartiteGraph;
use crate::losses::{
    bpr_loss, directau_loss, joint_contrastive_loss, sccf_loss, ssm_loss, Batch, LossKind, LossValueAndGrad,
    NegativeSampler,
};

/// Validation cutoff used to pick the best epoch.
pub const SELECTION_K: usize = 20;

/// Learning rates tried by [`tune_learning_rate`].
pub const LEARNING_RATE_GRID: [f64; 4] = [0.1, 0.3, 1.0, 3.0];

/// `m` interactions drawn uniformly with replacement.
pub fn sample_batch<R: Rng + ?Sized>(train: &InteractionDataset, m: usize, rng: &mut R) -> Result<Batch> {
    if train.is_empty() {
        return Err(Error::EmptyDataset("cannot sample from an empty training set".into()));
    }
    let n = train.n_interactions();
    let pairs = (0..m).map(|_| train.pairs[rng.random_range(0..n)]).collect();
    Batch::new(train.n_users, pairs)
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub batches: usize,
    pub seconds: f64,
    pub validation: Option<EvalReport>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Learned table (before inference propagation) of the selected epoch.
    pub embeddings: EmbeddingMatrix,
    /// `None` when no epoch ran or no validation data exists.
    pub best_epoch: Option<usize>,
    pub best_validation: Option<EvalReport>,
    pub history: Vec<EpochRecord>,
}

/// Builds the encoder a config asks for.
pub fn build_encoder(config: &ExperimentConfig, split: &SplitDataset) -> Result<Encoder> {
    let norm_adj = if config.is_lightgcn() {
        Some(BipartiteGraph::build(&split.train)?.normalized_adjacency())
    } else {
        None
    };
    Encoder::new(config.encoder.clone(), norm_adj)
}

pub fn train(config: &ExperimentConfig, split: &SplitDataset) -> Result<TrainOutcome> {
    train_with(config, split, |_| {})
}

/// Trains and calls `on_epoch` after every epoch.
pub fn train_with(
    config: &ExperimentConfig,
    split: &SplitDataset,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    let train = &split.train;
    if train.is_empty() {
        return Err(Error::EmptyDataset("training split".into()));
    }
    let encoder = build_encoder(config, split)?;
    let mut table = init_embeddings(train.n_nodes(), config.embedding_dim, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let sampler = (config.loss == LossKind::Bpr).then(|| NegativeSampler::new(train));
    let sccf = config.sccf_params();

    let mut eval_ks = config.eval_ks.clone();
    if !eval_ks.contains(&SELECTION_K) {
        eval_ks.push(SELECTION_K);
    }
    let batches_per_epoch = match config.loss {
        LossKind::Joint => 1,
        _ => train.n_interactions().div_ceil(config.batch_size),
    };

    let mut best = table.clone();
    let mut best_epoch = None;
    let mut best_validation: Option<EvalReport> = None;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let mut loss_sum = 0.0;
        for b in 0..batches_per_epoch {
            let encoded = encoder.forward(table.view())?;
            let view = encoded.as_ref().map_or(table.view(), |e| e.view());
            let out: LossValueAndGrad = match config.loss {
                LossKind::Joint => joint_contrastive_loss(view, train)?,
                LossKind::Sccf => sccf_loss(view, &sample_batch(train, config.batch_size, &mut rng)?, &sccf)?,
                LossKind::Ssm => ssm_loss(view, &sample_batch(train, config.batch_size, &mut rng)?)?,
                LossKind::DirectAu => {
                    directau_loss(view, &sample_batch(train, config.batch_size, &mut rng)?, config.beta)?
                }
                LossKind::Bpr => {
                    let batch = sample_batch(train, config.batch_size, &mut rng)?;
                    let triplets = sampler
                        .as_ref()
                        .expect("sampler built for bpr")
                        .triplets(&batch.pairs, &mut rng)?;
                    bpr_loss(view, train.n_users, &triplets)?
                }
            };
            if !out.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    value: out.value,
                });
            }
            loss_sum += out.value;
            let grad = encoder.backward(out.grad)?;
            table.scaled_add(-config.learning_rate, &grad);
        }

        let validation = if split.validation.is_empty() {
            None
        } else {
            let inferred = encoder.inference(table.view())?;
            let mut report = evaluate(
                inferred.view(),
                split,
                EvalTarget::Validation,
                &eval_ks,
                config.infer_similarity,
            )?;
            report.epoch = Some(epoch);
            Some(report)
        };

        let record = EpochRecord {
            epoch,
            mean_loss: loss_sum / batches_per_epoch as f64,
            batches: batches_per_epoch,
            seconds: started.elapsed().as_secs_f64(),
            validation,
        };
        match &record.validation {
            Some(v) => {
                let score = v.recall_at(SELECTION_K).expect("selection cutoff evaluated");
                let improved = best_validation
                    .as_ref()
                    .is_none_or(|b| score > b.recall_at(SELECTION_K).expect("evaluated"));
                if improved {
                    best.assign(&table);
                    best_epoch = Some(epoch);
                    best_validation = Some(v.clone());
                }
            }
            None => {
                best.assign(&table);
                best_epoch = Some(epoch);
            }
        }
        on_epoch(&record);
        history.push(record);
    }

    Ok(TrainOutcome {
        embeddings: best,
        best_epoch,
        best_validation,
        history,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GridPoint {
    pub learning_rate: f64,
    pub best_epoch: Option<usize>,
    pub validation_recall: f64,
}

/// Trains once per grid value and returns the rate with the best
/// validation Recall@20 (first one wins ties).
pub fn tune_learning_rate(
    config: &ExperimentConfig,
    split: &SplitDataset,
    grid: &[f64],
) -> Result<(f64, Vec<GridPoint>)> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty learning-rate grid".into()));
    }
    let mut points = Vec::with_capacity(grid.len());
    for &lr in grid {
        let mut cfg = config.clone();
        cfg.learning_rate = lr;
        let outcome = match train(&cfg, split) {
            Ok(o) => o,
            Err(Error::NonFiniteLoss { .. }) => {
                points.push(GridPoint {
                    learning_rate: lr,
                    best_epoch: None,
                    validation_recall: f64::NEG_INFINITY,
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let recall = outcome
            .best_validation
            .as_ref()
            .and_then(|v| v.recall_at(SELECTION_K))
            .unwrap_or(f64::NEG_INFINITY);
        points.push(GridPoint {
            learning_rate: lr,
            best_epoch: outcome.best_epoch,
            validation_recall: recall,
        });
    }
    let best = points
        .iter()
        .fold(None::<&GridPoint>, |acc, p| match acc {
            Some(b) if b.validation_recall >= p.validation_recall => Some(b),
            _ => Some(p),
        })
        .expect("non-empty grid");
    Ok((best.learning_rate, points))
}
