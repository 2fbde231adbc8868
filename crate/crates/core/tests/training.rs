mod common;

use std::collections::HashSet;

use common::{gaussian, permutations, random_dataset, reference_metrics, rng, tiny};
use ndarray::Array2;

use sccf::checkpoint;
use sccf::data::split_per_user;
use sccf::encoder::{EncoderConfig, EncoderKind};
use sccf::eval::{evaluate, EvalTarget};
use sccf::experiments::train_and_test;
use sccf::losses::{sccf_loss, Batch, LossKind, SccfParams, Similarity};
use sccf::spectral::equilibrium_residual;
use sccf::train::{train, tune_learning_rate, LEARNING_RATE_GRID};
use sccf::{ExperimentConfig, InteractionDataset, SplitDataset, SplitRatios};

fn small_split(seed: u64) -> SplitDataset {
    let ds = random_dataset(30, 40, 0.35, &mut rng(seed));
    split_per_user(&ds, SplitRatios::default(), seed).unwrap()
}

fn quick_config() -> ExperimentConfig {
    ExperimentConfig {
        epochs: 4,
        batch_size: 32,
        embedding_dim: 8,
        learning_rate: 0.3,
        eval_ks: vec![5, 20],
        ..Default::default()
    }
}

#[test]
fn joint_training_reaches_equilibrium_on_tiny_dataset() {
    let split = split_per_user(&tiny(), SplitRatios::default(), 0).unwrap();
    assert_eq!(split.train.n_interactions(), 3);
    let cfg = ExperimentConfig {
        loss: LossKind::Joint,
        embedding_dim: 4,
        learning_rate: 0.1,
        epochs: 20_000,
        ..Default::default()
    };
    let out = train(&cfg, &split).unwrap();
    let residual = equilibrium_residual(out.embeddings.view(), &split.train).unwrap();
    assert!(residual < 1e-3, "residual {residual}");
}

#[test]
fn full_batch_sccf_loss_decreases_monotonically() {
    let ds = tiny();
    let batch = Batch::new(ds.n_users, ds.pairs.clone()).unwrap();
    let params = SccfParams::default();
    let run = |lr: f64| -> Vec<f64> {
        let mut e = sccf::encoder::init_embeddings(ds.n_nodes(), 8, 2024).unwrap();
        (0..500)
            .map(|_| {
                let out = sccf_loss(e.view(), &batch, &params).unwrap();
                e.scaled_add(-lr, &out.grad);
                out.value
            })
            .collect()
    };
    let validated = LEARNING_RATE_GRID.iter().rev().find_map(|&lr| {
        let history = run(lr);
        let monotone = history[10..].windows(2).all(|w| w[1] <= w[0] + 1e-12);
        (monotone && history[499] < history[0]).then_some((lr, history))
    });
    let (lr, history) = validated.expect("some grid rate gives monotone descent");
    assert!(
        history[499] < history[10],
        "lr {lr}: {} -> {}",
        history[10],
        history[499]
    );
}

#[test]
fn identical_seeds_give_identical_runs() {
    let split = small_split(1);
    let cfg = quick_config();
    let a = train(&cfg, &split).unwrap();
    let b = train(&cfg, &split).unwrap();
    assert_eq!(a.embeddings, b.embeddings);
    assert_eq!(a.history.len(), b.history.len());
    for (x, y) in a.history.iter().zip(&b.history) {
        assert_eq!(x.mean_loss.to_bits(), y.mean_loss.to_bits());
        assert!(x
            .validation
            .as_ref()
            .unwrap()
            .same_metrics(y.validation.as_ref().unwrap()));
    }
    let other = train(&ExperimentConfig { seed: 7, ..cfg }, &split).unwrap();
    assert_ne!(other.embeddings, a.embeddings);
}

#[test]
fn every_loss_and_encoder_trains() {
    let split = small_split(2);
    for loss in [
        LossKind::Sccf,
        LossKind::Ssm,
        LossKind::Joint,
        LossKind::Bpr,
        LossKind::DirectAu,
    ] {
        for encoder in [EncoderConfig::naive(), EncoderConfig::lightgcn(2, 1)] {
            let cfg = ExperimentConfig {
                loss,
                encoder: encoder.clone(),
                learning_rate: 0.1,
                ..quick_config()
            };
            let out = train(&cfg, &split).unwrap_or_else(|e| panic!("{loss} {encoder:?}: {e}"));
            assert_eq!(out.history.len(), cfg.epochs);
            assert!(out.history.iter().all(|h| h.mean_loss.is_finite()));
            assert!(out.best_epoch.is_some());
        }
    }
}

#[test]
fn best_epoch_has_highest_validation_recall() {
    let split = small_split(3);
    let cfg = ExperimentConfig {
        epochs: 8,
        ..quick_config()
    };
    let out = train(&cfg, &split).unwrap();
    let best = out.best_validation.as_ref().unwrap().recall_at(20).unwrap();
    for h in &out.history {
        assert!(h.validation.as_ref().unwrap().recall_at(20).unwrap() <= best);
    }
    let first_best = out
        .history
        .iter()
        .find(|h| h.validation.as_ref().unwrap().recall_at(20).unwrap() == best)
        .unwrap();
    assert_eq!(out.best_epoch, Some(first_best.epoch));
}

#[test]
fn checkpoint_reload_reproduces_test_metrics() {
    let split = small_split(4);
    let cfg = ExperimentConfig {
        encoder: EncoderConfig::lightgcn(1, 2),
        ..quick_config()
    };
    let (outcome, report) = train_and_test("t", &cfg, &split, |_| {}).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.bin");
    checkpoint::save(&path, outcome.embeddings.view()).unwrap();
    let table = checkpoint::load(&path).unwrap();
    assert_eq!(table, outcome.embeddings);
    let encoder = sccf::train::build_encoder(&cfg, &split).unwrap();
    assert_eq!(encoder.config().kind, EncoderKind::LightGcn);
    let inferred = encoder.inference(table.view()).unwrap();
    let again = evaluate(
        inferred.view(),
        &split,
        EvalTarget::Test,
        &cfg.eval_ks,
        cfg.infer_similarity,
    )
    .unwrap();
    assert!(again.same_metrics(&report.test));
}

#[test]
fn learning_rate_tuner_covers_grid() {
    let split = small_split(5);
    let cfg = ExperimentConfig {
        epochs: 2,
        ..quick_config()
    };
    let (best, points) = tune_learning_rate(&cfg, &split, &LEARNING_RATE_GRID).unwrap();
    assert_eq!(points.len(), 4);
    assert!(LEARNING_RATE_GRID.contains(&best));
    let top = points
        .iter()
        .map(|p| p.validation_recall)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(
        points
            .iter()
            .find(|p| p.learning_rate == best)
            .unwrap()
            .validation_recall,
        top
    );
}

/// Three users, six items, hand-built split.
fn chance_split() -> SplitDataset {
    let train = InteractionDataset::from_pairs(3, 6, [(0, 0), (1, 1), (1, 2), (2, 5)]).unwrap();
    SplitDataset {
        train,
        validation: vec![(0, 1), (2, 4)],
        test: vec![(0, 2), (0, 3), (1, 0), (2, 0), (2, 1)],
        split_seed: 0,
    }
}

#[test]
fn perfect_embeddings_score_one() {
    let split = chance_split();
    let mut e = Array2::zeros((9, 6));
    for i in 0..6 {
        e[[3 + i, i]] = 1.0;
    }
    for &(u, i) in &split.test {
        e[[u, i]] = 1.0;
    }
    let r = evaluate(e.view(), &split, EvalTarget::Test, &[3, 5], Similarity::InnerProduct).unwrap();
    assert_eq!(r.recall, vec![1.0, 1.0]);
    assert_eq!(r.ndcg, vec![1.0, 1.0]);
    assert_eq!(r.users_evaluated, 3);
}

#[test]
fn random_embeddings_score_at_chance_level() {
    let split = chance_split();
    let ks = [1, 2, 3];
    let mut known: Vec<HashSet<usize>> = vec![HashSet::new(); 3];
    for &(u, i) in split.train.pairs.iter().chain(&split.validation) {
        known[u].insert(i);
    }
    // Exact expectation over every ranking of each user's candidates.
    let mut exact_recall = [0.0; 3];
    let mut exact_ndcg = [0.0; 3];
    for (u, known) in known.iter().enumerate() {
        let candidates: Vec<usize> = (0..6).filter(|i| !known.contains(i)).collect();
        let truth: Vec<usize> = split.test.iter().filter(|p| p.0 == u).map(|p| p.1).collect();
        let perms = permutations(&candidates);
        for (slot, &k) in ks.iter().enumerate() {
            let (r, n) = perms.iter().fold((0.0, 0.0), |(r, n), p| {
                let (a, b) = reference_metrics(p, &truth, k);
                (r + a, n + b)
            });
            exact_recall[slot] += r / perms.len() as f64 / 3.0;
            exact_ndcg[slot] += n / perms.len() as f64 / 3.0;
        }
    }

    let draws = 4000;
    let mut mean_recall = [0.0; 3];
    let mut mean_ndcg = [0.0; 3];
    let mut r = rng(77);
    for _ in 0..draws {
        let e = gaussian(9, 4, 1.0, &mut r);
        let rep = evaluate(e.view(), &split, EvalTarget::Test, &ks, Similarity::InnerProduct).unwrap();
        for s in 0..3 {
            mean_recall[s] += rep.recall[s] / draws as f64;
            mean_ndcg[s] += rep.ndcg[s] / draws as f64;
        }
    }
    for s in 0..3 {
        assert!(
            (mean_recall[s] - exact_recall[s]).abs() < 0.03,
            "recall@{}: {} vs {}",
            ks[s],
            mean_recall[s],
            exact_recall[s]
        );
        assert!(
            (mean_ndcg[s] - exact_ndcg[s]).abs() < 0.03,
            "ndcg@{}: {} vs {}",
            ks[s],
            mean_ndcg[s],
            exact_ndcg[s]
        );
    }
}

#[test]
fn evaluation_matches_reference_ranking() {
    let split = small_split(6);
    let e = gaussian(split.n_users() + split.n_items(), 5, 1.0, &mut rng(6));
    let ks = [1, 5, 10];
    let report = evaluate(e.view(), &split, EvalTarget::Validation, &ks, Similarity::InnerProduct).unwrap();

    let nu = split.n_users();
    let mut recall = [0.0; 3];
    let mut ndcg = [0.0; 3];
    let mut users = 0;
    for u in 0..nu {
        let truth: Vec<usize> = split.validation.iter().filter(|p| p.0 == u).map(|p| p.1).collect();
        if truth.is_empty() {
            continue;
        }
        users += 1;
        let seen: HashSet<usize> = split.train.pairs.iter().filter(|p| p.0 == u).map(|p| p.1).collect();
        let mut ranked: Vec<usize> = (0..split.n_items()).filter(|i| !seen.contains(i)).collect();
        let score = |i: usize| e.row(u).dot(&e.row(nu + i));
        ranked.sort_by(|&a, &b| score(b).partial_cmp(&score(a)).unwrap().then(a.cmp(&b)));
        for (s, &k) in ks.iter().enumerate() {
            let (r, n) = reference_metrics(&ranked, &truth, k);
            recall[s] += r;
            ndcg[s] += n;
        }
    }
    assert_eq!(report.users_evaluated, users);
    for s in 0..3 {
        assert!((report.recall[s] - recall[s] / users as f64).abs() < 1e-12);
        assert!((report.ndcg[s] - ndcg[s] / users as f64).abs() < 1e-12);
    }
}
