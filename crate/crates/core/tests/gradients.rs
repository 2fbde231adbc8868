//! Analytic loss gradients against central finite differences.

mod common;

use common::{gaussian, gradient_error, random_dataset, rng};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use sccf::losses::{
    bpr_loss, directau_loss, joint_contrastive_loss, sccf_loss, ssm_loss, Batch, SccfParams, Similarity,
};

const INSTANCES: u64 = 24;
const STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
const FLOOR: f64 = 1e-6;

struct Instance {
    n_users: usize,
    n_items: usize,
    e: Array2<f64>,
    batch: Batch,
}

fn instance(seed: u64) -> (Instance, ChaCha8Rng) {
    let mut r = rng(seed);
    let n_users = r.random_range(2..6);
    let n_items = r.random_range(2..6);
    let d = r.random_range(2..5);
    let e = gaussian(n_users + n_items, d, 0.7, &mut r);
    let m = r.random_range(1..7);
    let pairs = (0..m)
        .map(|_| (r.random_range(0..n_users), r.random_range(0..n_items)))
        .collect();
    let batch = Batch::new(n_users, pairs).unwrap();
    (
        Instance {
            n_users,
            n_items,
            e,
            batch,
        },
        r,
    )
}

#[test]
fn ssm_gradient_matches_finite_differences() {
    for seed in 0..INSTANCES {
        let (inst, _) = instance(seed);
        let out = ssm_loss(inst.e.view(), &inst.batch).unwrap();
        let err = gradient_error(&inst.e, &out.grad, STEP, FLOOR, |x| {
            ssm_loss(x.view(), &inst.batch).unwrap().value
        });
        assert!(err <= REL_TOL, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn joint_gradient_matches_finite_differences() {
    for seed in 0..INSTANCES {
        let (inst, mut r) = instance(seed);
        let ds = random_dataset(inst.n_users, inst.n_items, 0.5, &mut r);
        let out = joint_contrastive_loss(inst.e.view(), &ds).unwrap();
        let err = gradient_error(&inst.e, &out.grad, STEP, FLOOR, |x| {
            joint_contrastive_loss(x.view(), &ds).unwrap().value
        });
        assert!(err <= REL_TOL, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn bpr_gradient_matches_finite_differences() {
    for seed in 0..INSTANCES {
        let (inst, mut r) = instance(seed);
        let triplets: Vec<(usize, usize, usize)> = inst
            .batch
            .pairs
            .iter()
            .map(|&(u, i)| (u, i, r.random_range(0..inst.n_items)))
            .collect();
        let out = bpr_loss(inst.e.view(), inst.n_users, &triplets).unwrap();
        let err = gradient_error(&inst.e, &out.grad, STEP, FLOOR, |x| {
            bpr_loss(x.view(), inst.n_users, &triplets).unwrap().value
        });
        assert!(err <= REL_TOL, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn directau_gradient_matches_finite_differences() {
    for seed in 0..INSTANCES {
        let (inst, mut r) = instance(seed);
        let beta = r.random_range(0.0..2.0);
        let out = directau_loss(inst.e.view(), &inst.batch, beta).unwrap();
        let err = gradient_error(&inst.e, &out.grad, STEP, FLOOR, |x| {
            directau_loss(x.view(), &inst.batch, beta).unwrap().value
        });
        assert!(err <= REL_TOL, "seed {seed}: beta {beta}: relative error {err:e}");
    }
}

#[test]
fn sccf_gradient_matches_finite_differences() {
    let taus = [0.1, 0.25, 0.5, 1.0];
    for seed in 0..INSTANCES {
        let (inst, _) = instance(seed);
        for squared_term in [true, false] {
            for similarity in [Similarity::Cosine, Similarity::InnerProduct] {
                let params = SccfParams {
                    tau: taus[seed as usize % taus.len()],
                    squared_term,
                    similarity,
                };
                let out = sccf_loss(inst.e.view(), &inst.batch, &params).unwrap();
                let err = gradient_error(&inst.e, &out.grad, STEP, FLOOR, |x| {
                    sccf_loss(x.view(), &inst.batch, &params).unwrap().value
                });
                assert!(err <= REL_TOL, "seed {seed}: {params:?}: relative error {err:e}");
            }
        }
    }
}

#[test]
fn untouched_rows_have_zero_gradient() {
    let (inst, _) = instance(3);
    let touched: std::collections::HashSet<usize> = (0..inst.batch.len())
        .flat_map(|k| [inst.batch.user_row(k), inst.batch.item_row(k)])
        .collect();
    let grads = [
        ssm_loss(inst.e.view(), &inst.batch).unwrap().grad,
        directau_loss(inst.e.view(), &inst.batch, 1.0).unwrap().grad,
        sccf_loss(inst.e.view(), &inst.batch, &SccfParams::default())
            .unwrap()
            .grad,
    ];
    for g in grads {
        for r in (0..g.nrows()).filter(|r| !touched.contains(r)) {
            assert!(g.row(r).iter().all(|&v| v == 0.0));
        }
    }
}
