//! Reference implementations used as oracles by the integration tests.
//! Nothing here calls into the library's numerical code.

#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sccf::InteractionDataset;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || scale * rng.sample::<f64, _>(StandardNormal))
}

/// Random interactions with every user having at least one item.
pub fn random_dataset(n_users: usize, n_items: usize, density: f64, rng: &mut ChaCha8Rng) -> InteractionDataset {
    let mut pairs = Vec::new();
    for u in 0..n_users {
        let mut any = false;
        for i in 0..n_items {
            if rng.random::<f64>() < density {
                pairs.push((u, i));
                any = true;
            }
        }
        if !any {
            pairs.push((u, rng.random_range(0..n_items)));
        }
    }
    InteractionDataset::from_pairs(n_users, n_items, pairs).unwrap()
}

pub fn tiny() -> InteractionDataset {
    InteractionDataset::from_pairs(2, 2, [(0, 0), (0, 1), (1, 1)]).unwrap()
}

/// Dense symmetric adjacency, users first.
pub fn dense_adjacency(ds: &InteractionDataset) -> Array2<f64> {
    let n = ds.n_users + ds.n_items;
    let mut a = Array2::zeros((n, n));
    for &(u, i) in &ds.pairs {
        a[[u, ds.n_users + i]] = 1.0;
        a[[ds.n_users + i, u]] = 1.0;
    }
    a
}

pub fn dense_laplacian(a: &Array2<f64>) -> Array2<f64> {
    let mut l = -a.clone();
    for r in 0..a.nrows() {
        l[[r, r]] += a.row(r).sum();
    }
    l
}

/// `½ Σ_ij w_ij (x_i - x_j)² / Σ x_i²`, computed edge by edge.
pub fn pairwise_smoothness(x: &Array1<f64>, w: &Array2<f64>) -> f64 {
    let n = x.len();
    let mut num = 0.0;
    for i in 0..n {
        for j in 0..n {
            num += 0.5 * w[[i, j]] * (x[i] - x[j]).powi(2);
        }
    }
    num / x.dot(x)
}

/// Eigenvalues of the path graph on `n` nodes: `2 - 2cos(kπ/n)`.
pub fn path_spectrum(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / n as f64).cos())
        .collect()
}

/// `Σ_k α_k M^k X` by explicit dense powers.
pub fn dense_polynomial(m: &Array2<f64>, alpha: &[f64], x: &Array2<f64>) -> Array2<f64> {
    let n = m.nrows();
    let mut power = Array2::<f64>::eye(n);
    let mut acc = Array2::<f64>::zeros((n, n));
    for &a in alpha {
        acc = acc + &power * a;
        power = power.dot(m);
    }
    acc.dot(x)
}

/// `D^{-1/2} A D^{-1/2}`, zero rows for isolated nodes.
pub fn dense_normalized(a: &Array2<f64>) -> Array2<f64> {
    let deg: Vec<f64> = a.rows().into_iter().map(|r| r.sum()).collect();
    let mut out = a.clone();
    for ((r, c), v) in out.indexed_iter_mut() {
        if *v != 0.0 {
            *v /= (deg[r] * deg[c]).sqrt();
        }
    }
    out
}

/// Boltzmann block `d_u d_i exp(e_u·e_i) / Z` without any shifting.
pub fn naive_boltzmann(e: &Array2<f64>, ds: &InteractionDataset) -> Array2<f64> {
    let (nu, ni) = (ds.n_users, ds.n_items);
    let mut p = Array2::zeros((nu, ni));
    for u in 0..nu {
        for i in 0..ni {
            let w = (ds.user_degree[u] * ds.item_degree[i]) as f64;
            p[[u, i]] = w * e.row(u).dot(&e.row(nu + i)).exp();
        }
    }
    let z = p.sum();
    p / z
}

/// Max relative error between an analytic gradient and central
/// differences of `f`, with `|·|` floored at `floor`.
pub fn gradient_error(
    e: &Array2<f64>,
    analytic: &Array2<f64>,
    h: f64,
    floor: f64,
    mut f: impl FnMut(&Array2<f64>) -> f64,
) -> f64 {
    let mut worst = 0.0f64;
    let mut probe = e.clone();
    for idx in 0..e.len() {
        let (r, c) = (idx / e.ncols(), idx % e.ncols());
        let orig = probe[[r, c]];
        probe[[r, c]] = orig + h;
        let plus = f(&probe);
        probe[[r, c]] = orig - h;
        let minus = f(&probe);
        probe[[r, c]] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[[r, c]];
        let rel = (numeric - a).abs() / numeric.abs().max(a.abs()).max(floor);
        worst = worst.max(rel);
    }
    worst
}

/// All permutations of `items` (Heap's algorithm).
pub fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    fn heap(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        heap(k - 1, a, out);
        for i in 0..k - 1 {
            if k.is_multiple_of(2) {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
            heap(k - 1, a, out);
        }
    }
    let mut a = items.to_vec();
    let mut out = Vec::new();
    heap(a.len(), &mut a, &mut out);
    out
}

/// Hand-rolled Recall@K and NDCG@K for one ranked list.
pub fn reference_metrics(ranked: &[usize], truth: &[usize], k: usize) -> (f64, f64) {
    let hits: Vec<usize> = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| truth.contains(i))
        .map(|(p, _)| p)
        .collect();
    let recall = hits.len() as f64 / truth.len() as f64;
    let dcg: f64 = hits.iter().map(|&p| 1.0 / ((p + 2) as f64).log2()).sum();
    let idcg: f64 = (0..k.min(truth.len())).map(|p| 1.0 / ((p + 2) as f64).log2()).sum();
    (recall, dcg / idcg)
}
