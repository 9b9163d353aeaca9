#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use seqdiv::{DistanceMatrix, Instance};

/// Symmetric U[0, 2) entries closed under shortest paths, so the result is a metric.
pub fn metric_distances(rng: &mut ChaCha8Rng, n: usize) -> DistanceMatrix {
    let mut dist = DistanceMatrix::from_fn(n, |_, _| rng.gen_range(0.0..2.0));
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = dist.get(i, k) + dist.get(k, j);
                if via < dist.get(i, j) {
                    dist.set_pair(i, j, via);
                }
            }
        }
    }
    dist
}

/// Metric instance with `p_i ~ U[lo, hi]`.
pub fn metric_instance(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Instance {
    let dist = metric_distances(rng, n);
    let probs = (0..n).map(|_| rng.gen_range(lo..=hi)).collect();
    Instance::build(dist, probs, None, None).unwrap()
}

pub fn uniform_instance(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Instance {
    let dist = metric_distances(rng, n);
    Instance::build(dist, vec![p; n], None, None).unwrap()
}

/// Non-empty random category sets drawn from `n_categories` labels.
pub fn category_sets(rng: &mut ChaCha8Rng, n: usize, n_categories: u32) -> Vec<Vec<u32>> {
    (0..n)
        .map(|_| {
            let mut set: Vec<u32> = (0..n_categories).filter(|_| rng.gen_bool(0.3)).collect();
            if set.is_empty() {
                set.push(rng.gen_range(0..n_categories));
            }
            set
        })
        .collect()
}

/// Uniformly random permutation of `0..n`.
pub fn shuffled(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        v.swap(i, rng.gen_range(0..=i));
    }
    v
}

/// `ln det` of a dense symmetric matrix by Gaussian elimination with partial
/// pivoting; `None` when singular or negative.
pub fn dense_logdet(mut a: Vec<Vec<f64>>) -> Option<f64> {
    let n = a.len();
    let mut logdet = 0.0;
    let mut sign = 1.0;
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c] == 0.0 {
            return None;
        }
        if piv != c {
            a.swap(piv, c);
            sign = -sign;
        }
        let pivot = a[c][c];
        if pivot < 0.0 {
            sign = -sign;
        }
        logdet += pivot.abs().ln();
        for r in c + 1..n {
            let f = a[r][c] / pivot;
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    (sign > 0.0).then_some(logdet)
}
