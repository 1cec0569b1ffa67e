#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rkm::kernel::{build_gram, DEFAULT_DENSE_BUDGET};
use rkm::{Dataset, GramOperator, KernelSpec, LossKind, LossModel, Problem, SparseVector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Two Gaussian blobs centred at `+-sep` along every axis, labels `+-1`.
pub fn two_class(n: usize, dim: usize, sep: f64, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = if i % 2 == 0 { 1.0 } else { -1.0 };
        let x: Vec<f64> = (0..dim).map(|_| y * sep + noise.sample(&mut r)).collect();
        rows.push(SparseVector::from_dense(&x));
        labels.push(y);
    }
    Dataset::new(rows, labels).unwrap()
}

/// Points in `[-1, 1]^dim` with targets `sin(sum x) + noise`.
pub fn regression(n: usize, dim: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect();
        let y = x.iter().sum::<f64>().sin() + 0.1 * r.gen_range(-1.0..1.0);
        rows.push(SparseVector::from_dense(&x));
        labels.push(y);
    }
    Dataset::new(rows, labels).unwrap()
}

/// Classification data for SVM losses, regression data otherwise.
pub fn data_for(kind: LossKind, n: usize, dim: usize, seed: u64) -> Dataset {
    if kind.is_classification() {
        two_class(n, dim, 0.7, seed)
    } else {
        regression(n, dim, seed)
    }
}

pub fn gaussian_gram(data: &Dataset, gamma: f64) -> GramOperator {
    build_gram(data, &KernelSpec::Gaussian { gamma }, DEFAULT_DENSE_BUDGET).unwrap()
}

pub fn linear_gram(data: &Dataset) -> GramOperator {
    build_gram(data, &KernelSpec::Linear, DEFAULT_DENSE_BUDGET).unwrap()
}

/// Dense Gram with every entry multiplied by `factor`, plus `shift` on the diagonal.
pub fn scaled(gram: &GramOperator, factor: f64, shift: f64) -> GramOperator {
    let dim = gram.dim();
    let mut entries = gram.to_dense_entries().unwrap();
    for (idx, v) in entries.iter_mut().enumerate() {
        *v *= factor;
        if idx % (dim + 1) == 0 {
            *v += shift;
        }
    }
    GramOperator::dense(dim, entries).unwrap()
}

/// The Gram rescaled to trace one.
pub fn trace_one(gram: &GramOperator) -> GramOperator {
    scaled(gram, 1.0 / gram.trace(), 0.0)
}

pub fn loss(kind: LossKind, lambda: f64, epsilon: f64, data: &Dataset) -> LossModel {
    LossModel::new(kind, lambda, epsilon, data.labels().to_vec()).unwrap()
}

pub fn problem(
    gram: GramOperator,
    kind: LossKind,
    lambda: f64,
    epsilon: f64,
    data: &Dataset,
) -> Problem {
    Problem::new(gram, loss(kind, lambda, epsilon, data)).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn diff2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Random PSD Gram `A A^T / m` of size `dim` with `m` columns.
pub fn random_psd(dim: usize, m: usize, seed: u64) -> GramOperator {
    let mut r = rng(seed);
    let a: Vec<Vec<f64>> = (0..dim)
        .map(|_| (0..m).map(|_| r.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut entries = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let v: f64 = a[i].iter().zip(&a[j]).map(|(x, y)| x * y).sum::<f64>() / m as f64;
            entries[i * dim + j] = v;
            entries[j * dim + i] = v;
        }
    }
    GramOperator::dense(dim, entries).unwrap()
}
