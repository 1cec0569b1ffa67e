//! Kernel evaluation, Gram operators and step-size rules.
//!
//! A [`GramOperator`] is either a dense row-major `l x l` matrix or the
//! factored form `K = X X^T` of the linear kernel, which is never
//! materialized. Matrix-vector products on both forms compute each output
//! entry with a sequential dot product, so results do not depend on the
//! number of worker threads.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rayon::prelude::*;
use rayon::ThreadPool;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::sparse::SparseVector;

/// Default memory budget for dense Gram matrices (2 GiB).
pub const DEFAULT_DENSE_BUDGET: usize = 2 << 30;

const SYMMETRY_TOL: f64 = 1e-9;
const POWER_MAX_ITERS: usize = 500;
const POWER_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// `<x, x'>`
    Linear,
    /// `exp(-gamma ||x - x'||^2)`
    Gaussian { gamma: f64 },
    /// `(scale <x, x'> + coef0)^degree`
    Polynomial { degree: u32, coef0: f64, scale: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Gaussian { gamma } => {
                if gamma > 0.0 && gamma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidKernel(format!(
                        "gaussian gamma must be positive, got {gamma}"
                    )))
                }
            }
            KernelSpec::Polynomial {
                degree,
                coef0,
                scale,
            } => {
                if degree == 0 {
                    Err(Error::InvalidKernel(
                        "polynomial degree must be >= 1".into(),
                    ))
                } else if !(coef0 >= 0.0 && coef0.is_finite()) {
                    Err(Error::InvalidKernel(format!(
                        "polynomial coef0 must be nonnegative, got {coef0}"
                    )))
                } else if !(scale > 0.0 && scale.is_finite()) {
                    Err(Error::InvalidKernel(format!(
                        "polynomial scale must be positive, got {scale}"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn eval(&self, x1: &SparseVector, x2: &SparseVector) -> f64 {
        match *self {
            KernelSpec::Linear => x1.dot(x2),
            KernelSpec::Gaussian { gamma } => (-gamma * x1.squared_distance(x2)).exp(),
            KernelSpec::Polynomial {
                degree,
                coef0,
                scale,
            } => (scale * x1.dot(x2) + coef0).powi(degree as i32),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Gaussian { gamma } => write!(f, "gaussian {gamma}"),
            KernelSpec::Polynomial {
                degree,
                coef0,
                scale,
            } => write!(f, "poly {degree} {coef0} {scale}"),
        }
    }
}

/// Evaluates `K(x1, x2)`.
pub fn kernel_eval(spec: &KernelSpec, x1: &SparseVector, x2: &SparseVector) -> f64 {
    spec.eval(x1, x2)
}

/// Storage behind a [`GramOperator`].
#[derive(Debug, Clone)]
pub enum GramRepr {
    /// Full row-major symmetric matrix.
    Dense { dim: usize, entries: Vec<f64> },
    /// Design matrix rows `x_i`, representing `X X^T`.
    Factored {
        rows: Vec<SparseVector>,
        n_features: usize,
    },
}

/// The kernel matrix `K`, immutable once built.
#[derive(Debug)]
pub struct GramOperator {
    repr: GramRepr,
    diag: Vec<f64>,
    trace: f64,
    spectral: OnceLock<f64>,
}

impl Clone for GramOperator {
    fn clone(&self) -> Self {
        let spectral = OnceLock::new();
        if let Some(&s) = self.spectral.get() {
            let _ = spectral.set(s);
        }
        GramOperator {
            repr: self.repr.clone(),
            diag: self.diag.clone(),
            trace: self.trace,
            spectral,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

impl GramOperator {
    /// Wraps a dense row-major matrix, validating symmetry and the
    /// positive-semidefinite necessary conditions `k_ii >= 0` and
    /// `|k_ij| <= sqrt(k_ii k_jj)`.
    pub fn dense(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyDataset);
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        let diag: Vec<f64> = (0..dim).map(|i| entries[i * dim + i]).collect();
        for (i, &d) in diag.iter().enumerate() {
            if !d.is_finite() || d < 0.0 {
                return Err(Error::NotPsd(format!("diagonal entry {i} is {d}")));
            }
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                let a = entries[i * dim + j];
                let b = entries[j * dim + i];
                let scale = a.abs().max(b.abs());
                if !a.is_finite() || !b.is_finite() || (a - b).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::Asymmetric { i, j, a, b });
                }
                let bound = (diag[i] * diag[j]).sqrt();
                if a.abs() > bound * (1.0 + SYMMETRY_TOL) + f64::MIN_POSITIVE {
                    return Err(Error::NotPsd(format!(
                        "|k_{i}{j}| = {} exceeds sqrt(k_ii k_jj) = {bound}",
                        a.abs()
                    )));
                }
            }
        }
        let trace = diag.iter().sum();
        Ok(GramOperator {
            repr: GramRepr::Dense { dim, entries },
            diag,
            trace,
            spectral: OnceLock::new(),
        })
    }

    /// Convenience constructor from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            entries.extend_from_slice(row);
        }
        Self::dense(dim, entries)
    }

    /// The linear-kernel Gram `X X^T`, kept in factored form.
    pub fn factored(rows: Vec<SparseVector>, n_features: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n_features = rows
            .iter()
            .map(|r| r.dim())
            .max()
            .unwrap_or(0)
            .max(n_features);
        let diag: Vec<f64> = rows.iter().map(|r| r.squared_norm()).collect();
        let trace = diag.iter().sum();
        Ok(GramOperator {
            repr: GramRepr::Factored { rows, n_features },
            diag,
            trace,
            spectral: OnceLock::new(),
        })
    }

    pub fn repr(&self) -> &GramRepr {
        &self.repr
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn is_factored(&self) -> bool {
        matches!(self.repr, GramRepr::Factored { .. })
    }

    /// Design rows of the factored form.
    pub fn design_rows(&self) -> Option<&[SparseVector]> {
        match &self.repr {
            GramRepr::Factored { rows, .. } => Some(rows),
            GramRepr::Dense { .. } => None,
        }
    }

    /// Feature dimension `n` of the factored form.
    pub fn n_features(&self) -> Option<usize> {
        match &self.repr {
            GramRepr::Factored { n_features, .. } => Some(*n_features),
            GramRepr::Dense { .. } => None,
        }
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.repr {
            GramRepr::Dense { dim, entries } => entries[i * dim + j],
            GramRepr::Factored { rows, .. } => rows[i].dot(&rows[j]),
        }
    }

    /// Writes column `k_i` into `out`.
    pub fn column_into(&self, i: usize, out: &mut [f64]) {
        match &self.repr {
            GramRepr::Dense { dim, entries } => {
                out.copy_from_slice(&entries[i * dim..(i + 1) * dim]);
            }
            GramRepr::Factored { rows, .. } => {
                let xi = &rows[i];
                for (o, xj) in out.iter_mut().zip(rows) {
                    *o = xi.dot(xj);
                }
            }
        }
    }

    /// Borrowed column for the dense form (rows equal columns by symmetry).
    pub fn dense_column(&self, i: usize) -> Option<&[f64]> {
        match &self.repr {
            GramRepr::Dense { dim, entries } => Some(&entries[i * dim..(i + 1) * dim]),
            GramRepr::Factored { .. } => None,
        }
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                got,
            })
        }
    }

    /// `w = X^T c` for the factored form.
    pub fn weights(&self, c: &[f64]) -> Result<Vec<f64>> {
        self.check_len(c.len())?;
        match &self.repr {
            GramRepr::Factored { rows, n_features } => {
                let mut w = vec![0.0; *n_features];
                for (row, &ci) in rows.iter().zip(c) {
                    if ci != 0.0 {
                        row.axpy_into(ci, &mut w);
                    }
                }
                Ok(w)
            }
            GramRepr::Dense { .. } => Err(Error::Config(
                "weight vector requested on a dense Gram operator".into(),
            )),
        }
    }

    /// `z = K c`.
    pub fn matvec(&self, c: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.matvec_into(c, &mut out, None)?;
        Ok(out)
    }

    /// `out = K c`, optionally splitting rows across a thread pool.
    pub fn matvec_into(&self, c: &[f64], out: &mut [f64], pool: Option<&ThreadPool>) -> Result<()> {
        self.check_len(c.len())?;
        self.check_len(out.len())?;
        match &self.repr {
            GramRepr::Dense { dim, entries } => {
                let row = |(i, o): (usize, &mut f64)| {
                    *o = dot(&entries[i * dim..(i + 1) * dim], c);
                };
                match pool {
                    Some(p) => p.install(|| out.par_iter_mut().enumerate().for_each(row)),
                    None => out.iter_mut().enumerate().for_each(row),
                }
            }
            GramRepr::Factored { rows, .. } => {
                let w = self.weights(c)?;
                let row = |(o, x): (&mut f64, &SparseVector)| *o = x.dot_dense(&w);
                match pool {
                    Some(p) => p.install(|| out.par_iter_mut().zip(rows.par_iter()).for_each(row)),
                    None => out.iter_mut().zip(rows.iter()).for_each(row),
                }
            }
        }
        Ok(())
    }

    /// Materializes the factored form; dense operators are returned as-is.
    pub fn densify(&self) -> Result<GramOperator> {
        match &self.repr {
            GramRepr::Dense { .. } => Ok(self.clone()),
            GramRepr::Factored { rows, .. } => {
                let dim = rows.len();
                let mut entries = vec![0.0; dim * dim];
                for i in 0..dim {
                    for j in i..dim {
                        let v = rows[i].dot(&rows[j]);
                        entries[i * dim + j] = v;
                        entries[j * dim + i] = v;
                    }
                }
                GramOperator::dense(dim, entries)
            }
        }
    }

    /// Dense row-major entries, densifying the factored form if needed.
    pub fn to_dense_entries(&self) -> Result<Vec<f64>> {
        match self.densify()?.repr {
            GramRepr::Dense { entries, .. } => Ok(entries),
            GramRepr::Factored { .. } => unreachable!(),
        }
    }

    /// Spectral norm estimate by power iteration, cached after the first call.
    ///
    /// Dense operators iterate on `K`; the factored form iterates on `X^T X`,
    /// whose largest eigenvalue is the same.
    pub fn spectral_norm(&self) -> f64 {
        *self.spectral.get_or_init(|| self.power_iteration())
    }

    fn power_iteration(&self) -> f64 {
        let n = match &self.repr {
            GramRepr::Dense { dim, .. } => *dim,
            GramRepr::Factored { n_features, .. } => *n_features,
        };
        if n == 0 || self.trace <= 0.0 {
            return 0.0;
        }
        let starts: [fn(usize) -> f64; 2] = [|_| 1.0, |i| ((i + 1) as f64).sqrt().sin()];
        let mut best = 0.0f64;
        for start in starts {
            let mut v: Vec<f64> = (0..n).map(start).collect();
            normalize(&mut v);
            let rho = self.power_from(v);
            best = best.max(rho);
            // A start orthogonal to the dominant eigenspace collapses to a
            // small quotient; retry from a second deterministic vector.
            if rho > 1e-8 * self.trace {
                break;
            }
        }
        // tr(K) bounds ||K||_2 for PSD K; rounding can push a rank-one
        // quotient just past it
        best.min(self.trace)
    }

    fn power_from(&self, mut v: Vec<f64>) -> f64 {
        let mut u = vec![0.0; v.len()];
        let mut rho = 0.0;
        for _ in 0..POWER_MAX_ITERS {
            self.apply_power_operator(&v, &mut u);
            let next = dot(&v, &u);
            let norm = normalize(&mut u);
            std::mem::swap(&mut u, &mut v);
            let done = norm == 0.0 || (next - rho).abs() <= POWER_REL_TOL * next.abs();
            rho = next;
            if done {
                break;
            }
        }
        rho
    }

    fn apply_power_operator(&self, v: &[f64], out: &mut [f64]) {
        match &self.repr {
            GramRepr::Dense { dim, entries } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = dot(&entries[i * dim..(i + 1) * dim], v);
                }
            }
            GramRepr::Factored { rows, .. } => {
                out.iter_mut().for_each(|x| *x = 0.0);
                for row in rows {
                    let t = row.dot_dense(v);
                    if t != 0.0 {
                        row.axpy_into(t, out);
                    }
                }
            }
        }
    }

    /// Checks `0 < alpha < 2 / ||K||_2` against the spectral estimate.
    pub fn validate_alpha(&self, alpha: f64) -> Result<()> {
        let norm = self.spectral_norm();
        let bound = if norm > 0.0 {
            2.0 / norm
        } else {
            f64::INFINITY
        };
        if alpha > 0.0 && alpha.is_finite() && alpha < bound {
            Ok(())
        } else {
            Err(Error::AlphaOutOfRange { alpha, bound })
        }
    }
}

/// Builds the Gram operator for a dataset. Linear kernels stay factored;
/// other kernels are materialized if `l^2` doubles fit in `budget` bytes.
pub fn build_gram(data: &Dataset, spec: &KernelSpec, budget: usize) -> Result<GramOperator> {
    spec.validate()?;
    let rows = data.rows();
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let KernelSpec::Linear = spec {
        return GramOperator::factored(rows.to_vec(), data.n_features());
    }
    let dim = rows.len();
    let required = dim
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(std::mem::size_of::<f64>()))
        .unwrap_or(usize::MAX);
    if required > budget {
        return Err(Error::MemoryBudget {
            dim,
            required,
            budget,
        });
    }
    let mut entries = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in i..dim {
            let v = spec.eval(&rows[i], &rows[j]);
            entries[i * dim + j] = v;
            entries[j * dim + i] = v;
        }
    }
    GramOperator::dense(dim, entries)
}

/// Step-size selection rule for the fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaRule {
    /// `1 / tr(K)`
    Trace,
    /// `1 / ||K||_2`
    Spectral,
    /// `1 / ||X||_F^2`, factored operators only.
    Frobenius,
    Explicit(f64),
}

impl FromStr for AlphaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trace" => Ok(AlphaRule::Trace),
            "spectral" => Ok(AlphaRule::Spectral),
            "frobenius" => Ok(AlphaRule::Frobenius),
            other => other.parse::<f64>().map(AlphaRule::Explicit).map_err(|_| {
                Error::Config(format!(
                    "alpha must be trace, spectral, frobenius or a number, got '{other}'"
                ))
            }),
        }
    }
}

impl fmt::Display for AlphaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaRule::Trace => write!(f, "trace"),
            AlphaRule::Spectral => write!(f, "spectral"),
            AlphaRule::Frobenius => write!(f, "frobenius"),
            AlphaRule::Explicit(a) => write!(f, "{a}"),
        }
    }
}

/// Resolves a rule to a step size. Explicit values are passed through after
/// a positivity check; callers validate them with
/// [`GramOperator::validate_alpha`].
pub fn alpha_from_rule(gram: &GramOperator, rule: AlphaRule) -> Result<f64> {
    match rule {
        AlphaRule::Trace => {
            if gram.trace() > 0.0 {
                Ok(1.0 / gram.trace())
            } else {
                Err(Error::NullKernel)
            }
        }
        AlphaRule::Spectral => {
            let norm = gram.spectral_norm();
            if norm > 0.0 {
                Ok(1.0 / norm)
            } else {
                Err(Error::NullKernel)
            }
        }
        AlphaRule::Frobenius => {
            if !gram.is_factored() {
                Err(Error::FrobeniusOnDense)
            } else if gram.trace() > 0.0 {
                // tr(X X^T) = ||X||_F^2
                Ok(1.0 / gram.trace())
            } else {
                Err(Error::NullKernel)
            }
        }
        AlphaRule::Explicit(a) => {
            if a > 0.0 && a.is_finite() {
                Ok(a)
            } else {
                Err(Error::NonPositiveAlpha(a))
            }
        }
    }
}
