//! Brute-force reference computations, independent of the closed-form
//! resolvents and of both solvers.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::GramOperator;
use crate::loss::LossModel;
use crate::problem::Problem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Golden-section stops once the bracket is this narrow.
    pub termination_width: f64,
    /// Constant added to the bracket half-width.
    pub bracket_base: f64,
    /// Hard cap on golden-section iterations.
    pub max_section_iters: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            termination_width: 1e-10,
            bracket_base: 10.0,
            max_section_iters: 400,
        }
    }
}

/// `argmin_z f_i(z) + alpha/2 (z - u)^2` by golden-section search.
pub fn prox_1d(loss: &LossModel, i: usize, alpha: f64, u: f64) -> Result<f64> {
    prox_1d_with(loss, i, alpha, u, &OracleConfig::default())
}

pub fn prox_1d_with(
    loss: &LossModel,
    i: usize,
    alpha: f64,
    u: f64,
    config: &OracleConfig,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::NonPositiveAlpha(alpha));
    }
    if config.termination_width.is_nan() || config.termination_width <= 0.0 {
        return Err(Error::Config("termination width must be positive".into()));
    }
    let y = *loss.labels().get(i).ok_or(Error::IndexOutOfRange {
        index: i,
        len: loss.len(),
    })?;
    let radius = config.bracket_base
        + 2.0 * u.abs()
        + 2.0 * y.abs()
        + 2.0 / (alpha * loss.lambda())
        + 2.0 * loss.epsilon();
    let (mut a, mut b) = (u.min(y) - radius, u.max(y) + radius);

    // phi(p) - phi(q) for phi(z) = f_i(z) + alpha/2 (z - u)^2
    let diff = |p: f64, q: f64| -> Result<f64> {
        Ok(loss.value_difference(i, p, q)? + 0.5 * alpha * (p - q) * (p + q - 2.0 * u))
    };

    let ratio = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    for _ in 0..config.max_section_iters {
        if b - a <= config.termination_width {
            break;
        }
        if diff(x1, x2)? < 0.0 {
            b = x2;
            x2 = x1;
            x1 = b - ratio * (b - a);
        } else {
            a = x1;
            x1 = x2;
            x2 = a + ratio * (b - a);
        }
    }
    Ok(0.5 * (a + b))
}

/// Solves `(K + lambda I) c = y` by Cholesky factorization of the densified
/// Gram matrix.
pub fn rls_closed_form(gram: &GramOperator, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::InvalidLoss(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let dim = gram.dim();
    if y.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: y.len(),
        });
    }
    let entries = gram.to_dense_entries()?;
    let mut m = DMatrix::from_row_slice(dim, dim, &entries);
    for i in 0..dim {
        m[(i, i)] += lambda;
    }
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::NotPsd("K + lambda I is not positive definite".into()))?;
    let c = chol.solve(&DVector::from_column_slice(y));
    Ok(c.iter().copied().collect())
}

/// Subgradient descent on `F` from `c = 0` with steps `s / sqrt(k)`,
/// `s = 1 / (1 + tr K)`, returning the best iterate seen. Ties at kinks are
/// broken by a seeded uniform draw from the subdifferential.
///
/// This is a crude upper bound on `min F`, never a ground truth.
pub fn reference_minimizer(problem: &Problem, budget: usize, seed: u64) -> Result<Vec<f64>> {
    let dim = problem.dim();
    let gram = problem.gram();
    let loss = problem.loss();
    let scale = 1.0 / (1.0 + gram.trace());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut c = vec![0.0; dim];
    let mut z = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    let mut dir = vec![0.0; dim];
    let mut best_c = c.clone();
    let mut best_f = f64::INFINITY;

    for k in 0..=budget {
        gram.matvec_into(&c, &mut z, None)?;
        let f = problem.objective_with(&c, &z);
        if f < best_f {
            best_f = f;
            best_c.copy_from_slice(&c);
        }
        if k == budget {
            break;
        }
        for i in 0..dim {
            let s = loss.subgradient(i, z[i])?;
            let pick = if s.hi > s.lo {
                rng.gen_range(s.lo..=s.hi)
            } else {
                s.lo
            };
            g[i] = pick + c[i];
        }
        // dF = K (s + c)
        gram.matvec_into(&g, &mut dir, None)?;
        let step = scale / ((k + 1) as f64).sqrt();
        for (ci, di) in c.iter_mut().zip(&dir) {
            *ci -= step * di;
        }
    }
    Ok(best_c)
}
