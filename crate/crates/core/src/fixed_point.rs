//! Fixed-point (nonlinear Jacobi) iteration `c <- -J_alpha(alpha K c - c)`.
//!
//! Each iteration runs three steps: `z = K c` (the only kernel access),
//! `v = alpha z - c`, and the coordinate-wise resolvent `c = -J_alpha(v)`.
//! The iteration stops once `||c^{k+1} - c^k||_inf < tol`. That difference is
//! exactly the optimality residual at `c^k`, so the returned iterate is the
//! one whose residual was certified.

use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::kernel::{alpha_from_rule, AlphaRule, GramOperator, GramRepr};
use crate::loss::LossModel;
use crate::problem::{Problem, SolverConfig, SolverResult, TraceRow};

/// Largest matrix dimension [`contraction_estimate`] will decompose by default.
pub const DEFAULT_EIGEN_CAP: usize = 2000;

/// Contraction diagnostics for the fixed-point map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceEstimate {
    /// `||alpha K - I||_2 = max_i |1 - alpha eig_i|`.
    pub mu1: f64,
    /// `(1 + 1/L^2)^{-1/2}`, 1 when `L` is infinite.
    pub mu2: f64,
    /// `mu1 * mu2`.
    pub mu: f64,
    /// Lipschitz modulus of `f'`; infinite for nonsmooth losses.
    pub lipschitz_l: f64,
    /// `min` over positive eigenvalues of `alpha eig (2 - alpha eig)`.
    pub beta: f64,
    /// `(1 + alpha^2/L^2)^{-1/2}`, the Lipschitz modulus of `J_alpha` itself
    /// when `f'` is `L`-Lipschitz. Equals `mu2` at `alpha = 1`.
    pub mu2_alpha: f64,
    /// `mu1 * mu2_alpha`.
    pub mu_alpha: f64,
}

/// Eigenvalues of `K` (ascending), via the `n x n` matrix `X^T X` padded with
/// zeros for factored operators.
pub fn gram_eigenvalues(gram: &GramOperator, cap: usize) -> Result<Vec<f64>> {
    let mut eig = match gram.repr() {
        GramRepr::Dense { dim, entries } => {
            if *dim > cap {
                return Err(Error::EigenBudget { dim: *dim, cap });
            }
            let m = DMatrix::from_row_slice(*dim, *dim, entries);
            SymmetricEigen::new(m)
                .eigenvalues
                .iter()
                .copied()
                .collect::<Vec<_>>()
        }
        GramRepr::Factored { rows, n_features } => {
            let n = *n_features;
            let small = n.min(rows.len());
            if small > cap {
                return Err(Error::EigenBudget { dim: small, cap });
            }
            let mut vals = if n <= rows.len() {
                let mut m = DMatrix::<f64>::zeros(n, n);
                for row in rows {
                    for (a, xa) in row.iter() {
                        for (b, xb) in row.iter() {
                            m[(a, b)] += xa * xb;
                        }
                    }
                }
                SymmetricEigen::new(m)
                    .eigenvalues
                    .iter()
                    .copied()
                    .collect::<Vec<_>>()
            } else {
                let dense = gram.densify()?;
                return gram_eigenvalues(&dense, cap);
            };
            vals.resize(rows.len(), 0.0);
            vals
        }
    };
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Computes `mu1`, `mu2`, `mu`, `L` and `beta` for step size `alpha`.
pub fn contraction_estimate(
    gram: &GramOperator,
    alpha: f64,
    loss: &LossModel,
) -> Result<ConvergenceEstimate> {
    contraction_estimate_with_cap(gram, alpha, loss, DEFAULT_EIGEN_CAP)
}

pub fn contraction_estimate_with_cap(
    gram: &GramOperator,
    alpha: f64,
    loss: &LossModel,
    cap: usize,
) -> Result<ConvergenceEstimate> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::NonPositiveAlpha(alpha));
    }
    let eig = gram_eigenvalues(gram, cap)?;
    let top = eig.iter().fold(0.0f64, |m, &e| m.max(e.abs()));
    let mu1 = eig
        .iter()
        .fold(0.0f64, |m, &e| m.max((1.0 - alpha * e).abs()));
    let positive_floor = 1e-12 * top.max(f64::MIN_POSITIVE);
    let beta = eig
        .iter()
        .filter(|&&e| e > positive_floor)
        .map(|&e| alpha * e * (2.0 - alpha * e))
        .fold(f64::INFINITY, f64::min);
    let lipschitz_l = loss.gradient_lipschitz().unwrap_or(f64::INFINITY);
    let (mu2, mu2_alpha) = if lipschitz_l.is_finite() {
        let l2 = lipschitz_l * lipschitz_l;
        (
            (1.0 + 1.0 / l2).powf(-0.5),
            (1.0 + alpha * alpha / l2).powf(-0.5),
        )
    } else {
        (1.0, 1.0)
    };
    Ok(ConvergenceEstimate {
        mu1,
        mu2,
        mu: mu1 * mu2,
        lipschitz_l,
        beta,
        mu2_alpha,
        mu_alpha: mu1 * mu2_alpha,
    })
}

/// Resolves the step size for `config`, validating explicit values against
/// `0 < alpha < 2/||K||_2`.
pub fn resolve_alpha(gram: &GramOperator, rule: AlphaRule) -> Result<f64> {
    let alpha = alpha_from_rule(gram, rule)?;
    if let AlphaRule::Explicit(_) = rule {
        gram.validate_alpha(alpha)?;
    }
    Ok(alpha)
}

/// Runs the fixed-point iteration.
pub fn solve(problem: &Problem, config: &SolverConfig) -> Result<SolverResult> {
    solve_observed(problem, config, |_, _| {})
}

/// Like [`solve`], calling `observer(k, c^k)` for every evaluated iterate.
pub fn solve_observed<F>(
    problem: &Problem,
    config: &SolverConfig,
    mut observer: F,
) -> Result<SolverResult>
where
    F: FnMut(usize, &[f64]),
{
    let start = Instant::now();
    let dim = problem.dim();
    config.validate(dim)?;
    let gram = problem.gram();
    let loss = problem.loss();
    let alpha = resolve_alpha(gram, config.alpha_rule)?;
    let pool = if config.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.threads)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    let mut c = config.start(dim);
    let mut next = vec![0.0; dim];
    let mut z = vec![0.0; dim];
    let mut trace = Vec::new();
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut converged = None;

    for k in 0..=config.max_iterations {
        // z = K c
        gram.matvec_into(&c, &mut z, pool.as_ref())?;
        let objective = problem.objective_with(&c, &z);
        observer(k, &c);
        if best.as_ref().is_none_or(|(f, _, _)| objective < *f) {
            best = Some((objective, k, c.clone()));
        }
        if k == config.max_iterations {
            break;
        }
        // c <- -J(alpha z - c)
        let mut step = 0.0f64;
        for i in 0..dim {
            let v = alpha * z[i] - c[i];
            next[i] = loss.step(i, alpha, v);
            step = step.max((next[i] - c[i]).abs());
        }
        if config.record_trace {
            trace.push(TraceRow {
                iteration: k,
                objective,
                step,
                w_updates: None,
                elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            });
        }
        if step < config.tolerance {
            converged = Some((objective, k, step));
            break;
        }
        std::mem::swap(&mut c, &mut next);
    }

    let (c, objective, iterations, residual_norm, converged) = match converged {
        Some((objective, k, _)) => {
            let residual = problem.certificate_with(&c, &z, |_| alpha);
            (c, objective, k, residual, true)
        }
        None => {
            let (objective, k, c) = best.expect("at least one iterate is evaluated");
            let z = gram.matvec(&c)?;
            let residual = problem.certificate_with(&c, &z, |_| alpha);
            (c, objective, k, residual, false)
        }
    };
    Ok(SolverResult {
        c,
        objective,
        iterations,
        converged,
        residual_norm,
        wall_time: start.elapsed(),
        trace,
        alpha: Some(alpha),
        updates: 0,
        w_updates: 0,
    })
}
