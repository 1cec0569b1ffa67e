//! The regularized problem `F(c) = f(Kc) + c^T K c / 2` and its optimality
//! certificates.

use std::time::Duration;

use crate::error::{Error, Result};
use crate::kernel::{AlphaRule, GramOperator};
use crate::loss::LossModel;

/// Diagonal entries at or below this value freeze their coordinate.
pub const FROZEN_DIAGONAL: f64 = 1e-12;

/// Kernel matrix plus separable risk.
#[derive(Debug, Clone)]
pub struct Problem {
    gram: GramOperator,
    loss: LossModel,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

impl Problem {
    pub fn new(gram: GramOperator, loss: LossModel) -> Result<Self> {
        if gram.dim() != loss.len() {
            return Err(Error::DimensionMismatch {
                expected: gram.dim(),
                got: loss.len(),
            });
        }
        Ok(Problem { gram, loss })
    }

    pub fn gram(&self) -> &GramOperator {
        &self.gram
    }

    pub fn loss(&self) -> &LossModel {
        &self.loss
    }

    pub fn dim(&self) -> usize {
        self.gram.dim()
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

    /// Whether coordinate `i` has a (numerically) zero kernel column.
    pub fn is_frozen(&self, i: usize) -> bool {
        self.gram.diagonal()[i] <= FROZEN_DIAGONAL
    }

    /// `F(c)`, with the quadratic term taken as `c^T z` for `z = Kc`.
    pub fn objective(&self, c: &[f64]) -> Result<f64> {
        let z = self.gram.matvec(c)?;
        Ok(self.objective_with(c, &z))
    }

    /// `F(c)` given precomputed predictions `z = Kc`.
    pub(crate) fn objective_with(&self, c: &[f64], z: &[f64]) -> f64 {
        self.loss.total(z) + 0.5 * dot(c, z)
    }

    /// `G(c) = sum_i f_i^*(-c_i) + c^T K c / 2`, the functional that each
    /// coordinate-descent update minimizes exactly along its coordinate.
    ///
    /// `F(c) + G(c) >= 0` with equality exactly at solutions, so minimizers of
    /// `G` minimize `F`. Coordinate descent is monotone in `G`, not in `F`.
    pub fn dual_objective(&self, c: &[f64]) -> Result<f64> {
        let z = self.gram.matvec(c)?;
        Ok(self.dual_objective_with(c, &z))
    }

    pub(crate) fn dual_objective_with(&self, c: &[f64], z: &[f64]) -> f64 {
        let conj: f64 = c
            .iter()
            .enumerate()
            .map(|(i, &ci)| self.loss.conjugate(i, ci))
            .sum();
        conj + 0.5 * dot(c, z)
    }

    /// Residual of the coordinate-wise fixed-point characterization:
    /// `r_i = c_i - (-J_{alpha_i}(alpha_i k_i^T c - c_i))`.
    ///
    /// A zero residual certifies optimality. The converse can fail when `K`
    /// is singular: other minimizers may leave a nonzero residual.
    pub fn optimality_residual(&self, c: &[f64], alphas: &[f64]) -> Result<Vec<f64>> {
        self.check_len(c.len())?;
        self.check_len(alphas.len())?;
        if let Some(&a) = alphas.iter().find(|&&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::NonPositiveAlpha(a));
        }
        let z = self.gram.matvec(c)?;
        Ok(self.residual_with(c, &z, |i| alphas[i]))
    }

    pub(crate) fn residual_with(
        &self,
        c: &[f64],
        z: &[f64],
        alpha: impl Fn(usize) -> f64,
    ) -> Vec<f64> {
        (0..c.len())
            .map(|i| {
                let a = alpha(i);
                c[i] - self.loss.step(i, a, a * z[i] - c[i])
            })
            .collect()
    }

    /// Per-coordinate step sizes `1 / k_ii` used by coordinate descent;
    /// frozen coordinates get 1.
    pub fn diagonal_alphas(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                if self.is_frozen(i) {
                    1.0
                } else {
                    1.0 / self.gram.diagonal()[i]
                }
            })
            .collect()
    }

    /// Infinity norm of the residual over non-frozen coordinates. Frozen
    /// coordinates do not influence `F`.
    pub fn certificate_norm(&self, c: &[f64], alphas: &[f64]) -> Result<f64> {
        let r = self.optimality_residual(c, alphas)?;
        Ok(max_abs(
            r.into_iter()
                .enumerate()
                .filter(|&(i, _)| !self.is_frozen(i))
                .map(|(_, x)| x),
        ))
    }

    pub(crate) fn certificate_with(
        &self,
        c: &[f64],
        z: &[f64],
        alpha: impl Fn(usize) -> f64,
    ) -> f64 {
        let r = self.residual_with(c, z, alpha);
        max_abs(
            r.into_iter()
                .enumerate()
                .filter(|&(i, _)| !self.is_frozen(i))
                .map(|(_, x)| x),
        )
    }
}

/// Index selection for coordinate descent. All three rules are essentially
/// cyclic with window `2l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexRule {
    /// `1, ..., l` in every macro-iteration.
    Cyclic,
    /// Forward macro `1, ..., l` alternating with reverse macro `l-1, ..., 1`.
    Aitken,
    /// A fresh seeded permutation per macro-iteration.
    Randomized { seed: u64 },
}

impl std::fmt::Display for IndexRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IndexRule::Cyclic => write!(f, "cyclic"),
            IndexRule::Aitken => write!(f, "aitken"),
            IndexRule::Randomized { seed } => write!(f, "random({seed})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Step size rule for the fixed-point solver.
    pub alpha_rule: AlphaRule,
    /// Stopping tolerance on the iterate change / step sizes.
    pub tolerance: f64,
    /// Iteration budget (fixed point) or macro-iteration budget (coordinate descent).
    pub max_iterations: usize,
    pub index_rule: IndexRule,
    /// Starting coefficients; zeros when `None`.
    pub initial_c: Option<Vec<f64>>,
    pub record_trace: bool,
    /// Worker threads for the fixed-point matrix-vector product.
    pub threads: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha_rule: AlphaRule::Trace,
            tolerance: 1e-6,
            max_iterations: 10_000,
            index_rule: IndexRule::Cyclic,
            initial_c: None,
            record_trace: false,
            threads: 1,
        }
    }
}

impl SolverConfig {
    pub(crate) fn validate(&self, dim: usize) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("iteration budget must be positive".into()));
        }
        if let Some(c0) = &self.initial_c {
            if c0.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c0.len(),
                });
            }
        }
        Ok(())
    }

    pub(crate) fn start(&self, dim: usize) -> Vec<f64> {
        self.initial_c.clone().unwrap_or_else(|| vec![0.0; dim])
    }
}

/// One row of a convergence trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// Iteration (fixed point) or macro-iteration (coordinate descent).
    pub iteration: usize,
    pub objective: f64,
    /// `||c^{k+1} - c^k||_inf` or `max_i |h_i|` over the macro-iteration.
    pub step: f64,
    /// Cumulative `w` updates on the linear coordinate-descent path.
    pub w_updates: Option<usize>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub c: Vec<f64>,
    pub objective: f64,
    /// Iterations (fixed point) or macro-iterations (coordinate descent).
    pub iterations: usize,
    pub converged: bool,
    /// Infinity norm of the optimality residual at `c`.
    pub residual_norm: f64,
    pub wall_time: Duration,
    pub trace: Vec<TraceRow>,
    /// Uniform step size, `None` for coordinate descent (`alpha_i = 1/k_ii`).
    pub alpha: Option<f64>,
    /// Single-coordinate updates (coordinate descent only).
    pub updates: usize,
    /// Applied `w` updates (linear coordinate descent only).
    pub w_updates: usize,
}
