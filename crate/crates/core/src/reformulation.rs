//! Differentiable reformulation `F_a(c) = f_a(K_a c) / a + c^T K_a c / 2` with
//! `K_a = a K - I` and `f_a` the Moreau envelope of the risk.
//!
//! At `a = 1`, every `c` satisfying `c = -J_1(K c - c)` is a stationary point
//! of `F_1`. For other step sizes the stationarity residual is a diagnostic
//! only.

use crate::error::{Error, Result};
use crate::kernel::DEFAULT_DENSE_BUDGET;
use crate::loss::LossModel;
use crate::problem::{dot, max_abs, Problem};

/// Central-difference step for [`ReformulatedProblem::stationarity_residual_fd`].
pub const FD_STEP: f64 = 1e-6;

/// The matrix `K_a = a K - I` (generally indefinite) with its step `a`.
#[derive(Debug, Clone)]
pub struct ReformulatedProblem<'p> {
    k_alpha: Vec<f64>,
    dim: usize,
    alpha: f64,
    loss: &'p LossModel,
}

/// The equivalent differentiable hinge loss at `a = 1`, `lambda = 1`:
/// `1/2 - y z` when `y z <= 0`, `(1 - y z)_+^2 / 2` otherwise.
pub fn hinge_envelope_unit(y: f64, z: f64) -> f64 {
    let m = y * z;
    if m <= 0.0 {
        0.5 - m
    } else {
        let r = (1.0 - m).max(0.0);
        0.5 * r * r
    }
}

impl<'p> ReformulatedProblem<'p> {
    pub fn build(problem: &'p Problem, alpha: f64) -> Result<Self> {
        Self::build_with_budget(problem, alpha, DEFAULT_DENSE_BUDGET)
    }

    pub fn build_with_budget(problem: &'p Problem, alpha: f64, budget: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::NonPositiveAlpha(alpha));
        }
        let dim = problem.dim();
        let required = dim
            .saturating_mul(dim)
            .saturating_mul(std::mem::size_of::<f64>());
        if required > budget {
            return Err(Error::MemoryBudget {
                dim,
                required,
                budget,
            });
        }
        let mut k_alpha = problem.gram().to_dense_entries()?;
        for (idx, v) in k_alpha.iter_mut().enumerate() {
            *v *= alpha;
            if idx % (dim + 1) == 0 {
                *v -= 1.0;
            }
        }
        Ok(ReformulatedProblem {
            k_alpha,
            dim,
            alpha,
            loss: problem.loss(),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major entries of `K_a`.
    pub fn k_alpha(&self) -> &[f64] {
        &self.k_alpha
    }

    fn apply(&self, c: &[f64]) -> Result<Vec<f64>> {
        if c.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: c.len(),
            });
        }
        Ok(self
            .k_alpha
            .chunks_exact(self.dim)
            .map(|row| dot(row, c))
            .collect())
    }

    /// `F_a(c)`.
    pub fn reformulated_objective(&self, c: &[f64]) -> Result<f64> {
        let x = self.apply(c)?;
        let envelope: f64 = x
            .iter()
            .enumerate()
            .map(|(i, &xi)| self.loss.envelope(i, self.alpha, xi))
            .sum();
        Ok(envelope / self.alpha + 0.5 * dot(c, &x))
    }

    /// Analytic gradient `K_a (grad f_a(K_a c) / a + c)`.
    pub fn gradient(&self, c: &[f64]) -> Result<Vec<f64>> {
        let x = self.apply(c)?;
        let inner: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &xi)| self.loss.envelope_grad(i, self.alpha, xi) / self.alpha + c[i])
            .collect();
        self.apply(&inner)
    }

    /// `||grad F_a(c)||_inf` from the analytic gradient.
    pub fn stationarity_residual(&self, c: &[f64]) -> Result<f64> {
        Ok(max_abs(self.gradient(c)?))
    }

    /// Central-difference gradient of [`Self::reformulated_objective`].
    pub fn gradient_fd(&self, c: &[f64], step: f64) -> Result<Vec<f64>> {
        let mut probe = c.to_vec();
        let mut grad = vec![0.0; c.len()];
        for i in 0..c.len() {
            let orig = probe[i];
            probe[i] = orig + step;
            let plus = self.reformulated_objective(&probe)?;
            probe[i] = orig - step;
            let minus = self.reformulated_objective(&probe)?;
            probe[i] = orig;
            grad[i] = (plus - minus) / (2.0 * step);
        }
        Ok(grad)
    }

    /// `||grad F_a(c)||_inf` by central differences with step [`FD_STEP`].
    pub fn stationarity_residual_fd(&self, c: &[f64]) -> Result<f64> {
        Ok(max_abs(self.gradient_fd(c, FD_STEP)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::GramOperator;
    use crate::loss::{LossKind, LossModel};
    use approx::assert_abs_diff_eq;

    fn problem(rows: &[Vec<f64>], kind: LossKind, y: Vec<f64>) -> Problem {
        Problem::new(
            GramOperator::from_rows(rows).unwrap(),
            LossModel::new(kind, 1.0, 0.0, y).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn build_examples() {
        let p = problem(&[vec![2.0]], LossKind::Rls, vec![1.0]);
        assert_eq!(
            ReformulatedProblem::build(&p, 1.0).unwrap().k_alpha(),
            &[1.0]
        );

        let p = problem(
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            LossKind::Rls,
            vec![1.0, 1.0],
        );
        assert_eq!(
            ReformulatedProblem::build(&p, 0.5).unwrap().k_alpha(),
            &[-0.5, 0.0, 0.0, -0.5]
        );

        let p = problem(
            &[vec![1.0, 0.0], vec![0.0, 3.0]],
            LossKind::Rls,
            vec![1.0, 1.0],
        );
        assert_eq!(
            ReformulatedProblem::build(&p, 1.0).unwrap().k_alpha(),
            &[0.0, 0.0, 0.0, 2.0]
        );
        assert!(ReformulatedProblem::build_with_budget(&p, 1.0, 16).is_err());
        assert!(ReformulatedProblem::build(&p, 0.0).is_err());
    }

    #[test]
    fn objective_examples() {
        let p = problem(&[vec![1.0]], LossKind::Rls, vec![1.0]);
        let rp = ReformulatedProblem::build(&p, 1.0).unwrap();
        for c in [-3.0, 0.0, 0.5, 7.0] {
            assert_abs_diff_eq!(
                rp.reformulated_objective(&[c]).unwrap(),
                0.25,
                epsilon = 1e-15
            );
            assert_abs_diff_eq!(
                rp.stationarity_residual(&[c]).unwrap(),
                0.0,
                epsilon = 1e-15
            );
        }

        let p = problem(&[vec![2.0]], LossKind::L1Svm, vec![1.0]);
        let rp = ReformulatedProblem::build(&p, 1.0).unwrap();
        assert_abs_diff_eq!(
            rp.reformulated_objective(&[0.0]).unwrap(),
            0.5,
            epsilon = 1e-15
        );

        let p = problem(
            &[vec![1.0, 0.2], vec![0.2, 0.5]],
            LossKind::Svr,
            vec![0.3, -1.0],
        );
        let rp = ReformulatedProblem::build(&p, 0.7).unwrap();
        let expected = (p.loss().moreau_envelope(0, 0.7, 0.0).unwrap()
            + p.loss().moreau_envelope(1, 0.7, 0.0).unwrap())
            / 0.7;
        assert_abs_diff_eq!(
            rp.reformulated_objective(&[0.0, 0.0]).unwrap(),
            expected,
            epsilon = 1e-15
        );
        assert!(rp.reformulated_objective(&[0.0]).is_err());
    }

    #[test]
    fn hinge_envelope_closed_form_matches() {
        let p = problem(&[vec![1.0]], LossKind::L1Svm, vec![-1.0]);
        for k in -300..=300 {
            let z = k as f64 * 0.01;
            assert_abs_diff_eq!(
                p.loss().moreau_envelope(0, 1.0, z).unwrap(),
                hinge_envelope_unit(-1.0, z),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn analytic_and_fd_gradients_agree() {
        let rows = vec![
            vec![0.6, 0.1, 0.2],
            vec![0.1, 0.3, 0.05],
            vec![0.2, 0.05, 0.4],
        ];
        for kind in LossKind::ALL {
            let y = if kind.is_classification() {
                vec![1.0, -1.0, 1.0]
            } else {
                vec![0.4, -1.2, 2.0]
            };
            let p = problem(&rows, kind, y);
            let rp = ReformulatedProblem::build(&p, 1.0).unwrap();
            let c = [0.37, -0.81, 1.13];
            let a = rp.gradient(&c).unwrap();
            let b = rp.gradient_fd(&c, FD_STEP).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert_abs_diff_eq!(*x, *y, epsilon = 1e-4);
            }
        }
    }
}
