//! Separable empirical risks and their per-coordinate proximal machinery.
//!
//! Every loss is stored together with the regularization parameter `lambda`,
//! so the per-coordinate risk is `f_i(z) = L(y_i, z) / lambda`. The central
//! primitive is [`LossModel::resolvent_step`], which returns `-J_alpha(v)` for
//! the resolvent `J_alpha = (I + alpha (df_i)^-1)^-1` of the inverse
//! subdifferential. It is tied to the proximal mapping
//! `p(u) = argmin_z f_i(z) + alpha/2 (z - u)^2` by
//!
//! ```text
//! -J_alpha(v) = alpha * p(v / alpha) - v
//! ```
//!
//! All five losses have closed forms for both sides of that identity.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// The supported losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// Hinge loss `(1 - y z)_+`.
    L1Svm,
    /// Squared hinge loss `(1 - y z)_+^2`.
    L2Svm,
    /// Square loss `(y - z)^2 / 2`.
    Rls,
    /// Absolute loss `|y - z|`.
    Rla,
    /// Epsilon-insensitive loss `(|y - z| - eps)_+`.
    Svr,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::L1Svm,
        LossKind::L2Svm,
        LossKind::Rls,
        LossKind::Rla,
        LossKind::Svr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::L1Svm => "l1svm",
            LossKind::L2Svm => "l2svm",
            LossKind::Rls => "rls",
            LossKind::Rla => "rla",
            LossKind::Svr => "svr",
        }
    }

    /// Whether labels must be exactly +1 or -1.
    pub fn is_classification(self) -> bool {
        matches!(self, LossKind::L1Svm | LossKind::L2Svm)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::InvalidLoss(format!(
                    "unknown loss '{s}', expected one of l1svm, l2svm, rls, rla, svr"
                ))
            })
    }
}

/// A closed subgradient interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    fn between(a: f64, b: f64) -> Self {
        Interval {
            lo: a.min(b),
            hi: a.max(b),
        }
    }

    /// Distance from `x` to the interval (zero when `x` is inside).
    pub fn distance(&self, x: f64) -> f64 {
        if x < self.lo {
            self.lo - x
        } else if x > self.hi {
            x - self.hi
        } else {
            0.0
        }
    }

    pub fn shift(&self, by: f64) -> Self {
        Interval {
            lo: self.lo + by,
            hi: self.hi + by,
        }
    }
}

/// The separable empirical risk `f(z) = sum_i L(y_i, z_i) / lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossModel {
    kind: LossKind,
    lambda: f64,
    epsilon: f64,
    labels: Vec<f64>,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Relative tolerance on the conjugate's domain bounds.
const CONJUGATE_SLACK: f64 = 1e-12;

#[inline]
fn pos(x: f64) -> f64 {
    x.max(0.0)
}

impl LossModel {
    pub fn new(kind: LossKind, lambda: f64, epsilon: f64, labels: Vec<f64>) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidLoss(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidLoss(format!(
                "epsilon must be nonnegative and finite, got {epsilon}"
            )));
        }
        for (index, &label) in labels.iter().enumerate() {
            if !label.is_finite() {
                return Err(Error::InvalidLoss(format!(
                    "label at coordinate {index} is not finite"
                )));
            }
            if kind.is_classification() && label != 1.0 && label != -1.0 {
                return Err(Error::InvalidLabel {
                    index,
                    label,
                    kind: kind.name(),
                });
            }
        }
        Ok(LossModel {
            kind,
            lambda,
            epsilon,
            labels,
        })
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Lipschitz modulus of `f_i'`, or `None` when the loss is not
    /// differentiable.
    pub fn gradient_lipschitz(&self) -> Option<f64> {
        match self.kind {
            LossKind::Rls => Some(1.0 / self.lambda),
            LossKind::L2Svm => Some(2.0 / self.lambda),
            LossKind::L1Svm | LossKind::Rla | LossKind::Svr => None,
        }
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i < self.labels.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: i,
                len: self.labels.len(),
            })
        }
    }

    fn check_alpha(alpha: f64) -> Result<()> {
        if alpha > 0.0 && alpha.is_finite() {
            Ok(())
        } else {
            Err(Error::NonPositiveAlpha(alpha))
        }
    }

    /// `f_i(z) = L(y_i, z) / lambda`.
    pub fn loss_value(&self, i: usize, z: f64) -> Result<f64> {
        self.check_index(i)?;
        Ok(self.value(i, z))
    }

    #[inline]
    pub(crate) fn value(&self, i: usize, z: f64) -> f64 {
        let y = self.labels[i];
        let raw = match self.kind {
            LossKind::L1Svm => pos(1.0 - y * z),
            LossKind::L2Svm => {
                let m = pos(1.0 - y * z);
                m * m
            }
            LossKind::Rls => 0.5 * (y - z) * (y - z),
            LossKind::Rla => (y - z).abs(),
            LossKind::Svr => pos((y - z).abs() - self.epsilon),
        };
        raw / self.lambda
    }

    /// Convex conjugate at the negated coefficient, `f_i^*(-c)`. Infinite
    /// outside the conjugate's domain, which the resolvent never leaves.
    pub fn conjugate_value(&self, i: usize, c: f64) -> Result<f64> {
        self.check_index(i)?;
        Ok(self.conjugate(i, c))
    }

    pub(crate) fn conjugate(&self, i: usize, c: f64) -> f64 {
        let y = self.labels[i];
        let cap = (1.0 + CONJUGATE_SLACK) / self.lambda;
        match self.kind {
            LossKind::Rls => -y * c + 0.5 * self.lambda * c * c,
            LossKind::L1Svm => {
                let a = y * c;
                if (-CONJUGATE_SLACK * cap..=cap).contains(&a) {
                    -a
                } else {
                    f64::INFINITY
                }
            }
            LossKind::L2Svm => {
                let a = y * c;
                if a >= -CONJUGATE_SLACK * cap {
                    -a + 0.25 * self.lambda * a * a
                } else {
                    f64::INFINITY
                }
            }
            LossKind::Rla | LossKind::Svr => {
                let width = if self.kind == LossKind::Svr {
                    self.epsilon
                } else {
                    0.0
                };
                if c.abs() <= cap {
                    -y * c + width * c.abs()
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Sum of `f_i(z_i)` over all coordinates.
    pub(crate) fn total(&self, z: &[f64]) -> f64 {
        z.iter().enumerate().map(|(i, &zi)| self.value(i, zi)).sum()
    }

    /// `f_i(a) - f_i(b)`, arranged to avoid cancellation when both points lie
    /// on the same smooth piece.
    pub fn value_difference(&self, i: usize, a: f64, b: f64) -> Result<f64> {
        self.check_index(i)?;
        let y = self.labels[i];
        let lam = self.lambda;
        let d = match self.kind {
            LossKind::Rls => 0.5 * (b - a) * (2.0 * y - a - b),
            LossKind::L1Svm => {
                let (ma, mb) = (1.0 - y * a, 1.0 - y * b);
                if ma > 0.0 && mb > 0.0 {
                    y * (b - a)
                } else if ma <= 0.0 && mb <= 0.0 {
                    0.0
                } else {
                    pos(ma) - pos(mb)
                }
            }
            LossKind::L2Svm => {
                let (ma, mb) = (1.0 - y * a, 1.0 - y * b);
                if ma > 0.0 && mb > 0.0 {
                    y * (b - a) * (ma + mb)
                } else if ma <= 0.0 && mb <= 0.0 {
                    0.0
                } else {
                    pos(ma) * pos(ma) - pos(mb) * pos(mb)
                }
            }
            LossKind::Rla => {
                let (ra, rb) = (y - a, y - b);
                if ra * rb > 0.0 {
                    sign(ra) * (b - a)
                } else {
                    ra.abs() - rb.abs()
                }
            }
            LossKind::Svr => {
                let eps = self.epsilon;
                let (ra, rb) = (y - a, y - b);
                let (ea, eb) = (ra.abs() - eps, rb.abs() - eps);
                if ra * rb > 0.0 && ea > 0.0 && eb > 0.0 {
                    sign(ra) * (b - a)
                } else if ea <= 0.0 && eb <= 0.0 {
                    0.0
                } else {
                    pos(ea) - pos(eb)
                }
            }
        };
        Ok(d / lam)
    }

    /// The subdifferential of `f_i` at `z`.
    pub fn subgradient(&self, i: usize, z: f64) -> Result<Interval> {
        self.check_index(i)?;
        let y = self.labels[i];
        let inv = 1.0 / self.lambda;
        Ok(match self.kind {
            LossKind::Rls => Interval::point((z - y) * inv),
            LossKind::L2Svm => Interval::point(-2.0 * y * pos(1.0 - y * z) * inv),
            LossKind::L1Svm => {
                let m = 1.0 - y * z;
                if m > 0.0 {
                    Interval::point(-y * inv)
                } else if m < 0.0 {
                    Interval::point(0.0)
                } else {
                    Interval::between(-y * inv, 0.0)
                }
            }
            LossKind::Rla => {
                let d = z - y;
                if d == 0.0 {
                    Interval::between(-inv, inv)
                } else {
                    Interval::point(sign(d) * inv)
                }
            }
            LossKind::Svr => {
                let d = z - y;
                let eps = self.epsilon;
                if d.abs() > eps {
                    Interval::point(sign(d) * inv)
                } else if d.abs() < eps {
                    Interval::point(0.0)
                } else if d == 0.0 {
                    // eps == 0 and z == y
                    Interval::between(-inv, inv)
                } else {
                    Interval::between(0.0, sign(d) * inv)
                }
            }
        })
    }

    /// `-J_alpha(v)` for coordinate `i`.
    pub fn resolvent_step(&self, i: usize, alpha: f64, v: f64) -> Result<f64> {
        self.check_index(i)?;
        Self::check_alpha(alpha)?;
        Ok(self.step(i, alpha, v))
    }

    #[inline]
    pub(crate) fn step(&self, i: usize, alpha: f64, v: f64) -> f64 {
        let y = self.labels[i];
        let lam = self.lambda;
        match self.kind {
            LossKind::Rls => (alpha * y - v) / (1.0 + alpha * lam),
            LossKind::L1Svm => y * (1.0 / lam).min(pos(alpha - y * v)),
            LossKind::L2Svm => y * 2.0 * pos(alpha - y * v) / (2.0 + alpha * lam),
            LossKind::Rla => {
                let r = alpha * y - v;
                sign(r) * (1.0 / lam).min(r.abs())
            }
            LossKind::Svr => {
                let r = alpha * y - v;
                sign(r) * (1.0 / lam).min(pos(r.abs() - alpha * self.epsilon))
            }
        }
    }

    /// Closed-form proximal point `argmin_z f_i(z) + alpha/2 (z - u)^2`.
    pub fn prox(&self, i: usize, alpha: f64, u: f64) -> Result<f64> {
        self.check_index(i)?;
        Self::check_alpha(alpha)?;
        Ok(self.prox_unchecked(i, alpha, u))
    }

    #[inline]
    fn prox_unchecked(&self, i: usize, alpha: f64, u: f64) -> f64 {
        u + self.step(i, alpha, alpha * u) / alpha
    }

    /// Moreau envelope `min_z f_i(z) + alpha/2 (z - x)^2`.
    pub fn moreau_envelope(&self, i: usize, alpha: f64, x: f64) -> Result<f64> {
        self.check_index(i)?;
        Self::check_alpha(alpha)?;
        Ok(self.envelope(i, alpha, x))
    }

    #[inline]
    pub(crate) fn envelope(&self, i: usize, alpha: f64, x: f64) -> f64 {
        let p = self.prox_unchecked(i, alpha, x);
        self.value(i, p) + 0.5 * alpha * (p - x) * (p - x)
    }

    /// Gradient of the Moreau envelope, `alpha (x - p(x))`.
    pub fn envelope_gradient(&self, i: usize, alpha: f64, x: f64) -> Result<f64> {
        self.check_index(i)?;
        Self::check_alpha(alpha)?;
        Ok(self.envelope_grad(i, alpha, x))
    }

    #[inline]
    pub(crate) fn envelope_grad(&self, i: usize, alpha: f64, x: f64) -> f64 {
        // alpha (x - p(x)) = -(-J_alpha(alpha x))
        -self.step(i, alpha, alpha * x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn single(kind: LossKind, y: f64, lambda: f64, eps: f64) -> LossModel {
        LossModel::new(kind, lambda, eps, vec![y]).unwrap()
    }

    #[test]
    fn loss_values() {
        assert_abs_diff_eq!(
            single(LossKind::L1Svm, 1.0, 1.0, 0.0)
                .loss_value(0, 0.0)
                .unwrap(),
            1.0,
            epsilon = 0.0
        );
        assert_abs_diff_eq!(
            single(LossKind::Rls, 2.0, 1.0, 0.0)
                .loss_value(0, 2.0)
                .unwrap(),
            0.0,
            epsilon = 0.0
        );
        assert_abs_diff_eq!(
            single(LossKind::Svr, 0.0, 1.0, 0.1)
                .loss_value(0, 0.05)
                .unwrap(),
            0.0,
            epsilon = 0.0
        );
        assert_abs_diff_eq!(
            single(LossKind::Rla, 1.0, 2.0, 0.0)
                .loss_value(0, -1.0)
                .unwrap(),
            1.0,
            epsilon = 0.0
        );
    }

    #[test]
    fn resolvent_examples() {
        assert_abs_diff_eq!(
            single(LossKind::Rls, 1.0, 1.0, 0.0)
                .resolvent_step(0, 1.0, 1.0)
                .unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            single(LossKind::L1Svm, 1.0, 1.0, 0.0)
                .resolvent_step(0, 1.0, 0.0)
                .unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            single(LossKind::L2Svm, -1.0, 1.0, 0.0)
                .resolvent_step(0, 1.0, 0.0)
                .unwrap(),
            -2.0 / 3.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            single(LossKind::Rls, 1.0, 1.0, 0.0)
                .resolvent_step(0, 0.5, -0.5)
                .unwrap(),
            2.0 / 3.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            single(LossKind::Svr, 0.0, 1.0, 0.5)
                .resolvent_step(0, 1.0, 2.0)
                .unwrap(),
            -1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn envelope_examples() {
        let hinge = single(LossKind::L1Svm, 1.0, 1.0, 0.0);
        assert_abs_diff_eq!(
            hinge.moreau_envelope(0, 1.0, 0.0).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            hinge.moreau_envelope(0, 1.0, 1.0).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        let rls = single(LossKind::Rls, 1.0, 1.0, 0.0);
        assert_abs_diff_eq!(
            rls.moreau_envelope(0, 1.0, 0.0).unwrap(),
            0.25,
            epsilon = 1e-15
        );
    }

    #[test]
    fn envelope_gradient_examples() {
        let hinge = single(LossKind::L1Svm, 1.0, 1.0, 0.0);
        assert_abs_diff_eq!(
            hinge.envelope_gradient(0, 1.0, 0.0).unwrap(),
            -1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            hinge.envelope_gradient(0, 1.0, 2.0).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        let rls = single(LossKind::Rls, 1.0, 1.0, 0.0);
        assert_abs_diff_eq!(
            rls.envelope_gradient(0, 1.0, 1.0).unwrap(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn envelope_gradient_matches_finite_difference() {
        let h = 1e-6;
        for kind in LossKind::ALL {
            let m = single(kind, -1.0, 0.7, 0.3);
            for k in -40..=40 {
                let x = k as f64 * 0.1 + 0.013;
                let fd = (m.moreau_envelope(0, 1.3, x + h).unwrap()
                    - m.moreau_envelope(0, 1.3, x - h).unwrap())
                    / (2.0 * h);
                assert_abs_diff_eq!(m.envelope_gradient(0, 1.3, x).unwrap(), fd, epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = single(LossKind::Rls, 1.0, 1.0, 0.0);
        assert!(matches!(
            m.loss_value(1, 0.0),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            m.resolvent_step(0, 0.0, 1.0),
            Err(Error::NonPositiveAlpha(_))
        ));
        assert!(matches!(
            m.moreau_envelope(0, -1.0, 1.0),
            Err(Error::NonPositiveAlpha(_))
        ));
        assert!(LossModel::new(LossKind::Rls, 0.0, 0.0, vec![1.0]).is_err());
        assert!(LossModel::new(LossKind::Svr, 1.0, -0.1, vec![1.0]).is_err());
        assert!(matches!(
            LossModel::new(LossKind::L1Svm, 1.0, 0.0, vec![1.0, 0.5]),
            Err(Error::InvalidLabel { index: 1, .. })
        ));
    }

    #[test]
    fn sign_zero_branch_is_zero() {
        let rla = single(LossKind::Rla, 1.0, 1.0, 0.0);
        assert_eq!(rla.resolvent_step(0, 2.0, 2.0).unwrap(), 0.0);
        let svr = single(LossKind::Svr, 1.0, 1.0, 0.2);
        assert_eq!(svr.resolvent_step(0, 2.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn value_difference_matches_direct() {
        for kind in LossKind::ALL {
            let m = single(kind, 1.0, 0.5, 0.25);
            for (a, b) in [
                (0.1, 0.7),
                (-2.0, 3.0),
                (1.0, 1.25),
                (0.75, 1.25),
                (4.0, 5.0),
            ] {
                let direct = m.loss_value(0, a).unwrap() - m.loss_value(0, b).unwrap();
                assert_abs_diff_eq!(
                    m.value_difference(0, a, b).unwrap(),
                    direct,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn parses_kind_names() {
        for kind in LossKind::ALL {
            assert_eq!(kind.name().parse::<LossKind>().unwrap(), kind);
        }
        assert!("bogus".parse::<LossKind>().is_err());
    }
}
