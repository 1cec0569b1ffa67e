//! Coordinate descent (nonlinear Gauss-Seidel) with `alpha_i = 1/k_ii`.
//!
//! Each update enforces the coordinate-wise optimality condition exactly:
//!
//! ```text
//! v_i = k_i^T c / k_ii - c_i,   c_i <- S_i(v_i) = -J^i_{1/k_ii}(v_i)
//! ```
//!
//! This is an exact line search on `G(c) = sum_i f_i^*(-c_i) + c^T K c / 2`
//! (see [`Problem::dual_objective`]), which decreases by at least
//! `h_i^2 k_ii / 2` per update. `F` itself can increase along the way; both
//! share their minimizers.
//!
//! The kernel path keeps a cache `z = Kc` updated with one column read per
//! nonzero step. The linear path keeps `w = X^T c` instead and applies the
//! pending update `w += x_p h_p` lazily, skipping it when `h_p = 0`.
//!
//! A run stops at the end of a macro-iteration once every `|h_i|` is below the
//! tolerance and a fresh residual pass confirms it.

use std::time::Instant;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::problem::{max_abs, IndexRule, Problem, SolverConfig, SolverResult, TraceRow};
use crate::sparse::SparseVector;

/// Updates between full recomputations of the `z` / `w` caches.
pub const RESYNC_INTERVAL: usize = 10_000;

/// Emits coordinate indices (0-based) macro-iteration by macro-iteration.
#[derive(Debug, Clone)]
pub struct IndexRuleState {
    rule: IndexRule,
    ell: usize,
    order: Vec<usize>,
    pos: usize,
    macros: usize,
    reverse_next: bool,
    rng: Option<ChaCha8Rng>,
}

impl IndexRuleState {
    pub fn new(rule: IndexRule, ell: usize) -> Self {
        let rng = match rule {
            IndexRule::Randomized { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        IndexRuleState {
            rule,
            ell,
            order: Vec::with_capacity(ell),
            pos: 0,
            macros: 0,
            reverse_next: false,
            rng,
        }
    }

    fn start_macro(&mut self) {
        self.order.clear();
        match self.rule {
            IndexRule::Cyclic => self.order.extend(0..self.ell),
            IndexRule::Aitken => {
                if self.reverse_next && self.ell > 1 {
                    self.order.extend((0..self.ell - 1).rev());
                    self.reverse_next = false;
                } else {
                    self.order.extend(0..self.ell);
                    self.reverse_next = true;
                }
            }
            IndexRule::Randomized { .. } => {
                self.order.extend(0..self.ell);
                let rng = self.rng.as_mut().expect("randomized rule carries an rng");
                self.order.shuffle(rng);
            }
        }
        self.pos = 0;
        self.macros += 1;
    }

    /// Next coordinate index.
    pub fn next_index(&mut self) -> usize {
        if self.pos >= self.order.len() {
            self.start_macro();
        }
        let i = self.order[self.pos];
        self.pos += 1;
        i
    }

    /// The indices of the next macro-iteration.
    pub fn next_macro(&mut self) -> &[usize] {
        self.start_macro();
        self.pos = self.order.len();
        &self.order
    }

    /// Whether the current macro-iteration has been fully emitted.
    pub fn macro_complete(&self) -> bool {
        self.pos >= self.order.len()
    }

    /// Macro-iterations started so far.
    pub fn macro_count(&self) -> usize {
        self.macros
    }
}

#[derive(Debug, Clone)]
enum Path<'p> {
    Kernel {
        z: Vec<f64>,
        column: Vec<f64>,
    },
    Linear {
        rows: &'p [SparseVector],
        w: Vec<f64>,
        pending: Option<(usize, f64)>,
        skip: bool,
    },
}

/// Mutable state of one coordinate-descent run.
#[derive(Debug, Clone)]
pub struct CdState<'p> {
    problem: &'p Problem,
    c: Vec<f64>,
    h: Vec<f64>,
    frozen: Vec<bool>,
    path: Path<'p>,
    updates: usize,
    w_updates: usize,
    since_sync: usize,
}

impl<'p> CdState<'p> {
    fn frozen_mask(problem: &Problem) -> Vec<bool> {
        let frozen: Vec<bool> = (0..problem.dim()).map(|i| problem.is_frozen(i)).collect();
        let n = frozen.iter().filter(|&&f| f).count();
        if n > 0 {
            warn!("{n} coordinate(s) have a zero kernel diagonal and are frozen");
        }
        frozen
    }

    fn start(problem: &Problem, initial: Option<&[f64]>) -> Result<Vec<f64>> {
        match initial {
            Some(c0) if c0.len() != problem.dim() => Err(Error::DimensionMismatch {
                expected: problem.dim(),
                got: c0.len(),
            }),
            Some(c0) => Ok(c0.to_vec()),
            None => Ok(vec![0.0; problem.dim()]),
        }
    }

    /// State for the kernel path (works on dense or factored operators).
    pub fn kernel(problem: &'p Problem, initial: Option<&[f64]>) -> Result<Self> {
        let c = Self::start(problem, initial)?;
        let z = problem.gram().matvec(&c)?;
        let mut state = CdState {
            problem,
            frozen: Self::frozen_mask(problem),
            h: vec![0.0; c.len()],
            path: Path::Kernel {
                z,
                column: vec![0.0; c.len()],
            },
            c,
            updates: 0,
            w_updates: 0,
            since_sync: 0,
        };
        state.refresh_residuals();
        Ok(state)
    }

    /// State for the linear path. `skip` enables skipping `w` updates when
    /// the previous step was zero.
    pub fn linear(problem: &'p Problem, initial: Option<&[f64]>, skip: bool) -> Result<Self> {
        let rows = problem.gram().design_rows().ok_or_else(|| {
            Error::Config(
                "the linear coordinate-descent path needs a factored Gram operator".into(),
            )
        })?;
        let c = Self::start(problem, initial)?;
        let w = problem.gram().weights(&c)?;
        let mut state = CdState {
            problem,
            frozen: Self::frozen_mask(problem),
            h: vec![0.0; c.len()],
            path: Path::Linear {
                rows,
                w,
                pending: None,
                skip,
            },
            c,
            updates: 0,
            w_updates: 0,
            since_sync: 0,
        };
        state.refresh_residuals();
        Ok(state)
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.c
    }

    /// Last step sizes `h_i`.
    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn w_updates(&self) -> usize {
        self.w_updates
    }

    /// Current `w = X^T c` on the linear path, with any pending update applied.
    pub fn weights(&mut self) -> Option<&[f64]> {
        self.flush();
        match &self.path {
            Path::Linear { w, .. } => Some(w),
            Path::Kernel { .. } => None,
        }
    }

    fn apply_w(
        w: &mut [f64],
        rows: &[SparseVector],
        p: usize,
        hp: f64,
        skip: bool,
        count: &mut usize,
    ) {
        if hp != 0.0 || !skip {
            rows[p].axpy_into(hp, w);
            *count += 1;
        }
    }

    fn flush(&mut self) {
        if let Path::Linear {
            rows,
            w,
            pending,
            skip,
        } = &mut self.path
        {
            if let Some((p, hp)) = pending.take() {
                Self::apply_w(w, rows, p, hp, *skip, &mut self.w_updates);
            }
        }
    }

    /// Recomputes the cached `z` or `w` from `c`.
    fn resync(&mut self) {
        self.flush();
        match &mut self.path {
            Path::Kernel { z, .. } => {
                *z = self
                    .problem
                    .gram()
                    .matvec(&self.c)
                    .expect("dimensions fixed at construction");
            }
            Path::Linear { w, .. } => {
                *w = self
                    .problem
                    .gram()
                    .weights(&self.c)
                    .expect("dimensions fixed at construction");
            }
        }
        self.since_sync = 0;
    }

    /// Predictions `z = Kc` from the current caches.
    fn predictions(&mut self) -> Vec<f64> {
        self.flush();
        match &self.path {
            Path::Kernel { z, .. } => z.clone(),
            Path::Linear { rows, w, .. } => rows.iter().map(|x| x.dot_dense(w)).collect(),
        }
    }

    /// `F(c)` from the cached predictions.
    pub fn objective(&mut self) -> f64 {
        let z = self.predictions();
        self.problem.objective_with(&self.c, &z)
    }

    /// `G(c)` from the cached predictions; nonincreasing under updates.
    pub fn dual_objective(&mut self) -> f64 {
        let z = self.predictions();
        self.problem.dual_objective_with(&self.c, &z)
    }

    /// Recomputes every `h_i` as the residual of the coordinate-wise
    /// characterization at the current `c` (fresh caches, no updates) and
    /// returns its infinity norm over non-frozen coordinates.
    pub fn refresh_residuals(&mut self) -> f64 {
        self.resync();
        let z = self.predictions();
        let diag = self.problem.gram().diagonal();
        let loss = self.problem.loss();
        for i in 0..self.c.len() {
            self.h[i] = if self.frozen[i] {
                0.0
            } else {
                let v = z[i] / diag[i] - self.c[i];
                loss.step(i, 1.0 / diag[i], v) - self.c[i]
            };
        }
        max_abs(self.h.iter().copied())
    }

    /// One exact coordinate minimization; returns `h_i = new - old`.
    /// Frozen coordinates return 0 and are left untouched.
    pub fn update_coordinate(&mut self, i: usize) -> Result<f64> {
        if i >= self.c.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.c.len(),
            });
        }
        if self.frozen[i] {
            self.h[i] = 0.0;
            return Ok(0.0);
        }
        let kii = self.problem.gram().diagonal()[i];
        let zi = match &mut self.path {
            Path::Kernel { z, .. } => z[i],
            Path::Linear {
                rows,
                w,
                pending,
                skip,
            } => {
                if let Some((p, hp)) = pending.take() {
                    Self::apply_w(w, rows, p, hp, *skip, &mut self.w_updates);
                }
                rows[i].dot_dense(w)
            }
        };
        let v = zi / kii - self.c[i];
        let new = self.problem.loss().step(i, 1.0 / kii, v);
        let h = new - self.c[i];
        self.c[i] = new;
        self.h[i] = h;
        match &mut self.path {
            Path::Kernel { z, column } => {
                if h != 0.0 {
                    let gram = self.problem.gram();
                    let col = match gram.dense_column(i) {
                        Some(col) => col,
                        None => {
                            gram.column_into(i, column);
                            column
                        }
                    };
                    for (zj, kj) in z.iter_mut().zip(col) {
                        *zj += h * kj;
                    }
                }
            }
            Path::Linear { pending, .. } => *pending = Some((i, h)),
        }
        self.updates += 1;
        self.since_sync += 1;
        if self.since_sync >= RESYNC_INTERVAL {
            self.resync();
        }
        Ok(h)
    }
}

fn run(mut state: CdState<'_>, config: &SolverConfig) -> Result<SolverResult> {
    let start = Instant::now();
    let problem = state.problem;
    let dim = problem.dim();
    config.validate(dim)?;
    let mut rule = IndexRuleState::new(config.index_rule, dim);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut residual = f64::INFINITY;
    let mut macros = 0;

    while macros < config.max_iterations {
        let order = rule.next_macro().to_vec();
        let mut macro_max = 0.0f64;
        for i in order {
            macro_max = macro_max.max(state.update_coordinate(i)?.abs());
        }
        macros += 1;
        if config.record_trace {
            let objective = state.objective();
            trace.push(TraceRow {
                iteration: macros,
                objective,
                step: macro_max,
                w_updates: matches!(state.path, Path::Linear { .. }).then_some(state.w_updates),
                elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            });
        }
        // Every h_i was refreshed within the last window of updates.
        if max_abs(state.h.iter().copied()) < config.tolerance {
            residual = state.refresh_residuals();
            if residual < config.tolerance {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        residual = state.refresh_residuals();
    }
    let objective = state.objective();
    let is_linear = matches!(state.path, Path::Linear { .. });
    let (updates, w_updates) = (state.updates, state.w_updates);
    let c = state.into_coefficients();
    Ok(SolverResult {
        c,
        objective,
        iterations: macros,
        converged,
        residual_norm: residual,
        wall_time: start.elapsed(),
        trace,
        alpha: None,
        updates,
        w_updates: if is_linear { w_updates } else { 0 },
    })
}

/// Coordinate descent on the kernel matrix (one column read per update).
pub fn solve_kernel(problem: &Problem, config: &SolverConfig) -> Result<SolverResult> {
    config.validate(problem.dim())?;
    let state = CdState::kernel(problem, config.initial_c.as_deref())?;
    run(state, config)
}

/// Coordinate descent for the linear kernel with lazy `w` updates and the
/// skip rule enabled.
pub fn solve_linear(problem: &Problem, config: &SolverConfig) -> Result<SolverResult> {
    solve_linear_with(problem, config, true)
}

/// [`solve_linear`] with the skip rule switchable.
pub fn solve_linear_with(
    problem: &Problem,
    config: &SolverConfig,
    skip: bool,
) -> Result<SolverResult> {
    config.validate(problem.dim())?;
    let state = CdState::linear(problem, config.initial_c.as_deref(), skip)?;
    run(state, config)
}

/// Dispatches to the linear path for factored operators, the kernel path otherwise.
pub fn solve(problem: &Problem, config: &SolverConfig) -> Result<SolverResult> {
    if problem.gram().is_factored() {
        solve_linear(problem, config)
    } else {
        solve_kernel(problem, config)
    }
}
