//! Trained models: prediction and the line-oriented `rkm-model v1` file.
//!
//! ```text
//! rkm-model v1
//! loss l1svm
//! lambda 0.1
//! epsilon 0
//! kernel gaussian 0.5
//! alpha 0.01
//! converged true
//! w 2 0.25 -0.5              (linear kernel only)
//! sv <coef> <label> <idx>:<val> ...
//! ```
//!
//! Numbers use the shortest representation that parses back to the same
//! `f64`. Support vectors appear in training order; only `|c_i| > 1e-12` are
//! kept. `alpha diag` records the coordinate-descent steps `1/k_ii`.

use std::io::{BufRead, Write};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::loss::{LossKind, LossModel};
use crate::sparse::SparseVector;

pub const MODEL_HEADER: &str = "rkm-model v1";

/// Coefficients at or below this magnitude are not stored.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;

/// Step sizes the model was trained with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    Uniform(f64),
    /// `alpha_i = 1 / k_ii`
    Diagonal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportVector {
    pub coef: f64,
    pub label: f64,
    pub features: SparseVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub loss: LossKind,
    pub lambda: f64,
    pub epsilon: f64,
    pub kernel: KernelSpec,
    pub alpha: StepSize,
    pub converged: bool,
    /// `w = X^T c`, present for linear kernels.
    pub weights: Option<Vec<f64>>,
    pub support: Vec<SupportVector>,
}

impl Model {
    /// Packs a solution `c` for `data`.
    pub fn from_solution(
        data: &Dataset,
        c: &[f64],
        loss: &LossModel,
        kernel: KernelSpec,
        alpha: StepSize,
        converged: bool,
    ) -> Result<Self> {
        if c.len() != data.len() {
            return Err(Error::DimensionMismatch {
                expected: data.len(),
                got: c.len(),
            });
        }
        let support: Vec<SupportVector> = data
            .rows()
            .iter()
            .zip(data.labels())
            .zip(c)
            .filter(|(_, &ci)| ci.abs() > SUPPORT_THRESHOLD)
            .map(|((x, &label), &coef)| SupportVector {
                coef,
                label,
                features: x.clone(),
            })
            .collect();
        let weights = matches!(kernel, KernelSpec::Linear).then(|| {
            let mut w = vec![0.0; data.n_features()];
            for (x, &ci) in data.rows().iter().zip(c) {
                if ci != 0.0 {
                    x.axpy_into(ci, &mut w);
                }
            }
            w
        });
        Ok(Model {
            loss: loss.kind(),
            lambda: loss.lambda(),
            epsilon: loss.epsilon(),
            kernel,
            alpha,
            converged,
            weights,
            support,
        })
    }

    /// `g(x) = <w, x>` for linear models, `sum_i c_i K(x_i, x)` otherwise.
    pub fn predict(&self, x: &SparseVector) -> Result<f64> {
        match &self.weights {
            Some(w) => {
                if x.dim() > w.len() {
                    return Err(Error::DimensionMismatch {
                        expected: w.len(),
                        got: x.dim(),
                    });
                }
                Ok(x.dot_dense(w))
            }
            None => Ok(self.predict_support(x)),
        }
    }

    /// Kernel expansion over the stored support vectors.
    pub fn predict_support(&self, x: &SparseVector) -> f64 {
        self.support
            .iter()
            .map(|sv| sv.coef * self.kernel.eval(&sv.features, x))
            .sum()
    }

    /// Recovers one coefficient per training row by matching support
    /// vectors in order against `data`; unmatched rows get 0.
    pub fn coefficients_for(&self, data: &Dataset) -> Vec<f64> {
        let mut c = vec![0.0; data.len()];
        let mut next = self.support.iter().peekable();
        for (i, (x, &y)) in data.rows().iter().zip(data.labels()).enumerate() {
            if let Some(sv) = next.peek() {
                if sv.label == y && &sv.features == x {
                    c[i] = sv.coef;
                    next.next();
                }
            }
        }
        c
    }
}

fn kernel_line(kernel: &KernelSpec) -> String {
    kernel.to_string()
}

/// Writes the model in the `rkm-model v1` format.
pub fn write_model<W: Write>(model: &Model, mut out: W) -> Result<()> {
    writeln!(out, "{MODEL_HEADER}")?;
    writeln!(out, "loss {}", model.loss)?;
    writeln!(out, "lambda {}", model.lambda)?;
    writeln!(out, "epsilon {}", model.epsilon)?;
    writeln!(out, "kernel {}", kernel_line(&model.kernel))?;
    match model.alpha {
        StepSize::Uniform(a) => writeln!(out, "alpha {a}")?,
        StepSize::Diagonal => writeln!(out, "alpha diag")?,
    }
    writeln!(out, "converged {}", model.converged)?;
    if let Some(w) = &model.weights {
        write!(out, "w {}", w.len())?;
        for v in w {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    for sv in &model.support {
        write!(out, "sv {} {}", sv.coef, sv.label)?;
        for (i, v) in sv.features.iter() {
            write!(out, " {}:{v}", i + 1)?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

fn model_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Model(format!("line {line}: {msg}"))
}

fn number(line: usize, tok: Option<&str>, what: &str) -> Result<f64> {
    let tok = tok.ok_or_else(|| model_err(line, format!("missing {what}")))?;
    tok.parse::<f64>()
        .map_err(|_| model_err(line, format!("invalid {what} '{tok}'")))
}

fn parse_kernel(line: usize, mut toks: std::str::SplitWhitespace<'_>) -> Result<KernelSpec> {
    let spec = match toks.next() {
        Some("linear") => KernelSpec::Linear,
        Some("gaussian") => KernelSpec::Gaussian {
            gamma: number(line, toks.next(), "gamma")?,
        },
        Some("poly") => {
            let degree = toks
                .next()
                .and_then(|t| t.parse::<u32>().ok())
                .ok_or_else(|| model_err(line, "invalid polynomial degree"))?;
            KernelSpec::Polynomial {
                degree,
                coef0: number(line, toks.next(), "coef0")?,
                scale: number(line, toks.next(), "scale")?,
            }
        }
        other => return Err(model_err(line, format!("unknown kernel {other:?}"))),
    };
    spec.validate().map_err(|e| model_err(line, e))?;
    Ok(spec)
}

/// Reads a model written by [`write_model`].
pub fn read_model<R: BufRead>(reader: R) -> Result<Model> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((n, l)) => {
                let l = l?;
                if !l.trim().is_empty() {
                    break (n + 1, l);
                }
            }
            None => return Err(Error::Model("empty model file".into())),
        }
    };
    if header.1.trim() != MODEL_HEADER {
        return Err(if header.1.trim_start().starts_with("rkm-model") {
            Error::Model(format!(
                "unsupported model version '{}', expected '{MODEL_HEADER}'",
                header.1.trim()
            ))
        } else {
            model_err(header.0, format!("missing '{MODEL_HEADER}' header"))
        });
    }

    let mut loss = None;
    let mut lambda = None;
    let mut epsilon = None;
    let mut kernel = None;
    let mut alpha = None;
    let mut converged = None;
    let mut weights = None;
    let mut support = Vec::new();

    for (n, l) in lines {
        let lineno = n + 1;
        let l = l?;
        let mut toks = l.split_whitespace();
        let Some(key) = toks.next() else { continue };
        match key {
            "loss" => {
                let name = toks
                    .next()
                    .ok_or_else(|| model_err(lineno, "missing loss"))?;
                loss = Some(name.parse::<LossKind>().map_err(|e| model_err(lineno, e))?);
            }
            "lambda" => lambda = Some(number(lineno, toks.next(), "lambda")?),
            "epsilon" => epsilon = Some(number(lineno, toks.next(), "epsilon")?),
            "kernel" => kernel = Some(parse_kernel(lineno, toks)?),
            "alpha" => {
                alpha = Some(match toks.next() {
                    Some("diag") => StepSize::Diagonal,
                    tok => StepSize::Uniform(number(lineno, tok, "alpha")?),
                })
            }
            "converged" => {
                converged = Some(match toks.next() {
                    Some("true") => true,
                    Some("false") => false,
                    other => {
                        return Err(model_err(
                            lineno,
                            format!("invalid converged flag {other:?}"),
                        ))
                    }
                })
            }
            "w" => {
                let count = toks
                    .next()
                    .and_then(|t| t.parse::<usize>().ok())
                    .ok_or_else(|| model_err(lineno, "invalid weight count"))?;
                let w = toks
                    .map(|t| number(lineno, Some(t), "weight"))
                    .collect::<Result<Vec<_>>>()?;
                if w.len() != count {
                    return Err(model_err(
                        lineno,
                        format!("truncated weight vector: {} of {count} values", w.len()),
                    ));
                }
                weights = Some(w);
            }
            "sv" => {
                let coef = number(lineno, toks.next(), "coefficient")?;
                let label = number(lineno, toks.next(), "label")?;
                let mut pairs = Vec::new();
                for tok in toks {
                    let (i, v) = tok
                        .split_once(':')
                        .ok_or_else(|| model_err(lineno, format!("malformed pair '{tok}'")))?;
                    let i = i
                        .parse::<usize>()
                        .ok()
                        .filter(|&i| i >= 1)
                        .ok_or_else(|| model_err(lineno, format!("malformed index '{tok}'")))?;
                    pairs.push((i - 1, number(lineno, Some(v), "feature value")?));
                }
                let features = SparseVector::from_pairs(pairs)
                    .ok_or_else(|| model_err(lineno, "feature indices not strictly ascending"))?;
                support.push(SupportVector {
                    coef,
                    label,
                    features,
                });
            }
            other => return Err(model_err(lineno, format!("unknown key '{other}'"))),
        }
    }

    let missing = |k: &str| Error::Model(format!("missing required key '{k}'"));
    let kernel = kernel.ok_or_else(|| missing("kernel"))?;
    if matches!(kernel, KernelSpec::Linear) && weights.is_none() {
        return Err(missing("w"));
    }
    Ok(Model {
        loss: loss.ok_or_else(|| missing("loss"))?,
        lambda: lambda.ok_or_else(|| missing("lambda"))?,
        epsilon: epsilon.ok_or_else(|| missing("epsilon"))?,
        kernel,
        alpha: alpha.ok_or_else(|| missing("alpha"))?,
        converged: converged.ok_or_else(|| missing("converged"))?,
        weights,
        support,
    })
}
