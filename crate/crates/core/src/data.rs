//! Dataset ingestion: libsvm sparse text and dense CSV.
//!
//! Feature indices are 1-based in files and 0-based in memory.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::sparse::SparseVector;

/// Labelled examples `(x_i, y_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<SparseVector>,
    labels: Vec<f64>,
    n_features: usize,
}

impl Dataset {
    pub fn new(rows: Vec<SparseVector>, labels: Vec<f64>) -> Result<Self> {
        let n_features = rows.iter().map(|r| r.dim()).max().unwrap_or(0);
        Self::with_features(rows, labels, n_features)
    }

    pub fn with_features(
        rows: Vec<SparseVector>,
        labels: Vec<f64>,
        n_features: usize,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: labels.len(),
            });
        }
        let n_features = rows
            .iter()
            .map(|r| r.dim())
            .max()
            .unwrap_or(0)
            .max(n_features);
        Ok(Dataset {
            rows,
            labels,
            n_features,
        })
    }

    pub fn rows(&self) -> &[SparseVector] {
        &self.rows
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Input file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Libsvm,
    Csv,
}

impl std::str::FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "libsvm" => Ok(DataFormat::Libsvm),
            "csv" => Ok(DataFormat::Csv),
            other => Err(Error::Config(format!(
                "unknown data format '{other}', expected libsvm or csv"
            ))),
        }
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Parses `<label> <idx>:<val> ...` lines. `#` starts a comment; blank lines
/// are skipped.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_err(lineno, format!("non-numeric label '{label_tok}'")))?;
        let mut pairs = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("malformed pair '{tok}'")))?;
            let idx: usize = idx
                .parse()
                .ok()
                .filter(|&i| i >= 1)
                .ok_or_else(|| parse_err(lineno, format!("malformed index in '{tok}'")))?;
            let val: f64 = val
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_err(lineno, format!("malformed value in '{tok}'")))?;
            if idx <= last {
                return Err(parse_err(
                    lineno,
                    format!("index {idx} is not strictly ascending (previous {last})"),
                ));
            }
            last = idx;
            pairs.push((idx - 1, val));
        }
        // ascending order was checked above
        rows.push(SparseVector::from_pairs(pairs).expect("indices ascending"));
        labels.push(label);
    }
    Dataset::new(rows, labels)
}

/// Parses comma-separated numeric rows whose last column is the label.
pub fn parse_csv<R: BufRead>(reader: R, has_header: bool) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    let mut header_pending = has_header;
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line?;
        let content = line.trim();
        if content.is_empty() {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        let cells: Vec<f64> = content
            .split(',')
            .map(|c| {
                let c = c.trim();
                c.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(lineno, format!("non-numeric cell '{c}'")))
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(parse_err(
                    lineno,
                    format!("ragged row: {} columns, expected {w}", cells.len()),
                ))
            }
            _ => {}
        }
        let (label, features) = cells.split_last().expect("split yields at least one cell");
        rows.push(SparseVector::from_dense(features));
        labels.push(*label);
    }
    let n_features = width.map_or(0, |w| w - 1);
    Dataset::with_features(rows, labels, n_features)
}

/// Parses a dataset in the given format.
pub fn parse<R: BufRead>(reader: R, format: DataFormat) -> Result<Dataset> {
    match format {
        DataFormat::Libsvm => parse_libsvm(reader),
        DataFormat::Csv => parse_csv(reader, false),
    }
}

/// Writes the dataset in libsvm format with shortest round-trip numbers.
pub fn write_libsvm<W: Write>(data: &Dataset, mut out: W) -> Result<()> {
    for (row, label) in data.rows().iter().zip(data.labels()) {
        write!(out, "{label}")?;
        for (i, v) in row.iter() {
            write!(out, " {}:{v}", i + 1)?;
        }
        writeln!(out)?;
    }
    Ok(())
}
