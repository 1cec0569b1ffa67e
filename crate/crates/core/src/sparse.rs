/// A sparse feature vector with strictly ascending 0-based indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVector {
    /// Builds a vector from `(index, value)` pairs. Indices must be strictly
    /// ascending; exact zeros are dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, f64)>) -> Option<Self> {
        let mut v = SparseVector::default();
        for (idx, val) in pairs {
            if let Some(&last) = v.indices.last() {
                if idx <= last {
                    return None;
                }
            }
            if val != 0.0 {
                v.indices.push(idx);
                v.values.push(val);
            }
        }
        Some(v)
    }

    pub fn from_dense(values: &[f64]) -> Self {
        let mut v = SparseVector::default();
        for (i, &x) in values.iter().enumerate() {
            if x != 0.0 {
                v.indices.push(i);
                v.values.push(x);
            }
        }
        v
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    /// One past the largest stored index.
    pub fn dim(&self) -> usize {
        self.indices.last().map_or(0, |&i| i + 1)
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n.max(self.dim())];
        for (i, x) in self.iter() {
            out[i] = x;
        }
        out
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut a, mut b) = (0, 0);
        let mut acc = 0.0;
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[a] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        acc
    }

    /// Dot product with a dense vector; indices beyond `dense.len()` count as zero.
    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.iter()
            .take_while(|&(i, _)| i < dense.len())
            .map(|(i, x)| x * dense[i])
            .sum()
    }

    /// `dense += scale * self`.
    pub fn axpy_into(&self, scale: f64, dense: &mut [f64]) {
        for (i, x) in self.iter() {
            dense[i] += scale * x;
        }
    }

    /// Squared Euclidean distance `||self - other||^2`.
    pub fn squared_distance(&self, other: &SparseVector) -> f64 {
        let (mut a, mut b) = (0, 0);
        let mut acc = 0.0;
        while a < self.indices.len() || b < other.indices.len() {
            let ia = self.indices.get(a).copied().unwrap_or(usize::MAX);
            let ib = other.indices.get(b).copied().unwrap_or(usize::MAX);
            let d = if ia < ib {
                a += 1;
                self.values[a - 1]
            } else if ib < ia {
                b += 1;
                other.values[b - 1]
            } else {
                a += 1;
                b += 1;
                self.values[a - 1] - other.values[b - 1]
            };
            acc += d * d;
        }
        acc
    }
}
