use crate::error::{HscfError, Result};
use crate::tensor::{normalize_adjacency_kernel, Tensor};

/// Symmetric `N×N` edge-weight matrix with entries in `[0, 1]` and a zero
/// diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct ConnectivityMatrix {
    weights: Tensor,
}

impl ConnectivityMatrix {
    pub fn new(weights: Tensor) -> Result<Self> {
        Self::validated(weights, "<unnamed>", "matrix")
    }

    /// Validates and wraps `weights`; errors name `subject` and `matrix`.
    pub fn validated(weights: Tensor, subject: &str, matrix: &str) -> Result<Self> {
        let shape = weights.shape();
        if shape.len() != 2 || shape[0] != shape[1] {
            return Err(HscfError::Malformed {
                subject: subject.to_string(),
                detail: format!("{matrix} must be square, got shape {shape:?}"),
            });
        }
        let n = shape[0];
        for i in 0..n {
            for j in 0..n {
                let v = weights.at(i, j);
                if !(0.0..=1.0).contains(&v) {
                    return Err(HscfError::OutOfRange {
                        subject: subject.to_string(),
                        matrix: matrix.to_string(),
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
        }
        for i in 0..n {
            let d = weights.at(i, i);
            if d != 0.0 {
                return Err(HscfError::NonZeroDiagonal {
                    subject: subject.to_string(),
                    matrix: matrix.to_string(),
                    index: i,
                    value: d,
                });
            }
            for j in (i + 1)..n {
                if weights.at(i, j) != weights.at(j, i) {
                    return Err(HscfError::Asymmetric {
                        subject: subject.to_string(),
                        matrix: matrix.to_string(),
                        row: i,
                        col: j,
                    });
                }
            }
        }
        Ok(ConnectivityMatrix { weights })
    }

    /// Ingests a correlation matrix with values in `[-1, 1]`: rescales to
    /// `(x + 1) / 2`, symmetrizes by averaging with the transpose and zeroes
    /// the diagonal.
    pub fn from_correlation(raw: &Tensor) -> Result<Self> {
        let shape = raw.shape();
        if shape.len() != 2 || shape[0] != shape[1] {
            return Err(HscfError::InvalidArgument(format!(
                "correlation matrix must be square, got {shape:?}"
            )));
        }
        let n = shape[0];
        let mut out = Tensor::zeros(&[n, n]);
        for i in 0..n {
            for j in (i + 1)..n {
                let r = 0.5 * (raw.at(i, j) + raw.at(j, i));
                let v = ((r.clamp(-1.0, 1.0)) + 1.0) / 2.0;
                out.set(i, j, v);
                out.set(j, i, v);
            }
        }
        ConnectivityMatrix::new(out)
    }

    pub fn n_rois(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights.at(i, j)
    }

    pub fn permuted(&self, perm: &[usize]) -> ConnectivityMatrix {
        ConnectivityMatrix {
            weights: self.weights.permute_square(perm),
        }
    }
}

/// One-hot node features: row `i` is one-hot at `columns[i]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeFeatureMatrix {
    columns: Vec<usize>,
}

impl NodeFeatureMatrix {
    pub fn from_columns(columns: Vec<usize>) -> Result<Self> {
        let n = columns.len();
        if n == 0 || columns.iter().any(|&c| c >= n) {
            return Err(HscfError::InvalidArgument(format!(
                "one-hot columns must lie in 0..{n}"
            )));
        }
        Ok(NodeFeatureMatrix { columns })
    }

    pub fn n_rois(&self) -> usize {
        self.columns.len()
    }

    /// Column index of the single 1 in each row.
    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn to_tensor(&self) -> Tensor {
        let n = self.columns.len();
        let mut t = Tensor::zeros(&[n, n]);
        for (i, &c) in self.columns.iter().enumerate() {
            t.set(i, c, 1.0);
        }
        t
    }
}

/// One-hot encoding of each ROI's volume rank (ascending; ties broken by
/// ROI index).
pub fn build_node_features(volumes: &[f64]) -> Result<NodeFeatureMatrix> {
    if volumes.is_empty() {
        return Err(HscfError::InvalidArgument("no volumes".into()));
    }
    for (i, &v) in volumes.iter().enumerate() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(HscfError::InvalidVolume {
                subject: "<unnamed>".into(),
                index: i,
                value: v,
            });
        }
    }
    let mut order: Vec<usize> = (0..volumes.len()).collect();
    // stable sort keeps index order among equal volumes
    order.sort_by(|&a, &b| volumes[a].total_cmp(&volumes[b]));
    let mut columns = vec![0; volumes.len()];
    for (rank, &roi) in order.iter().enumerate() {
        columns[roi] = rank;
    }
    NodeFeatureMatrix::from_columns(columns)
}

/// Kipf-style propagation matrix `D^-1/2 (A + I) D^-1/2`.
pub fn normalize_adjacency(a: &ConnectivityMatrix) -> Tensor {
    normalize_adjacency_kernel(a.weights()).0
}
