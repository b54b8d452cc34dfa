//! Kernel evaluation against the stacked training basis.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::TaskDataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    /// `exp(-gamma * ||x - y||^2)`
    Gaussian { gamma: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { gamma } if !(gamma > 0.0 && gamma.is_finite()) => Err(
                Error::Validation(format!("gaussian gamma must be positive, got {gamma}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
            KernelSpec::Gaussian { gamma } => {
                let dist2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * dist2).exp()
            }
        }
    }
}

/// Row-stack of every task's positive and negative samples,
/// ordered `A_1, B_1, A_2, B_2, ..., A_T, B_T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Basis {
    pub rows: DMatrix<f64>,
}

impl Basis {
    pub fn from_dataset(ds: &TaskDataset) -> Basis {
        let m = ds.n_labeled();
        let d = ds.dimension();
        let mut rows = DMatrix::zeros(m, d);
        let mut r = 0;
        for task in ds.tasks() {
            for block in [&task.positives, &task.negatives] {
                rows.rows_mut(r, block.nrows()).copy_from(block);
                r += block.nrows();
            }
        }
        Basis { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn dimension(&self) -> usize {
        self.rows.ncols()
    }
}

pub fn gaussian_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dimension("gaussian kernel", x.len(), y.len()));
    }
    Ok(KernelSpec::Gaussian { gamma }.eval(x, y))
}

/// `K(X, D^T)`: entry `(i, j)` is `K(X_i, D_j)`.
pub fn kernel_matrix(x: &DMatrix<f64>, basis: &Basis, spec: KernelSpec) -> Result<DMatrix<f64>> {
    if x.ncols() != basis.dimension() {
        return Err(Error::dimension("kernel matrix", basis.dimension(), x.ncols()));
    }
    let d = &basis.rows;
    match spec {
        KernelSpec::Linear => Ok(x * d.transpose()),
        KernelSpec::Gaussian { gamma } => {
            // ||x - y||^2 expanded through inner products would lose the exact
            // unit diagonal, so distances are accumulated directly.
            let mut k = DMatrix::zeros(x.nrows(), d.nrows());
            for j in 0..d.nrows() {
                for i in 0..x.nrows() {
                    let mut s = 0.0;
                    for c in 0..x.ncols() {
                        let diff = x[(i, c)] - d[(j, c)];
                        s += diff * diff;
                    }
                    k[(i, j)] = (-gamma * s).exp();
                }
            }
            Ok(k)
        }
    }
}

/// Kernel values of a single point against the basis.
pub fn kernel_row(x: &[f64], basis: &Basis, spec: KernelSpec) -> Result<Vec<f64>> {
    if x.len() != basis.dimension() {
        return Err(Error::dimension("kernel row", basis.dimension(), x.len()));
    }
    Ok(basis
        .rows
        .row_iter()
        .map(|r| {
            let y: Vec<f64> = r.iter().copied().collect();
            spec.eval(x, &y)
        })
        .collect())
}
