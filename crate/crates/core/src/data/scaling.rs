use serde::{Deserialize, Serialize};

use super::TaskDataset;
use crate::error::{Error, Result};

/// Per-feature min-max record. Replays the same affine map on unseen rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaling {
    /// Global statistics over every labeled and Universum row of every task.
    pub fn fit(ds: &TaskDataset) -> Scaling {
        let d = ds.dimension();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for task in ds.tasks() {
            for m in [&task.positives, &task.negatives, &task.universum] {
                for row in m.row_iter() {
                    for (j, &v) in row.iter().enumerate() {
                        min[j] = min[j].min(v);
                        max[j] = max[j].max(v);
                    }
                }
            }
        }
        Scaling { min, max }
    }

    pub fn dimension(&self) -> usize {
        self.min.len()
    }

    /// Maps one row; constant columns map to 0.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| {
                let span = hi - lo;
                if span > 0.0 {
                    (v - lo) / span
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn apply_checked(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dimension() {
            return Err(Error::dimension("scaled row", self.dimension(), x.len()));
        }
        Ok(self.apply(x))
    }

    /// Inverse of [`Scaling::apply`] on non-constant columns.
    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| lo + v * (hi - lo))
            .collect()
    }

    /// Applies the map to every row of a matrix.
    pub fn transform_rows(&self, m: &nalgebra::DMatrix<f64>) -> nalgebra::DMatrix<f64> {
        let rows: Vec<Vec<f64>> = m
            .row_iter()
            .map(|r| self.apply(&r.iter().copied().collect::<Vec<_>>()))
            .collect();
        super::rows_to_matrix(&rows, m.ncols())
    }

    pub fn transform(&self, ds: &TaskDataset) -> Result<TaskDataset> {
        if ds.dimension() != self.dimension() {
            return Err(Error::dimension("scaling", self.dimension(), ds.dimension()));
        }
        ds.map_rows(|x| self.apply(x))
    }
}

/// Rescales every feature to `[0, 1]` with global min/max statistics.
pub fn normalize(ds: &TaskDataset) -> Result<(TaskDataset, Scaling)> {
    let scaling = Scaling::fit(ds);
    let out = scaling.transform(ds)?;
    Ok((out, scaling))
}
