//! Multi-task datasets: per-task positive, negative and Universum blocks.
//!
//! A [`TaskDataset`] is the input of every fit. Tasks keep their rows as dense
//! matrices (one sample per row) so that the assembly code can stack them
//! directly.

mod csv_io;
mod partition;
mod scaling;
mod synth;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{
    load_csv, load_feature_rows, load_rows, write_csv, write_universum_csv, CsvOptions,
    FeatureRows, LabelMap,
};
pub use partition::{partition_tasks, Bin, LabeledRows, PartitionRule, Partitioned};
pub use scaling::{normalize, Scaling};
pub use synth::{synth_multitask, SynthConfig};

/// Binary class label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn value(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }
}

/// The samples of one task.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub task_id: u32,
    pub positives: DMatrix<f64>,
    pub negatives: DMatrix<f64>,
    pub universum: DMatrix<f64>,
}

impl Task {
    pub fn new(task_id: u32, positives: DMatrix<f64>, negatives: DMatrix<f64>) -> Self {
        let d = positives.ncols();
        Task {
            task_id,
            positives,
            negatives,
            universum: DMatrix::zeros(0, d),
        }
    }

    pub fn n_labeled(&self) -> usize {
        self.positives.nrows() + self.negatives.nrows()
    }

    /// Labeled rows in storage order: positives first, then negatives.
    pub fn labeled_rows(&self) -> impl Iterator<Item = (Vec<f64>, Label)> + '_ {
        let pos = self
            .positives
            .row_iter()
            .map(|r| (r.iter().copied().collect(), Label::Positive));
        let neg = self
            .negatives
            .row_iter()
            .map(|r| (r.iter().copied().collect(), Label::Negative));
        pos.chain(neg)
    }
}

/// An ordered collection of tasks sharing one feature space.
///
/// Construction validates that every task has both classes, that all blocks
/// share the same column count and that task ids are unique.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskDataset {
    tasks: Vec<Task>,
    dimension: usize,
    feature_names: Vec<String>,
}

impl TaskDataset {
    pub fn new(tasks: Vec<Task>, feature_names: Vec<String>) -> Result<Self> {
        let dimension = feature_names.len();
        if dimension == 0 {
            return Err(Error::Validation("dataset has no feature columns".into()));
        }
        if tasks.is_empty() {
            return Err(Error::Validation("dataset has no tasks".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for task in &tasks {
            if !seen.insert(task.task_id) {
                return Err(Error::Validation(format!(
                    "duplicate task id {}",
                    task.task_id
                )));
            }
            if task.positives.nrows() == 0 || task.negatives.nrows() == 0 {
                return Err(Error::Validation(format!(
                    "task {} must contain both classes ({} positive, {} negative)",
                    task.task_id,
                    task.positives.nrows(),
                    task.negatives.nrows()
                )));
            }
            for (what, m) in [
                ("positive", &task.positives),
                ("negative", &task.negatives),
                ("universum", &task.universum),
            ] {
                if m.ncols() != dimension {
                    return Err(Error::dimension(
                        format!("task {} {what} block", task.task_id),
                        dimension,
                        m.ncols(),
                    ));
                }
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Validation(format!(
                        "task {} {what} block contains non-finite values",
                        task.task_id
                    )));
                }
            }
        }
        Ok(TaskDataset {
            tasks,
            dimension,
            feature_names,
        })
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn task(&self, task_id: u32) -> Option<&Task> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    pub fn task_ids(&self) -> Vec<u32> {
        self.tasks.iter().map(|t| t.task_id).collect()
    }

    pub fn n_labeled(&self) -> usize {
        self.tasks.iter().map(Task::n_labeled).sum()
    }

    pub fn n_universum(&self) -> usize {
        self.tasks.iter().map(|t| t.universum.nrows()).sum()
    }

    /// Same labeled data with every Universum block emptied.
    pub fn without_universum(&self) -> TaskDataset {
        let mut out = self.clone();
        for task in &mut out.tasks {
            task.universum = DMatrix::zeros(0, self.dimension);
        }
        out
    }

    /// Replaces the Universum blocks, one matrix per task in task order.
    pub fn with_universum(&self, blocks: Vec<DMatrix<f64>>) -> Result<TaskDataset> {
        if blocks.len() != self.tasks.len() {
            return Err(Error::dimension(
                "universum blocks",
                self.tasks.len(),
                blocks.len(),
            ));
        }
        let tasks = self
            .tasks
            .iter()
            .zip(blocks)
            .map(|(t, u)| Task {
                universum: u,
                ..t.clone()
            })
            .collect();
        TaskDataset::new(tasks, self.feature_names.clone())
    }

    /// Applies `f` to every row of every block (labeled and Universum).
    pub(crate) fn map_rows(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<TaskDataset> {
        let map = |m: &DMatrix<f64>| -> DMatrix<f64> {
            let rows: Vec<Vec<f64>> = m
                .row_iter()
                .map(|r| f(&r.iter().copied().collect::<Vec<_>>()))
                .collect();
            rows_to_matrix(&rows, m.ncols())
        };
        let tasks = self
            .tasks
            .iter()
            .map(|t| Task {
                task_id: t.task_id,
                positives: map(&t.positives),
                negatives: map(&t.negatives),
                universum: map(&t.universum),
            })
            .collect();
        TaskDataset::new(tasks, self.feature_names.clone())
    }
}

/// Builds a row-major matrix; `ncols` is used when `rows` is empty.
pub(crate) fn rows_to_matrix(rows: &[Vec<f64>], ncols: usize) -> DMatrix<f64> {
    let ncols = rows.first().map_or(ncols, Vec::len);
    DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

/// Default feature names `x1 .. xd`.
pub fn default_feature_names(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("x{i}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(id: u32, pos: &[f64], neg: &[f64]) -> Task {
        Task::new(
            id,
            DMatrix::from_row_slice(pos.len(), 1, pos),
            DMatrix::from_row_slice(neg.len(), 1, neg),
        )
    }

    #[test]
    fn rejects_single_class_task() {
        let t = Task::new(3, DMatrix::from_row_slice(1, 1, &[1.0]), DMatrix::zeros(0, 1));
        let err = TaskDataset::new(vec![t], default_feature_names(1)).unwrap_err();
        assert!(err.to_string().contains("task 3"), "{err}");
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let mut t = task(1, &[1.0], &[2.0]);
        t.universum = DMatrix::zeros(1, 2);
        assert!(matches!(
            TaskDataset::new(vec![t], default_feature_names(1)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn rejects_duplicate_ids() {
        let r = TaskDataset::new(
            vec![task(1, &[1.0], &[2.0]), task(1, &[1.0], &[2.0])],
            default_feature_names(1),
        );
        assert!(r.is_err());
    }

    #[test]
    fn universum_replacement_keeps_labeled_rows() {
        let ds = TaskDataset::new(vec![task(1, &[1.0, 2.0], &[3.0])], default_feature_names(1))
            .unwrap();
        let with = ds
            .with_universum(vec![DMatrix::from_row_slice(1, 1, &[2.0])])
            .unwrap();
        assert_eq!(with.n_universum(), 1);
        assert_eq!(with.without_universum(), ds);
    }
}
