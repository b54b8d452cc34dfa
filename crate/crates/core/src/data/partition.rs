use nalgebra::DMatrix;

use super::{rows_to_matrix, Label, Task, TaskDataset};
use crate::error::{Error, Result};

/// Labeled rows before they are split into tasks.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledRows {
    pub features: DMatrix<f64>,
    pub labels: Vec<Label>,
    pub feature_names: Vec<String>,
}

/// One task's share of a partition column.
#[derive(Clone, Debug, PartialEq)]
pub enum Bin {
    /// `[lo, hi)`, or `[lo, hi]` when `hi_inclusive`.
    Interval { lo: f64, hi: f64, hi_inclusive: bool },
    /// A discrete set of values.
    Values(Vec<f64>),
}

impl Bin {
    pub fn half_open(lo: f64, hi: f64) -> Self {
        Bin::Interval {
            lo,
            hi,
            hi_inclusive: false,
        }
    }

    pub fn closed(lo: f64, hi: f64) -> Self {
        Bin::Interval {
            lo,
            hi,
            hi_inclusive: true,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        match self {
            Bin::Interval {
                lo,
                hi,
                hi_inclusive,
            } => v >= *lo && (v < *hi || (*hi_inclusive && v == *hi)),
            Bin::Values(vals) => vals.contains(&v),
        }
    }

    fn overlaps(&self, other: &Bin) -> bool {
        match (self, other) {
            (Bin::Values(a), b) | (b, Bin::Values(a)) => a.iter().any(|&v| b.contains(v)),
            (Bin::Interval { lo: a, hi: b, .. }, Bin::Interval { lo: c, hi: d, .. }) => {
                let lo = a.max(*c);
                let hi = b.min(*d);
                lo < hi || (lo == hi && self.contains(lo) && other.contains(lo))
            }
        }
    }

    /// Parses `lo..hi` (half-open), `lo..=hi` (closed) or `v1|v2|...`.
    /// `inf` / `-inf` are accepted as bounds.
    pub fn parse(spec: &str) -> Result<Bin> {
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bin bound `{s}` is not a number")))
        };
        let spec = spec.trim();
        if let Some((lo, hi)) = spec.split_once("..=") {
            return Ok(Bin::closed(num(lo)?, num(hi)?));
        }
        if let Some((lo, hi)) = spec.split_once("..") {
            return Ok(Bin::half_open(num(lo)?, num(hi)?));
        }
        let values = spec.split('|').map(num).collect::<Result<Vec<_>>>()?;
        Ok(Bin::Values(values))
    }
}

/// Assigns rows to tasks by the value of one feature column.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionRule {
    /// Index into the feature columns.
    pub column: usize,
    /// One bin per task; task ids are `1..=bins.len()` in bin order.
    pub bins: Vec<Bin>,
    /// Remove the partition column from the features after splitting.
    pub drop_column: bool,
}

impl PartitionRule {
    pub fn new(column: usize, bins: Vec<Bin>) -> Self {
        PartitionRule {
            column,
            bins,
            drop_column: false,
        }
    }

    /// Resolves `column` against header names, falling back to a numeric index.
    pub fn by_name(feature_names: &[String], column: &str, bins: Vec<Bin>) -> Result<Self> {
        let idx = feature_names
            .iter()
            .position(|n| n == column)
            .or_else(|| column.parse::<usize>().ok().filter(|&i| i < feature_names.len()))
            .ok_or_else(|| Error::Config(format!("partition column `{column}` not found")))?;
        Ok(PartitionRule::new(idx, bins))
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.column >= d {
            return Err(Error::Config(format!(
                "partition column index {} out of range for {d} features",
                self.column
            )));
        }
        if self.bins.is_empty() {
            return Err(Error::Config("partition rule has no bins".into()));
        }
        for (i, a) in self.bins.iter().enumerate() {
            for b in &self.bins[i + 1..] {
                if a.overlaps(b) {
                    return Err(Error::Config(format!(
                        "partition bins overlap: {a:?} and {b:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Result of [`partition_tasks`]; `assigned + dropped` equals the input row count.
#[derive(Clone, Debug)]
pub struct Partitioned {
    pub dataset: TaskDataset,
    pub assigned: usize,
    pub dropped: usize,
}

pub fn partition_tasks(rows: &LabeledRows, rule: &PartitionRule) -> Result<Partitioned> {
    let d = rows.features.ncols();
    rule.validate(d)?;
    if rows.labels.len() != rows.features.nrows() {
        return Err(Error::dimension(
            "labels",
            rows.features.nrows(),
            rows.labels.len(),
        ));
    }
    let keep: Vec<usize> = (0..d)
        .filter(|&j| !(rule.drop_column && j == rule.column))
        .collect();
    let mut buckets: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = vec![Default::default(); rule.bins.len()];
    let mut dropped = 0;
    for (i, label) in rows.labels.iter().enumerate() {
        let v = rows.features[(i, rule.column)];
        let Some(b) = rule.bins.iter().position(|bin| bin.contains(v)) else {
            dropped += 1;
            continue;
        };
        let x: Vec<f64> = keep.iter().map(|&j| rows.features[(i, j)]).collect();
        match label {
            Label::Positive => buckets[b].0.push(x),
            Label::Negative => buckets[b].1.push(x),
        }
    }
    let mut tasks = Vec::with_capacity(buckets.len());
    for (b, (p, n)) in buckets.into_iter().enumerate() {
        if p.is_empty() && n.is_empty() {
            return Err(Error::Validation(format!(
                "partition bin {} ({:?}) received no rows",
                b + 1,
                rule.bins[b]
            )));
        }
        tasks.push(Task::new(
            (b + 1) as u32,
            rows_to_matrix(&p, keep.len()),
            rows_to_matrix(&n, keep.len()),
        ));
    }
    let names = keep.iter().map(|&j| rows.feature_names[j].clone()).collect();
    let dataset = TaskDataset::new(tasks, names)?;
    Ok(Partitioned {
        assigned: rows.labels.len() - dropped,
        dropped,
        dataset,
    })
}
