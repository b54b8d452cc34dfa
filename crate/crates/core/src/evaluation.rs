//! k-fold cross-validation, grid search and report output.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{Label, Scaling, Task, TaskDataset};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::models::{fit, Hyperparams, Method};
use crate::universum::{generate_universum, UniversumConfig};

/// Train/test index lists of one fold.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn folds_from_order(order: &[usize], n: usize, k: usize) -> Vec<Fold> {
    let mut assignment = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % k;
    }
    (0..k)
        .map(|j| {
            let (test, train) = (0..n).partition(|&i| assignment[i] == j);
            Fold { train, test }
        })
        .collect()
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k < 2 || n < k {
        return Err(Error::Validation(format!(
            "k-fold split needs 2 <= k <= n, got k = {k}, n = {n}"
        )));
    }
    Ok(())
}

/// Shuffled k-fold split of `0..n`; fold sizes differ by at most one and the
/// first `n mod k` folds get the extra row.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    check_k(n, k)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(folds_from_order(&order, n, k))
}

/// k-fold split that deals the rows of each stratum round-robin over the
/// folds, so no fold's training part loses a stratum with at least two rows.
pub fn stratified_kfold(strata: &[usize], k: usize, seed: u64) -> Result<Vec<Fold>> {
    let n = strata.len();
    check_k(n, k)?;
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for (i, &s) in strata.iter().enumerate() {
        match groups.iter_mut().find(|(id, _)| *id == s) {
            Some((_, rows)) => rows.push(i),
            None => groups.push((s, vec![i])),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::with_capacity(n);
    for (_, rows) in &mut groups {
        rows.shuffle(&mut rng);
        order.extend_from_slice(rows);
    }
    Ok(folds_from_order(&order, n, k))
}

/// One labeled row of a dataset, addressed by task position and class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RowRef {
    pub task: usize,
    pub label: Label,
    pub row: usize,
}

/// Labeled rows in dataset order: per task, positives then negatives.
pub fn dataset_rows(ds: &TaskDataset) -> Vec<RowRef> {
    let mut out = Vec::with_capacity(ds.n_labeled());
    for (t, task) in ds.tasks().iter().enumerate() {
        out.extend((0..task.positives.nrows()).map(|row| RowRef { task: t, label: Label::Positive, row }));
        out.extend((0..task.negatives.nrows()).map(|row| RowRef { task: t, label: Label::Negative, row }));
    }
    out
}

/// Labeled rows `indices` (into [`dataset_rows`]) as a dataset with the same
/// tasks and no Universum.
pub fn subset(ds: &TaskDataset, indices: &[usize]) -> Result<TaskDataset> {
    let rows = dataset_rows(ds);
    let mut picked: Vec<(Vec<usize>, Vec<usize>)> = vec![(Vec::new(), Vec::new()); ds.n_tasks()];
    for &i in indices {
        let r = rows
            .get(i)
            .ok_or_else(|| Error::Validation(format!("row index {i} out of range")))?;
        match r.label {
            Label::Positive => picked[r.task].0.push(r.row),
            Label::Negative => picked[r.task].1.push(r.row),
        }
    }
    let tasks = ds
        .tasks()
        .iter()
        .zip(picked)
        .map(|(t, (p, n))| Task::new(t.task_id, t.positives.select_rows(&p), t.negatives.select_rows(&n)))
        .collect();
    TaskDataset::new(tasks, ds.feature_names().to_vec())
}

/// Stratified folds over (task, class).
pub fn dataset_folds(ds: &TaskDataset, k: usize, seed: u64) -> Result<Vec<Fold>> {
    let rows = dataset_rows(ds);
    for (t, task) in ds.tasks().iter().enumerate() {
        if task.positives.nrows() < 2 || task.negatives.nrows() < 2 {
            return Err(Error::Validation(format!(
                "task {} is too small to stratify: needs at least 2 rows per class",
                ds.tasks()[t].task_id
            )));
        }
    }
    let strata: Vec<usize> = rows
        .iter()
        .map(|r| 2 * r.task + usize::from(r.label == Label::Negative))
        .collect();
    stratified_kfold(&strata, k, seed)
}

/// Percentage of matching labels.
pub fn accuracy(predictions: &[Label], truths: &[Label]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Validation("accuracy of an empty prediction set".into()));
    }
    if predictions.len() != truths.len() {
        return Err(Error::dimension("accuracy", truths.len(), predictions.len()));
    }
    let hits = predictions.iter().zip(truths).filter(|(p, t)| p == t).count();
    Ok(100.0 * hits as f64 / predictions.len() as f64)
}

/// Where each training fold's Universum comes from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UniversumSource {
    /// No Universum rows.
    Off,
    /// Regenerated from the training fold; the seed is offset by the fold index.
    Generate(UniversumConfig),
    /// The Universum rows stored in the dataset, shared by every fold.
    Keep,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CvConfig {
    pub k: usize,
    pub seed: u64,
    pub universum: UniversumSource,
    /// Min-max scaling fitted on each training fold.
    pub normalize: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            k: 5,
            seed: 0,
            universum: UniversumSource::Generate(UniversumConfig::default()),
            normalize: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvReport {
    pub method: Method,
    /// Mean fold accuracy in percent.
    pub mean_accuracy: f64,
    /// Population standard deviation over folds, in percent.
    pub std: f64,
    pub fold_accuracies: Vec<f64>,
    /// Seconds spent fitting and predicting.
    pub wall_time: f64,
    /// Fits whose QP solver stopped before reaching tolerance.
    pub convergence_flags: usize,
}

/// What one fold fed to the model, for inspection in tests.
pub struct FoldAudit<'a> {
    pub fold: usize,
    pub train: &'a [usize],
    pub test: &'a [usize],
    /// Scaling statistics, when normalization is on.
    pub scaling: Option<&'a Scaling>,
    /// Dataset passed to the fit: scaled training rows plus Universum.
    pub prepared: &'a TaskDataset,
}

pub fn cross_validate(method: Method, ds: &TaskDataset, hp: &Hyperparams, cfg: &CvConfig) -> Result<CvReport> {
    cross_validate_audited(method, ds, hp, cfg, &mut |_| {})
}

pub fn cross_validate_audited(
    method: Method,
    ds: &TaskDataset,
    hp: &Hyperparams,
    cfg: &CvConfig,
    audit: &mut dyn FnMut(&FoldAudit),
) -> Result<CvReport> {
    hp.validate()?;
    let folds = dataset_folds(ds, cfg.k, cfg.seed)?;
    let all_rows = dataset_rows(ds);
    let mut fold_accuracies = Vec::with_capacity(cfg.k);
    let mut wall_time = 0.0;
    let mut convergence_flags = 0;

    for (j, fold) in folds.iter().enumerate() {
        let mut run = || -> Result<(f64, f64, bool)> {
            let train = subset(ds, &fold.train)?;
            let scaling = cfg.normalize.then(|| Scaling::fit(&train));
            let mut prepared = match &scaling {
                Some(s) => s.transform(&train)?,
                None => train,
            };
            prepared = match cfg.universum {
                UniversumSource::Off => prepared,
                UniversumSource::Generate(u) => generate_universum(
                    &prepared,
                    &UniversumConfig { seed: u.seed.wrapping_add(j as u64), ..u },
                )?,
                UniversumSource::Keep => {
                    let blocks = ds
                        .tasks()
                        .iter()
                        .map(|t| match &scaling {
                            Some(s) => s.transform_rows(&t.universum),
                            None => t.universum.clone(),
                        })
                        .collect();
                    prepared.with_universum(blocks)?
                }
            };
            audit(&FoldAudit {
                fold: j,
                train: &fold.train,
                test: &fold.test,
                scaling: scaling.as_ref(),
                prepared: &prepared,
            });

            let start = Instant::now();
            let mut model = fit(method, &prepared, hp)?;
            if let Some(s) = scaling {
                model = model.with_scaling(s);
            }
            let mut predictions = Vec::with_capacity(fold.test.len());
            let mut truths = Vec::with_capacity(fold.test.len());
            for &i in &fold.test {
                let r = all_rows[i];
                let task = &ds.tasks()[r.task];
                let block = match r.label {
                    Label::Positive => &task.positives,
                    Label::Negative => &task.negatives,
                };
                let x: Vec<f64> = block.row(r.row).iter().copied().collect();
                predictions.push(model.predict(&x, task.task_id)?);
                truths.push(r.label);
            }
            let elapsed = start.elapsed().as_secs_f64();
            Ok((accuracy(&predictions, &truths)?, elapsed, model.converged()))
        };
        let (acc, elapsed, converged) = run().map_err(|e| e.at(format_args!("fold {j}")))?;
        fold_accuracies.push(acc);
        wall_time += elapsed;
        convergence_flags += usize::from(!converged);
    }

    let k = fold_accuracies.len() as f64;
    let mean = fold_accuracies.iter().sum::<f64>() / k;
    let std = (fold_accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / k).sqrt();
    Ok(CvReport {
        method,
        mean_accuracy: mean,
        std,
        fold_accuracies,
        wall_time,
        convergence_flags,
    })
}

/// `{2^i | i = -10..=10}`
pub fn power_range() -> Vec<f64> {
    (-10..=10).map(|i| 2f64.powi(i)).collect()
}

/// `{0.1, 0.2, ..., 0.9}`
pub fn epsilon_range() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// Candidate lists per hyperparameter; the grid is their cartesian product.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    pub c_u: Vec<f64>,
    pub c_u_star: Vec<f64>,
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
    pub epsilon: Vec<f64>,
    /// Gaussian widths; ignored for the linear kernel.
    pub gamma: Vec<f64>,
    /// Tie the second problem's parameters to the first (`c2 = c1`,
    /// `c_u* = c_u`, `mu2 = mu1`); their own lists are then ignored.
    pub mirror: bool,
}

impl GridSpec {
    /// One-point grid at `hp`.
    pub fn singleton(hp: &Hyperparams) -> Self {
        GridSpec {
            c1: vec![hp.c1],
            c2: vec![hp.c2],
            c_u: vec![hp.c_u],
            c_u_star: vec![hp.c_u_star],
            mu1: vec![hp.mu1],
            mu2: vec![hp.mu2],
            epsilon: vec![hp.epsilon],
            gamma: match hp.kernel {
                KernelSpec::Gaussian { gamma } => vec![gamma],
                KernelSpec::Linear => vec![],
            },
            mirror: false,
        }
    }

    /// Every configuration, with `base` supplying the non-grid fields.
    pub fn configurations(&self, base: &Hyperparams) -> Result<Vec<Hyperparams>> {
        let gaussian = matches!(base.kernel, KernelSpec::Gaussian { .. });
        let gammas: Vec<Option<f64>> = if gaussian {
            self.gamma.iter().map(|&g| Some(g)).collect()
        } else {
            vec![None]
        };
        let lists: [(&str, &[f64]); 7] = [
            ("c1", &self.c1),
            ("c2", &self.c2),
            ("cu", &self.c_u),
            ("cu-star", &self.c_u_star),
            ("mu1", &self.mu1),
            ("mu2", &self.mu2),
            ("epsilon", &self.epsilon),
        ];
        for (name, list) in lists {
            let mirrored = self.mirror && matches!(name, "c2" | "cu-star" | "mu2");
            if list.is_empty() && !mirrored {
                return Err(Error::Validation(format!("grid list for {name} is empty")));
            }
        }
        if gammas.is_empty() {
            return Err(Error::Validation("grid list for gamma is empty".into()));
        }
        let one = |v: &[f64], mirrored: bool| if mirrored { vec![f64::NAN] } else { v.to_vec() };
        let mut out = Vec::new();
        for &c1 in &self.c1 {
            for &c2 in &one(&self.c2, self.mirror) {
                for &c_u in &self.c_u {
                    for &c_u_star in &one(&self.c_u_star, self.mirror) {
                        for &mu1 in &self.mu1 {
                            for &mu2 in &one(&self.mu2, self.mirror) {
                                for &epsilon in &self.epsilon {
                                    for gamma in &gammas {
                                        let pick = |own: f64, tied: f64| if self.mirror { tied } else { own };
                                        let hp = Hyperparams {
                                            c1,
                                            c2: pick(c2, c1),
                                            c_u,
                                            c_u_star: pick(c_u_star, c_u),
                                            mu1,
                                            mu2: pick(mu2, mu1),
                                            epsilon,
                                            kernel: match gamma {
                                                Some(g) => KernelSpec::Gaussian { gamma: *g },
                                                None => base.kernel,
                                            },
                                            ..base.clone()
                                        };
                                        hp.validate()?;
                                        out.push(hp);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridRow {
    pub hyperparams: Hyperparams,
    pub report: CvReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub best: Hyperparams,
    pub best_report: CvReport,
    /// One row per configuration, in grid order.
    pub table: Vec<GridRow>,
}

/// Exhaustive search; configurations run in parallel and share the folds.
///
/// The best row has the highest mean accuracy, then the smallest `c1 + c2`,
/// then comes first in grid order.
pub fn grid_search(
    method: Method,
    ds: &TaskDataset,
    grid: &GridSpec,
    base: &Hyperparams,
    cfg: &CvConfig,
) -> Result<GridResult> {
    let configs = grid.configurations(base)?;
    let table = configs
        .into_par_iter()
        .map(|hp| {
            let report = cross_validate(method, ds, &hp, cfg)?;
            Ok(GridRow { hyperparams: hp, report })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, row) in table.iter().enumerate().skip(1) {
        let b = &table[best];
        let better = row.report.mean_accuracy > b.report.mean_accuracy
            || (row.report.mean_accuracy == b.report.mean_accuracy
                && row.hyperparams.c1 + row.hyperparams.c2 < b.hyperparams.c1 + b.hyperparams.c2);
        if better {
            best = i;
        }
    }
    Ok(GridResult {
        best: table[best].hyperparams.clone(),
        best_report: table[best].report.clone(),
        table,
    })
}

fn gamma_of(hp: &Hyperparams) -> String {
    match hp.kernel {
        KernelSpec::Gaussian { gamma } => gamma.to_string(),
        KernelSpec::Linear => String::new(),
    }
}

/// One CSV row per configuration.
pub fn write_grid_csv(rows: &[GridRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method", "c1", "c2", "cu", "cu_star", "mu1", "mu2", "epsilon", "gamma",
        "acc_mean", "acc_std_over_folds", "time_s", "unconverged",
    ])?;
    for row in rows {
        let hp = &row.hyperparams;
        let r = &row.report;
        w.write_record([
            r.method.name().to_string(),
            hp.c1.to_string(),
            hp.c2.to_string(),
            hp.c_u.to_string(),
            hp.c_u_star.to_string(),
            hp.mu1.to_string(),
            hp.mu2.to_string(),
            hp.epsilon.to_string(),
            gamma_of(hp),
            r.mean_accuracy.to_string(),
            r.std.to_string(),
            r.wall_time.to_string(),
            r.convergence_flags.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One CSV row per report, with per-fold accuracies.
pub fn write_reports_csv(reports: &[CvReport], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "acc_mean", "acc_std_over_folds", "time_s", "unconverged", "fold_accuracies"])?;
    for r in reports {
        let folds: Vec<String> = r.fold_accuracies.iter().map(f64::to_string).collect();
        w.write_record([
            r.method.name().to_string(),
            r.mean_accuracy.to_string(),
            r.std.to_string(),
            r.wall_time.to_string(),
            r.convergence_flags.to_string(),
            folds.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-text table: method, accuracy with standard deviation, time.
pub fn format_reports(reports: &[CvReport]) -> String {
    let mut s = format!("{:<12} {:>16} {:>10}\n", "Method", "Acc(%) ± Std", "Time(s)");
    for r in reports {
        let acc = format!("{:.2} ± {:.2}", r.mean_accuracy, r.std);
        s.push_str(&format!("{:<12} {:>16} {:>10.4}", r.method.label(), acc, r.wall_time));
        if r.convergence_flags > 0 {
            s.push_str(&format!("  ({} unconverged)", r.convergence_flags));
        }
        s.push('\n');
    }
    s.push_str("(Std is the population standard deviation over folds)\n");
    s
}
