//! Universum rows built as midpoints of randomly paired positive/negative
//! samples.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Task, TaskDataset};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniversumConfig {
    /// Share of the smaller class paired off, in `(0, 1]`.
    pub fraction: f64,
    pub seed: u64,
    /// Pair within each task; otherwise pool all tasks and split the result.
    pub per_task: bool,
    /// Remove the paired samples from the labeled data.
    pub consume: bool,
}

impl Default for UniversumConfig {
    fn default() -> Self {
        UniversumConfig {
            fraction: 0.5,
            seed: 0,
            per_task: true,
            consume: false,
        }
    }
}

impl UniversumConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::Validation(format!(
                "universum fraction must lie in (0,1], got {}",
                self.fraction
            )));
        }
        Ok(())
    }
}

/// Row `i` is the midpoint of `pos[i]` and `neg[i]`.
fn midpoints(pos: &[(usize, usize)], neg: &[(usize, usize)], ds: &TaskDataset) -> DMatrix<f64> {
    let tasks = ds.tasks();
    DMatrix::from_fn(pos.len(), ds.dimension(), |i, c| {
        let (tp, rp) = pos[i];
        let (tn, rn) = neg[i];
        (tasks[tp].positives[(rp, c)] + tasks[tn].negatives[(rn, c)]) / 2.0
    })
}

fn drop_rows(m: &DMatrix<f64>, used: &[usize]) -> DMatrix<f64> {
    let keep: Vec<usize> = (0..m.nrows()).filter(|r| !used.contains(r)).collect();
    m.select_rows(&keep)
}

/// Removes the paired samples; each entry of `used` is `(task, row)`.
fn consume(ds: &TaskDataset, used_pos: &[(usize, usize)], used_neg: &[(usize, usize)]) -> Result<Vec<Task>> {
    ds.tasks()
        .iter()
        .enumerate()
        .map(|(t, task)| {
            let rows = |used: &[(usize, usize)]| -> Vec<usize> {
                used.iter().filter(|(ut, _)| *ut == t).map(|&(_, r)| r).collect()
            };
            let out = Task {
                task_id: task.task_id,
                positives: drop_rows(&task.positives, &rows(used_pos)),
                negatives: drop_rows(&task.negatives, &rows(used_neg)),
                universum: task.universum.clone(),
            };
            if out.positives.nrows() == 0 || out.negatives.nrows() == 0 {
                return Err(Error::Validation(format!(
                    "consuming universum pairs leaves task {} without one class",
                    task.task_id
                )));
            }
            Ok(out)
        })
        .collect()
}

fn shuffled(rng: &mut ChaCha8Rng, task: usize, n: usize) -> Vec<(usize, usize)> {
    let mut v: Vec<(usize, usize)> = (0..n).map(|r| (task, r)).collect();
    v.shuffle(rng);
    v
}

/// Populates the Universum blocks of `ds`, replacing any existing ones.
pub fn generate_universum(ds: &TaskDataset, cfg: &UniversumConfig) -> Result<TaskDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut used_pos, mut used_neg) = (Vec::new(), Vec::new());

    let result = if cfg.per_task {
        let mut blocks = Vec::with_capacity(ds.n_tasks());
        for (t, task) in ds.tasks().iter().enumerate() {
            let pos = shuffled(&mut rng, t, task.positives.nrows());
            let neg = shuffled(&mut rng, t, task.negatives.nrows());
            let m = (cfg.fraction * pos.len().min(neg.len()) as f64).floor() as usize;
            blocks.push(midpoints(&pos[..m], &neg[..m], ds));
            used_pos.extend_from_slice(&pos[..m]);
            used_neg.extend_from_slice(&neg[..m]);
        }
        ds.with_universum(blocks)?
    } else {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (t, task) in ds.tasks().iter().enumerate() {
            pos.extend((0..task.positives.nrows()).map(|r| (t, r)));
            neg.extend((0..task.negatives.nrows()).map(|r| (t, r)));
        }
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        let m = (cfg.fraction * pos.len().min(neg.len()) as f64).floor() as usize;
        let u = midpoints(&pos[..m], &neg[..m], ds);
        used_pos.extend_from_slice(&pos[..m]);
        used_neg.extend_from_slice(&neg[..m]);
        split_universum_by_task(&u, ds, None)?
    };

    if cfg.consume {
        let mut tasks = consume(ds, &used_pos, &used_neg)?;
        for (task, generated) in tasks.iter_mut().zip(result.tasks()) {
            task.universum = generated.universum.clone();
        }
        TaskDataset::new(tasks, ds.feature_names().to_vec())
    } else {
        Ok(result)
    }
}

/// Row counts per task for `n` rows, by largest remainder.
fn apportion(n: usize, weights: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = weights.iter().map(|w| w * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // Stable sort keeps earlier tasks first among equal remainders.
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra)
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Assigns contiguous slices of `u` to the tasks of `ds`.
///
/// Without `weights`, each task's share is proportional to its labeled size.
pub fn split_universum_by_task(
    u: &DMatrix<f64>,
    ds: &TaskDataset,
    weights: Option<&[f64]>,
) -> Result<TaskDataset> {
    if u.ncols() != ds.dimension() {
        return Err(Error::dimension("universum rows", ds.dimension(), u.ncols()));
    }
    let t = ds.n_tasks();
    if u.nrows() < t {
        return Err(Error::Validation(format!(
            "cannot split {} universum rows over {t} tasks",
            u.nrows()
        )));
    }
    let weights: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != t {
                return Err(Error::dimension("universum weights", t, w.len()));
            }
            let sum: f64 = w.iter().sum();
            if w.iter().any(|&x| !(x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(
                    "universum weights must be non-negative and sum to 1".into(),
                ));
            }
            w.to_vec()
        }
        None => {
            let total = ds.n_labeled() as f64;
            ds.tasks().iter().map(|x| x.n_labeled() as f64 / total).collect()
        }
    };
    let mut start = 0;
    let blocks = apportion(u.nrows(), &weights)
        .into_iter()
        .map(|n| {
            let b = u.rows(start, n).into_owned();
            start += n;
            b
        })
        .collect();
    ds.with_universum(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_multitask, SynthConfig};

    fn task(id: u32, pos: usize, neg: usize, d: usize) -> Task {
        Task::new(
            id,
            DMatrix::from_fn(pos, d, |i, c| (i * d + c) as f64),
            DMatrix::from_fn(neg, d, |i, c| -((i * d + c) as f64) - 1.0),
        )
    }

    fn names(d: usize) -> Vec<String> {
        crate::data::default_feature_names(d)
    }

    #[test]
    fn single_pair_midpoint() {
        let ds = TaskDataset::new(
            vec![Task::new(
                1,
                DMatrix::from_row_slice(1, 2, &[0.0, 0.0]),
                DMatrix::from_row_slice(1, 2, &[2.0, 2.0]),
            )],
            names(2),
        )
        .unwrap();
        let out = generate_universum(&ds, &UniversumConfig { fraction: 1.0, ..Default::default() }).unwrap();
        assert_eq!(out.tasks()[0].universum, DMatrix::from_row_slice(1, 2, &[1.0, 1.0]));
    }

    #[test]
    fn half_of_smaller_class() {
        let ds = TaskDataset::new(vec![task(1, 10, 6, 2)], names(2)).unwrap();
        let out = generate_universum(&ds, &UniversumConfig::default()).unwrap();
        assert_eq!(out.tasks()[0].universum.nrows(), 3);
        assert_eq!(out.n_labeled(), 16);
    }

    #[test]
    fn deterministic_for_seed() {
        let ds = synth_multitask(&SynthConfig::default()).unwrap();
        let cfg = UniversumConfig { seed: 5, ..Default::default() };
        assert_eq!(generate_universum(&ds, &cfg).unwrap(), generate_universum(&ds, &cfg).unwrap());
        let other = UniversumConfig { seed: 6, ..cfg };
        assert_ne!(generate_universum(&ds, &cfg).unwrap(), generate_universum(&ds, &other).unwrap());
    }

    #[test]
    fn consume_removes_pairs() {
        let ds = TaskDataset::new(vec![task(1, 10, 6, 2)], names(2)).unwrap();
        let out = generate_universum(&ds, &UniversumConfig { consume: true, ..Default::default() }).unwrap();
        let t = &out.tasks()[0];
        assert_eq!((t.positives.nrows(), t.negatives.nrows(), t.universum.nrows()), (7, 3, 3));
        let all = generate_universum(&ds, &UniversumConfig { consume: true, fraction: 1.0, ..Default::default() });
        assert!(matches!(all, Err(Error::Validation(_))));
    }

    #[test]
    fn fraction_out_of_range() {
        let ds = TaskDataset::new(vec![task(1, 4, 4, 2)], names(2)).unwrap();
        for f in [0.0, 1.5, f64::NAN] {
            assert!(generate_universum(&ds, &UniversumConfig { fraction: f, ..Default::default() }).is_err());
        }
    }

    #[test]
    fn split_examples() {
        let two = TaskDataset::new(vec![task(1, 5, 5, 2), task(2, 5, 5, 2)], names(2)).unwrap();
        let u = DMatrix::from_fn(10, 2, |i, _| i as f64);
        let sizes = |ds: &TaskDataset| ds.tasks().iter().map(|t| t.universum.nrows()).collect::<Vec<_>>();
        assert_eq!(sizes(&split_universum_by_task(&u, &two, None).unwrap()), vec![5, 5]);
        let weighted = split_universum_by_task(&u, &two, Some(&[0.7, 0.3])).unwrap();
        assert_eq!(sizes(&weighted), vec![7, 3]);
        assert_eq!(weighted.tasks()[1].universum, u.rows(7, 3).into_owned());

        let uneven = TaskDataset::new(vec![task(1, 15, 15, 2), task(2, 5, 5, 2)], names(2)).unwrap();
        let u8 = DMatrix::zeros(8, 2);
        assert_eq!(sizes(&split_universum_by_task(&u8, &uneven, None).unwrap()), vec![6, 2]);
    }

    #[test]
    fn split_rejects_too_few_rows_and_bad_weights() {
        let two = TaskDataset::new(vec![task(1, 5, 5, 2), task(2, 5, 5, 2)], names(2)).unwrap();
        assert!(split_universum_by_task(&DMatrix::zeros(1, 2), &two, None).is_err());
        assert!(split_universum_by_task(&DMatrix::zeros(4, 2), &two, Some(&[0.5, 0.6])).is_err());
        assert!(split_universum_by_task(&DMatrix::zeros(4, 3), &two, None).is_err());
    }

    #[test]
    fn global_mode_covers_all_rows() {
        let ds = synth_multitask(&SynthConfig { tasks: 3, per_class: 7, ..Default::default() }).unwrap();
        let out = generate_universum(&ds, &UniversumConfig { per_task: false, ..Default::default() }).unwrap();
        assert_eq!(out.n_universum(), 10);
    }

    fn is_midpoint(row: &[f64], task: &Task) -> bool {
        task.positives.row_iter().any(|p| {
            task.negatives.row_iter().any(|n| {
                row.iter().enumerate().all(|(c, &v)| v == (p[c] + n[c]) / 2.0)
            })
        })
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]
        #[test]
        fn midpoints_bounded_and_inside_hull(
            seed in 0u64..500,
            per_class in 2usize..12,
            fraction in 0.05f64..=1.0,
        ) {
            let ds = synth_multitask(&SynthConfig { tasks: 2, per_class, seed, ..Default::default() }).unwrap();
            let out = generate_universum(&ds, &UniversumConfig { fraction, seed, ..Default::default() }).unwrap();
            for (orig, t) in ds.tasks().iter().zip(out.tasks()) {
                proptest::prop_assert_eq!(&orig.positives, &t.positives);
                proptest::prop_assert!(t.universum.nrows() <= orig.positives.nrows().min(orig.negatives.nrows()));
                for r in t.universum.row_iter() {
                    let row: Vec<f64> = r.iter().copied().collect();
                    proptest::prop_assert!(is_midpoint(&row, orig));
                    for c in 0..ds.dimension() {
                        let col_min = orig.positives.column(c).min().min(orig.negatives.column(c).min());
                        let col_max = orig.positives.column(c).max().max(orig.negatives.column(c).max());
                        proptest::prop_assert!(row[c] >= col_min && row[c] <= col_max);
                    }
                }
            }
        }
    }
}
