use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{default_feature_names, Task, TaskDataset};
use crate::error::{Error, Result};

/// Parameters of the synthetic multi-task generator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthConfig {
    pub tasks: usize,
    pub per_class: usize,
    pub dimension: usize,
    /// Norm of each task's mean offset.
    pub task_shift: f64,
    /// Standard deviation of the isotropic class noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            tasks: 3,
            per_class: 40,
            dimension: 2,
            task_shift: 1.0,
            noise: 0.3,
            seed: 7,
        }
    }
}

fn gaussian_vector(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| StandardNormal.sample(rng))
}

fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    loop {
        let v = gaussian_vector(rng, d);
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Related-but-distinct binary tasks.
///
/// Every task holds two Gaussian blobs at `offset_t ± w`, where `w` is a unit
/// direction shared by all tasks and `offset_t` has norm `task_shift` in a
/// task-specific random direction.
pub fn synth_multitask(cfg: &SynthConfig) -> Result<TaskDataset> {
    if cfg.tasks < 1 || cfg.per_class < 2 || cfg.dimension < 2 {
        return Err(Error::Config(format!(
            "synthetic data needs tasks >= 1, per_class >= 2, dimension >= 2 (got {}, {}, {})",
            cfg.tasks, cfg.per_class, cfg.dimension
        )));
    }
    if !(cfg.noise >= 0.0 && cfg.task_shift.is_finite() && cfg.noise.is_finite()) {
        return Err(Error::Config("synthetic noise and shift must be finite, noise >= 0".into()));
    }
    let d = cfg.dimension;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let direction = unit_vector(&mut rng, d);
    let mut tasks = Vec::with_capacity(cfg.tasks);
    for t in 0..cfg.tasks {
        let offset = unit_vector(&mut rng, d) * cfg.task_shift;
        let mut blob = |sign: f64| {
            let centre = &offset + &direction * sign;
            let mut m = DMatrix::zeros(cfg.per_class, d);
            for i in 0..cfg.per_class {
                let x = &centre + gaussian_vector(&mut rng, d) * cfg.noise;
                m.set_row(i, &x.transpose());
            }
            m
        };
        let positives = blob(1.0);
        let negatives = blob(-1.0);
        tasks.push(Task::new((t + 1) as u32, positives, negatives));
    }
    TaskDataset::new(tasks, default_feature_names(d))
}
