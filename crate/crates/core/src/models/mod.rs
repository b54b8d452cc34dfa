//! The four multi-task twin classifiers.
//!
//! All four share one assembly: the box-QP variants (`Dmtsvm`, `Umtsvm`) solve
//! the dual of each side by coordinate ascent, the least-squares variants
//! (`MtlsTwsvm`, `LsUmtsvm`) solve one SPD system per side. The baselines are
//! the Universum methods run with the Universum removed.

mod persist;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assembly::{build_blocks, build_kernel_blocks, AugmentedBlocks, Planes, Side, SideAssembly, SideParams};
use crate::data::{normalize, Label, Scaling, TaskDataset};
use crate::error::{Error, Result};
use crate::kernel::{kernel_row, Basis, KernelSpec};
use crate::lsys::solve_spd;
use crate::qp::{solve_box_qp, BoxQpOptions};

pub use persist::{load_model, save_model, MODEL_FORMAT, MODEL_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Dmtsvm,
    MtlsTwsvm,
    Umtsvm,
    LsUmtsvm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Dmtsvm, Method::MtlsTwsvm, Method::Umtsvm, Method::LsUmtsvm];

    /// Command-line spelling.
    pub fn name(self) -> &'static str {
        match self {
            Method::Dmtsvm => "dmtsvm",
            Method::MtlsTwsvm => "mtls-twsvm",
            Method::Umtsvm => "umtsvm",
            Method::LsUmtsvm => "ls-umtsvm",
        }
    }

    /// Table label.
    pub fn label(self) -> &'static str {
        match self {
            Method::Dmtsvm => "DMTSVM",
            Method::MtlsTwsvm => "MTLS-TWSVM",
            Method::Umtsvm => "UMTSVM",
            Method::LsUmtsvm => "LS-UMTSVM",
        }
    }

    pub fn uses_universum(self) -> bool {
        matches!(self, Method::Umtsvm | Method::LsUmtsvm)
    }

    pub fn is_least_squares(self) -> bool {
        matches!(self, Method::MtlsTwsvm | Method::LsUmtsvm)
    }

    /// The same solver without Universum constraints.
    pub fn baseline(self) -> Method {
        match self {
            Method::Umtsvm => Method::Dmtsvm,
            Method::LsUmtsvm => Method::MtlsTwsvm,
            m => m,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dmtsvm" => Ok(Method::Dmtsvm),
            "mtls-twsvm" | "mtls" | "mtlstwsvm" => Ok(Method::MtlsTwsvm),
            "umtsvm" => Ok(Method::Umtsvm),
            "ls-umtsvm" | "lsumtsvm" => Ok(Method::LsUmtsvm),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected dmtsvm, mtls-twsvm, umtsvm, ls-umtsvm)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub c1: f64,
    pub c2: f64,
    /// Universum penalty of the first problem; 0 drops the Universum rows.
    pub c_u: f64,
    /// Universum penalty of the second problem.
    pub c_u_star: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub epsilon: f64,
    pub kernel: KernelSpec,
    /// Gram regularization relative to the mean Gram diagonal.
    pub delta: f64,
    pub qp_tol: f64,
    pub max_iter: usize,
    /// Evaluate a linear kernel through the training basis as well.
    #[serde(default)]
    pub kernel_basis: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            c1: 1.0,
            c2: 1.0,
            c_u: 0.5,
            c_u_star: 0.5,
            mu1: 1.0,
            mu2: 1.0,
            epsilon: 0.3,
            kernel: KernelSpec::Linear,
            delta: 1e-6,
            qp_tol: 1e-6,
            max_iter: 10_000,
            kernel_basis: false,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Validation(format!("{name} must be positive and finite, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Validation(format!("{name} must be non-negative and finite, got {v}")))
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        positive("c1", self.c1)?;
        positive("c2", self.c2)?;
        non_negative("cu", self.c_u)?;
        non_negative("cu-star", self.c_u_star)?;
        positive("mu1", self.mu1)?;
        positive("mu2", self.mu2)?;
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Validation(format!(
                "epsilon must lie in (0,1), got {}",
                self.epsilon
            )));
        }
        self.kernel.validate()?;
        non_negative("delta", self.delta)?;
        positive("qp-tol", self.qp_tol)?;
        if self.max_iter == 0 {
            return Err(Error::Validation("max-iter must be at least 1".into()));
        }
        Ok(())
    }

    fn qp_options(&self) -> BoxQpOptions {
        BoxQpOptions {
            tol: self.qp_tol,
            max_iter: self.max_iter,
            ..Default::default()
        }
    }
}

/// Solver output for one side: multipliers of the class rows followed by
/// those of the Universum rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SideSolution {
    pub multipliers: DVector<f64>,
    pub class_rows: usize,
    /// Dual objective value at the solution.
    pub dual_objective: f64,
    /// Primal objective at the recovered planes.
    pub primal_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// KKT violation (QP) or relative system residual (least squares).
    pub residual: f64,
    pub delta_global: f64,
    pub delta_tasks: Vec<f64>,
}

impl SideSolution {
    pub fn class_multipliers(&self) -> DVector<f64> {
        self.multipliers.rows(0, self.class_rows).into_owned()
    }

    pub fn universum_multipliers(&self) -> DVector<f64> {
        let n = self.multipliers.len() - self.class_rows;
        self.multipliers.rows(self.class_rows, n).into_owned()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    pub first: SideSolution,
    pub second: SideSolution,
}

impl DualSolution {
    pub fn alpha1(&self) -> DVector<f64> {
        self.first.class_multipliers()
    }

    pub fn alpha2(&self) -> DVector<f64> {
        self.first.universum_multipliers()
    }

    pub fn alpha1_star(&self) -> DVector<f64> {
        self.second.class_multipliers()
    }

    pub fn alpha2_star(&self) -> DVector<f64> {
        self.second.universum_multipliers()
    }

    pub fn converged(&self) -> bool {
        self.first.converged && self.second.converged
    }
}

/// Fitted planes. The plane of task `t` is `u0 + u_t` (positive side) and
/// `v0 + v_t` (negative side).
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub method: Method,
    pub hyperparams: Hyperparams,
    pub task_ids: Vec<u32>,
    pub feature_names: Vec<String>,
    pub u0: DVector<f64>,
    pub v0: DVector<f64>,
    pub u_t: Vec<DVector<f64>>,
    pub v_t: Vec<DVector<f64>>,
    pub basis: Option<Basis>,
    /// Applied to raw rows before evaluation.
    pub scaling: Option<Scaling>,
    /// Present on freshly fitted models, not persisted.
    pub solution: Option<DualSolution>,
}

impl TrainedModel {
    /// Assembles a model from explicit planes.
    #[allow(clippy::too_many_arguments)]
    pub fn from_planes(
        method: Method,
        hyperparams: Hyperparams,
        task_ids: Vec<u32>,
        feature_names: Vec<String>,
        first: Planes,
        second: Planes,
        basis: Option<Basis>,
    ) -> Result<Self> {
        let width = match &basis {
            Some(b) => b.len() + 1,
            None => feature_names.len() + 1,
        };
        let n = task_ids.len();
        for (name, p) in [("u", &first), ("v", &second)] {
            if p.offsets.len() != n {
                return Err(Error::dimension(format!("{name} task offsets"), n, p.offsets.len()));
            }
            for v in std::iter::once(&p.common).chain(&p.offsets) {
                if v.len() != width {
                    return Err(Error::dimension(format!("{name} plane"), width, v.len()));
                }
            }
        }
        if let Some(b) = &basis {
            if b.dimension() != feature_names.len() {
                return Err(Error::dimension("basis", feature_names.len(), b.dimension()));
            }
        }
        Ok(TrainedModel {
            method,
            hyperparams,
            task_ids,
            feature_names,
            u0: first.common,
            v0: second.common,
            u_t: first.offsets,
            v_t: second.offsets,
            basis,
            scaling: None,
            solution: None,
        })
    }

    pub fn with_scaling(mut self, scaling: Scaling) -> Self {
        self.scaling = Some(scaling);
        self
    }

    pub fn dimension(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_tasks(&self) -> usize {
        self.task_ids.len()
    }

    pub fn converged(&self) -> bool {
        self.solution.as_ref().is_none_or(DualSolution::converged)
    }

    fn task_index(&self, task_id: u32) -> Result<usize> {
        self.task_ids
            .iter()
            .position(|&t| t == task_id)
            .ok_or(Error::UnknownTask(task_id))
    }

    /// `[x; 1]`, or `[K(x, D'); 1]` when a basis is stored.
    fn lift(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.dimension() {
            return Err(Error::dimension("feature row", self.dimension(), x.len()));
        }
        let scaled;
        let x = match &self.scaling {
            Some(s) => {
                scaled = s.apply_checked(x)?;
                &scaled[..]
            }
            None => x,
        };
        let mut z = match &self.basis {
            Some(b) => kernel_row(x, b, self.hyperparams.kernel)?,
            None => x.to_vec(),
        };
        z.push(1.0);
        Ok(DVector::from_vec(z))
    }

    /// Per-task plane pair `(u0 + u_t, v0 + v_t)`.
    pub fn task_planes(&self, task_id: u32) -> Result<(DVector<f64>, DVector<f64>)> {
        let t = self.task_index(task_id)?;
        Ok((&self.u0 + &self.u_t[t], &self.v0 + &self.v_t[t]))
    }

    /// `(|z'(u0 + u_t)|, |z'(v0 + v_t)|)`
    pub fn distances(&self, x: &[f64], task_id: u32) -> Result<(f64, f64)> {
        let (u, v) = self.task_planes(task_id)?;
        let z = self.lift(x)?;
        Ok((z.dot(&u).abs(), z.dot(&v).abs()))
    }

    /// Nearest plane wins; ties go to the positive class.
    pub fn predict(&self, x: &[f64], task_id: u32) -> Result<Label> {
        let (d1, d2) = self.distances(x, task_id)?;
        Ok(if d1 <= d2 { Label::Positive } else { Label::Negative })
    }

    pub fn predict_rows(&self, rows: &DMatrix<f64>, task_ids: &[u32]) -> Result<Vec<Label>> {
        if rows.nrows() != task_ids.len() {
            return Err(Error::dimension("task ids", rows.nrows(), task_ids.len()));
        }
        let planes = self
            .task_ids
            .iter()
            .map(|&t| self.task_planes(t))
            .collect::<Result<Vec<_>>>()?;
        rows.row_iter()
            .zip(task_ids)
            .map(|(r, &t)| {
                let (u, v) = &planes[self.task_index(t)?];
                let x: Vec<f64> = r.iter().copied().collect();
                let z = self.lift(&x)?;
                Ok(if z.dot(u).abs() <= z.dot(v).abs() {
                    Label::Positive
                } else {
                    Label::Negative
                })
            })
            .collect()
    }

    /// Predictions and true labels for every labeled row, task by task.
    pub fn predict_dataset(&self, ds: &TaskDataset) -> Result<(Vec<Label>, Vec<Label>)> {
        let mut pred = Vec::with_capacity(ds.n_labeled());
        let mut truth = Vec::with_capacity(ds.n_labeled());
        for task in ds.tasks() {
            for (block, label) in [(&task.positives, Label::Positive), (&task.negatives, Label::Negative)] {
                let ids = vec![task.task_id; block.nrows()];
                pred.extend(self.predict_rows(block, &ids)?);
                truth.extend(std::iter::repeat_n(label, block.nrows()));
            }
        }
        Ok((pred, truth))
    }

    /// `(||u_t||, ||v_t||)` per task.
    pub fn offset_norms(&self) -> Vec<(f64, f64)> {
        self.u_t.iter().zip(&self.v_t).map(|(u, v)| (u.norm(), v.norm())).collect()
    }
}

fn side_blocks(blocks: &AugmentedBlocks, side: Side) -> (&[DMatrix<f64>], &[DMatrix<f64>], f64) {
    match side {
        Side::First => (&blocks.a_t, &blocks.b_t, -1.0),
        Side::Second => (&blocks.b_t, &blocks.a_t, 1.0),
    }
}

/// Primal objective of one side at the given planes, with the same
/// regularized Grams as the dual. Slacks are the hinge (`squared == false`)
/// or the equality residuals (`squared == true`) implied by the planes.
pub fn primal_objective(
    blocks: &AugmentedBlocks,
    side: Side,
    params: &SideParams,
    planes: &Planes,
    deltas: (f64, &[f64]),
    squared: bool,
) -> f64 {
    let (own_t, other_t, sign) = side_blocks(blocks, side);
    let own = match side {
        Side::First => &blocks.a,
        Side::Second => &blocks.b,
    };
    let t_count = blocks.n_tasks() as f64;
    let quad = |m: &DMatrix<f64>, w: &DVector<f64>, d: f64| (m * w).norm_squared() + d * w.norm_squared();

    let mut j = 0.5 * quad(own, &planes.common, deltas.0);
    let mut slack = 0.0;
    let mut u_slack = 0.0;
    for t in 0..blocks.n_tasks() {
        let off = &planes.offsets[t];
        j += params.mu / (2.0 * t_count) * quad(&own_t[t], off, deltas.1[t]);
        let w = &planes.common + off;
        let xi = (&other_t[t] * &w).map(|r| 1.0 - sign * r);
        let psi = (&blocks.u_t[t] * &w).map(|r| -1.0 + params.epsilon + sign * r);
        if squared {
            slack += xi.norm_squared() / 2.0;
            u_slack += psi.norm_squared() / 2.0;
        } else {
            slack += xi.iter().map(|v| v.max(0.0)).sum::<f64>();
            u_slack += psi.iter().map(|v| v.max(0.0)).sum::<f64>();
        }
    }
    j += params.c * slack;
    if params.c_u > 0.0 {
        j += params.c_u * u_slack;
    }
    j
}

fn model_blocks(ds: &TaskDataset, hp: &Hyperparams) -> Result<AugmentedBlocks> {
    if hp.kernel_basis {
        build_kernel_blocks(ds, hp.kernel)
    } else {
        build_blocks(ds, hp.kernel)
    }
}

fn solve_side(blocks: &AugmentedBlocks, side: Side, hp: &Hyperparams, least_squares: bool) -> Result<(Planes, SideSolution)> {
    let params = SideParams::of(hp, side);
    let asm = SideAssembly::new(blocks, side, params)?;
    let (x, dual_objective, iterations, converged, residual) = if least_squares {
        let sys = asm.ls_system();
        let sol = solve_spd(&sys.m, &sys.rhs)?;
        let obj = sys.rhs.dot(&sol.x) - 0.5 * sol.x.dot(&(&sys.m * &sol.x));
        (sol.x, obj, 1, true, sol.residual)
    } else {
        let sys = asm.dual_system();
        let r = solve_box_qp(&sys.h, &sys.f, &sys.ub, &hp.qp_options())?;
        (r.alpha, r.objective, r.iterations, r.converged, r.kkt_residual)
    };
    let planes = asm.recover(&x)?;
    let (dg, dt) = asm.deltas();
    let primal = primal_objective(blocks, side, &params, &planes, (dg, &dt), least_squares);
    Ok((
        planes,
        SideSolution {
            multipliers: x,
            class_rows: asm.class_rows,
            dual_objective,
            primal_objective: primal,
            iterations,
            converged,
            residual,
            delta_global: dg,
            delta_tasks: dt,
        },
    ))
}

fn fit_with(method: Method, ds: &TaskDataset, hp: &Hyperparams) -> Result<TrainedModel> {
    hp.validate()?;
    let ds = if method.uses_universum() {
        ds.clone()
    } else {
        ds.without_universum()
    };
    let blocks = model_blocks(&ds, hp)?;
    let ls = method.is_least_squares();
    let (first, s1) = solve_side(&blocks, Side::First, hp, ls)?;
    let (second, s2) = solve_side(&blocks, Side::Second, hp, ls)?;
    let mut model = TrainedModel::from_planes(
        method,
        hp.clone(),
        ds.task_ids(),
        ds.feature_names().to_vec(),
        first,
        second,
        blocks.basis,
    )?;
    model.solution = Some(DualSolution { first: s1, second: s2 });
    Ok(model)
}

/// Box-QP twin classifier without Universum.
pub fn fit_dmtsvm(ds: &TaskDataset, hp: &Hyperparams) -> Result<TrainedModel> {
    fit_with(Method::Dmtsvm, ds, hp)
}

/// Box-QP twin classifier with Universum constraints.
pub fn fit_umtsvm(ds: &TaskDataset, hp: &Hyperparams) -> Result<TrainedModel> {
    fit_with(Method::Umtsvm, ds, hp)
}

/// Least-squares twin classifier without Universum.
pub fn fit_mtls_twsvm(ds: &TaskDataset, hp: &Hyperparams) -> Result<TrainedModel> {
    fit_with(Method::MtlsTwsvm, ds, hp)
}

/// Least-squares twin classifier with Universum equalities.
pub fn fit_ls_umtsvm(ds: &TaskDataset, hp: &Hyperparams) -> Result<TrainedModel> {
    fit_with(Method::LsUmtsvm, ds, hp)
}

pub fn fit(method: Method, ds: &TaskDataset, hp: &Hyperparams) -> Result<TrainedModel> {
    fit_with(method, ds, hp)
}

/// Min-max normalizes `ds`, fits, and stores the scaling in the model so that
/// raw rows can be passed to `predict`.
pub fn fit_normalized(method: Method, ds: &TaskDataset, hp: &Hyperparams) -> Result<TrainedModel> {
    let (scaled, scaling) = normalize(ds)?;
    Ok(fit(method, &scaled, hp)?.with_scaling(scaling))
}
