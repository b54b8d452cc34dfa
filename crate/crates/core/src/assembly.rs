//! Augmented blocks and the dual / least-squares system matrices.
//!
//! For the first problem the plane `u` is fitted to the positive block `A` and
//! pushed away from the negative block `B` and the Universum block `U`. Writing
//! `G = [B; -U]` and `K = (A'A + dI)^-1`, stationarity gives
//!
//! ```text
//! u0  = -K G' x
//! u_t = -(T/mu1) K_t G_t' x_t
//! H   = G K G' + (T/mu1) blkdiag(G_t K_t G_t')
//! ```
//!
//! where `x = [alpha; beta]` stacks the multipliers of the class rows and the
//! Universum rows. The second problem swaps the roles of `A` and `B`, uses
//! `mu2`, `c2`, `c_u*` and recovers `v` with the opposite sign. The QP dual is
//! `max -1/2 x'Hx + f'x` over a box; the least-squares variant solves
//! `(H + diag(I/c, I/c_u)) x = f`. In both, `f = [e; (-1 + eps) e_u]`.

use std::ops::Range;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::data::TaskDataset;
use crate::error::{Error, Result};
use crate::kernel::{kernel_matrix, Basis, KernelSpec};
use crate::models::Hyperparams;

/// Data blocks with an all-ones column appended.
#[derive(Clone, Debug)]
pub struct AugmentedBlocks {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub a_t: Vec<DMatrix<f64>>,
    pub b_t: Vec<DMatrix<f64>>,
    pub u_t: Vec<DMatrix<f64>>,
    pub kernel: KernelSpec,
    /// Present when the blocks are kernel evaluations against the basis.
    pub basis: Option<Basis>,
}

impl AugmentedBlocks {
    pub fn n_tasks(&self) -> usize {
        self.a_t.len()
    }

    pub fn is_kernelized(&self) -> bool {
        self.basis.is_some()
    }

    /// Column count of every block (`d + 1` or `m + 1`).
    pub fn width(&self) -> usize {
        self.a.ncols()
    }
}

fn augment(x: &DMatrix<f64>) -> DMatrix<f64> {
    let c = x.ncols();
    x.clone().insert_column(c, 1.0)
}

fn vstack(blocks: &[DMatrix<f64>], ncols: usize) -> DMatrix<f64> {
    let rows = blocks.iter().map(DMatrix::nrows).sum();
    let mut out = DMatrix::zeros(rows, ncols);
    let mut r = 0;
    for b in blocks {
        out.rows_mut(r, b.nrows()).copy_from(b);
        r += b.nrows();
    }
    out
}

fn blocks_from(
    ds: &TaskDataset,
    feature: impl Fn(&DMatrix<f64>) -> Result<DMatrix<f64>>,
    kernel: KernelSpec,
    basis: Option<Basis>,
) -> Result<AugmentedBlocks> {
    let mut a_t = Vec::with_capacity(ds.n_tasks());
    let mut b_t = Vec::with_capacity(ds.n_tasks());
    let mut u_t = Vec::with_capacity(ds.n_tasks());
    for task in ds.tasks() {
        a_t.push(augment(&feature(&task.positives)?));
        b_t.push(augment(&feature(&task.negatives)?));
        u_t.push(augment(&feature(&task.universum)?));
    }
    let width = a_t[0].ncols();
    Ok(AugmentedBlocks {
        a: vstack(&a_t, width),
        b: vstack(&b_t, width),
        u: vstack(&u_t, width),
        a_t,
        b_t,
        u_t,
        kernel,
        basis,
    })
}

/// Builds the blocks for `spec`: raw features for the linear kernel, kernel
/// evaluations against the training basis for the Gaussian kernel.
pub fn build_blocks(ds: &TaskDataset, spec: KernelSpec) -> Result<AugmentedBlocks> {
    match spec {
        KernelSpec::Linear => blocks_from(ds, |x| Ok(x.clone()), spec, None),
        KernelSpec::Gaussian { .. } => build_kernel_blocks(ds, spec),
    }
}

/// Always evaluates `spec` against the basis, even for the linear kernel.
pub fn build_kernel_blocks(ds: &TaskDataset, spec: KernelSpec) -> Result<AugmentedBlocks> {
    spec.validate()?;
    let basis = Basis::from_dataset(ds);
    blocks_from(ds, |x| kernel_matrix(x, &basis, spec), spec, Some(basis.clone()))
}

/// Cholesky factor of `G'G + dI`.
#[derive(Clone, Debug)]
pub struct RegGram {
    chol: Cholesky<f64, Dyn>,
    delta: f64,
}

impl RegGram {
    pub fn new(g_base: &DMatrix<f64>, delta: f64) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::Validation(format!(
                "gram regularization must be finite and >= 0, got {delta}"
            )));
        }
        if g_base.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("gram base contains non-finite values".into()));
        }
        let p = g_base.ncols();
        let gram = g_base.transpose() * g_base + DMatrix::identity(p, p) * delta;
        let chol = Cholesky::new(gram).ok_or_else(|| {
            Error::Numeric(format!(
                "gram matrix ({p}x{p}) is singular; increase the regularization (delta = {delta:e})"
            ))
        })?;
        Ok(RegGram { chol, delta })
    }

    /// `delta = rel * mean(diag(G'G))`.
    pub fn relative(g_base: &DMatrix<f64>, rel: f64) -> Result<Self> {
        let mean_diag = if g_base.ncols() == 0 {
            0.0
        } else {
            g_base.iter().map(|v| v * v).sum::<f64>() / g_base.ncols() as f64
        };
        RegGram::new(g_base, rel * mean_diag)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `(G'G + dI)^-1 rhs`
    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    /// `L^-1 rhs` with `L L' = G'G + dI`.
    fn whiten(&self, rhs: DMatrix<f64>) -> DMatrix<f64> {
        forward_substitute(self.chol.l_dirty(), rhs)
    }
}

/// Rows per block in [`forward_substitute`].
const SUBSTITUTION_BLOCK: usize = 64;

/// Solves `L X = B` for lower-triangular `L`, reading only the lower
/// triangle. Works through diagonal blocks so that most of the arithmetic is
/// a matrix product.
fn forward_substitute(l: &DMatrix<f64>, mut b: DMatrix<f64>) -> DMatrix<f64> {
    let p = l.nrows();
    let mut start = 0;
    while start < p {
        let size = SUBSTITUTION_BLOCK.min(p - start);
        let end = start + size;
        let mut block = b.rows(start, size).into_owned();
        let solved = l
            .view((start, start), (size, size))
            .solve_lower_triangular_mut(&mut block);
        debug_assert!(solved, "cholesky factor has a positive diagonal");
        if end < p {
            b.rows_mut(end, p - end)
                .gemm(-1.0, &l.view((end, start), (p - end, size)), &block, 1.0);
        }
        b.rows_mut(start, size).copy_from(&block);
        start = end;
    }
    b
}

/// `(G'G + dI)^-1 M'`, by factorization.
pub fn reg_gram_inverse_apply(
    g_base: &DMatrix<f64>,
    m: &DMatrix<f64>,
    delta: f64,
) -> Result<DMatrix<f64>> {
    if m.ncols() != g_base.ncols() {
        return Err(Error::dimension("gram application", g_base.ncols(), m.ncols()));
    }
    Ok(RegGram::new(g_base, delta)?.solve(&m.transpose()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// Plane close to the positives: `u`.
    First,
    /// Plane close to the negatives: `v`.
    Second,
}

/// `max -1/2 x'Hx + f'x  s.t. 0 <= x <= ub`
#[derive(Clone, Debug)]
pub struct DualSystem {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub ub: DVector<f64>,
}

/// `M x = rhs`
#[derive(Clone, Debug)]
pub struct LsSystem {
    pub m: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

/// Common plane and per-task offsets, each `[w; b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Planes {
    pub common: DVector<f64>,
    pub offsets: Vec<DVector<f64>>,
}

/// Hyperparameters of one side, resolved from [`Hyperparams`].
#[derive(Clone, Copy, Debug)]
pub struct SideParams {
    pub c: f64,
    pub c_u: f64,
    pub mu: f64,
    pub epsilon: f64,
    pub delta: f64,
}

impl SideParams {
    pub fn of(hp: &Hyperparams, side: Side) -> Self {
        match side {
            Side::First => SideParams {
                c: hp.c1,
                c_u: hp.c_u,
                mu: hp.mu1,
                epsilon: hp.epsilon,
                delta: hp.delta,
            },
            Side::Second => SideParams {
                c: hp.c2,
                c_u: hp.c_u_star,
                mu: hp.mu2,
                epsilon: hp.epsilon,
                delta: hp.delta,
            },
        }
    }
}

/// Everything one side needs: the Hessian, the linear term, and the
/// factorizations reused for plane recovery.
#[derive(Clone, Debug)]
pub struct SideAssembly {
    pub side: Side,
    pub params: SideParams,
    /// `Q + (T/mu) P`
    pub h: DMatrix<f64>,
    /// `[e; (-1 + eps) e_u]`
    pub f: DVector<f64>,
    pub class_rows: usize,
    pub universum_rows: usize,
    /// `T / mu`
    pub coupling: f64,
    global: RegGram,
    per_task: Vec<RegGram>,
    g: DMatrix<f64>,
    g_t: Vec<DMatrix<f64>>,
    /// Per task: indices of its class rows and Universum rows in `x`.
    index: Vec<(Range<usize>, Range<usize>)>,
}

impl SideAssembly {
    pub fn new(blocks: &AugmentedBlocks, side: Side, params: SideParams) -> Result<Self> {
        let (own, own_t, other_t) = match side {
            Side::First => (&blocks.a, &blocks.a_t, &blocks.b_t),
            Side::Second => (&blocks.b, &blocks.b_t, &blocks.a_t),
        };
        let width = blocks.width();
        // c_u = 0 removes the Universum constraints from this side entirely.
        let use_universum = params.c_u > 0.0;
        let u_t: Vec<DMatrix<f64>> = blocks
            .u_t
            .iter()
            .map(|u| {
                if use_universum {
                    -u
                } else {
                    DMatrix::zeros(0, width)
                }
            })
            .collect();

        let class_rows: usize = other_t.iter().map(DMatrix::nrows).sum();
        let universum_rows: usize = u_t.iter().map(DMatrix::nrows).sum();
        let n = class_rows + universum_rows;

        let mut g_t = Vec::with_capacity(other_t.len());
        let mut index = Vec::with_capacity(other_t.len());
        let (mut co, mut uo) = (0, class_rows);
        for (o, u) in other_t.iter().zip(&u_t) {
            g_t.push(vstack(&[o.clone(), u.clone()], width));
            index.push((co..co + o.nrows(), uo..uo + u.nrows()));
            co += o.nrows();
            uo += u.nrows();
        }
        let mut stacked = other_t.clone();
        stacked.extend(u_t.iter().cloned());
        let g = vstack(&stacked, width);

        let global = RegGram::relative(own, params.delta)?;
        let per_task = own_t
            .iter()
            .map(|a| RegGram::relative(a, params.delta))
            .collect::<Result<Vec<_>>>()?;
        let coupling = blocks.n_tasks() as f64 / params.mu;

        let w = global.whiten(g.transpose());
        let mut h = w.transpose() * &w;
        for ((gt, k), (ci, ui)) in g_t.iter().zip(&per_task).zip(&index) {
            let wt = k.whiten(gt.transpose());
            let pt = wt.transpose() * &wt;
            let idx: Vec<usize> = ci.clone().chain(ui.clone()).collect();
            for (a, &i) in idx.iter().enumerate() {
                for (b, &j) in idx.iter().enumerate() {
                    h[(i, j)] += coupling * pt[(a, b)];
                }
            }
        }
        symmetrize_upper(&mut h);

        let mut f = DVector::from_element(n, 1.0);
        f.rows_mut(class_rows, universum_rows)
            .fill(-1.0 + params.epsilon);

        Ok(SideAssembly {
            side,
            params,
            h,
            f,
            class_rows,
            universum_rows,
            coupling,
            global,
            per_task,
            g,
            g_t,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.class_rows + self.universum_rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `[c e; c_u e_u]`
    pub fn upper_bounds(&self) -> DVector<f64> {
        let mut ub = DVector::from_element(self.len(), self.params.c);
        ub.rows_mut(self.class_rows, self.universum_rows)
            .fill(self.params.c_u);
        ub
    }

    pub fn dual_system(&self) -> DualSystem {
        DualSystem {
            h: self.h.clone(),
            f: self.f.clone(),
            ub: self.upper_bounds(),
        }
    }

    pub fn ls_system(&self) -> LsSystem {
        let mut m = self.h.clone();
        for i in 0..self.class_rows {
            m[(i, i)] += 1.0 / self.params.c;
        }
        for i in self.class_rows..self.len() {
            m[(i, i)] += 1.0 / self.params.c_u;
        }
        LsSystem {
            m,
            rhs: self.f.clone(),
        }
    }

    /// Regularization actually applied to the global and per-task Grams.
    pub fn deltas(&self) -> (f64, Vec<f64>) {
        (
            self.global.delta(),
            self.per_task.iter().map(RegGram::delta).collect(),
        )
    }

    /// Multipliers of task `t`, gathered from the stacked vector.
    pub fn task_multipliers(&self, x: &DVector<f64>, t: usize) -> DVector<f64> {
        let (ci, ui) = &self.index[t];
        DVector::from_iterator(
            ci.len() + ui.len(),
            ci.clone().chain(ui.clone()).map(|i| x[i]),
        )
    }

    /// Planes from multipliers through the stationarity conditions.
    pub fn recover(&self, x: &DVector<f64>) -> Result<Planes> {
        if x.len() != self.len() {
            return Err(Error::dimension("multipliers", self.len(), x.len()));
        }
        let sign = match self.side {
            Side::First => -1.0,
            Side::Second => 1.0,
        };
        let common = self.global.solve_vec(&(self.g.tr_mul(x))) * sign;
        let offsets = (0..self.g_t.len())
            .map(|t| {
                let xt = self.task_multipliers(x, t);
                self.per_task[t].solve_vec(&self.g_t[t].tr_mul(&xt)) * (sign * self.coupling)
            })
            .collect();
        Ok(Planes { common, offsets })
    }
}

fn symmetrize_upper(h: &mut DMatrix<f64>) {
    let n = h.nrows();
    for j in 0..n {
        for i in 0..j {
            h[(j, i)] = h[(i, j)];
        }
    }
}

pub fn build_dual_system(blocks: &AugmentedBlocks, side: Side, hp: &Hyperparams) -> Result<DualSystem> {
    Ok(SideAssembly::new(blocks, side, SideParams::of(hp, side))?.dual_system())
}

pub fn build_ls_system(blocks: &AugmentedBlocks, side: Side, hp: &Hyperparams) -> Result<LsSystem> {
    Ok(SideAssembly::new(blocks, side, SideParams::of(hp, side))?.ls_system())
}
