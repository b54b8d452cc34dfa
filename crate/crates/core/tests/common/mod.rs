//! Reference computations written independently of the library internals.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use umtsvm::data::TaskDataset;

/// Exact box-QP optimum by enumerating the free/lower/upper status of every
/// coordinate. For each pattern the free block is solved directly; the first
/// feasible pattern that also satisfies the KKT sign conditions is the
/// optimum (the problem is strictly concave).
pub fn enumerate_box_qp(h: &DMatrix<f64>, f: &DVector<f64>, ub: &DVector<f64>) -> (DVector<f64>, f64) {
    let n = f.len();
    let total = 3usize.pow(n as u32);
    let mut status = vec![0u8; n];
    let scale = 1.0 + f.amax() + h.amax() * ub.amax();
    let tol = 1e-9 * scale;
    let mut best: Option<(DVector<f64>, f64)> = None;
    for code in 0..total {
        let mut c = code;
        for s in status.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| status[i] == 0).collect();
        let mut x = DVector::zeros(n);
        for i in 0..n {
            if status[i] == 2 {
                x[i] = ub[i];
            }
        }
        if !free.is_empty() {
            let k = free.len();
            let hff = DMatrix::from_fn(k, k, |a, b| h[(free[a], free[b])]);
            let rhs = DVector::from_fn(k, |a, _| {
                let i = free[a];
                f[i] - (0..n).filter(|&j| status[j] == 2).map(|j| h[(i, j)] * ub[j]).sum::<f64>()
            });
            let Some(sol) = hff.lu().solve(&rhs) else { continue };
            if sol.iter().zip(&free).any(|(&v, &i)| v < -tol || v > ub[i] + tol) {
                continue;
            }
            for (a, &i) in free.iter().enumerate() {
                x[i] = sol[a].clamp(0.0, ub[i]);
            }
        }
        let grad = f - h * &x;
        let obj = f.dot(&x) - 0.5 * x.dot(&(h * &x));
        let kkt = (0..n).all(|i| match status[i] {
            0 => grad[i].abs() <= tol,
            1 => grad[i] <= tol,
            _ => grad[i] >= -tol,
        });
        if kkt {
            return (x, obj);
        }
        if best.as_ref().is_none_or(|(_, b)| obj > *b) {
            best = Some((x, obj));
        }
    }
    best.expect("the origin is always feasible")
}

/// Central finite-difference gradient.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Per-task feature blocks with a trailing ones column, computed directly:
/// raw features, or Gaussian kernel values against the stacked labeled rows
/// (task by task, positives before negatives).
pub struct Blocks {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub u: Vec<DMatrix<f64>>,
}

pub fn blocks(ds: &TaskDataset, gamma: Option<f64>) -> Blocks {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for t in ds.tasks() {
        for m in [&t.positives, &t.negatives] {
            basis.extend(m.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()));
        }
    }
    let lift = |m: &DMatrix<f64>| -> DMatrix<f64> {
        let width = match gamma {
            Some(_) => basis.len(),
            None => m.ncols(),
        };
        DMatrix::from_fn(m.nrows(), width + 1, |i, j| {
            if j == width {
                return 1.0;
            }
            match gamma {
                None => m[(i, j)],
                Some(g) => {
                    let d2: f64 = (0..m.ncols()).map(|c| (m[(i, c)] - basis[j][c]).powi(2)).sum();
                    (-g * d2).exp()
                }
            }
        })
    };
    Blocks {
        a: ds.tasks().iter().map(|t| lift(&t.positives)).collect(),
        b: ds.tasks().iter().map(|t| lift(&t.negatives)).collect(),
        u: ds.tasks().iter().map(|t| lift(&t.universum)).collect(),
    }
}

pub struct SideSetup<'a> {
    /// Rows the plane should pass close to.
    pub own: &'a [DMatrix<f64>],
    /// Rows pushed to the far side.
    pub other: &'a [DMatrix<f64>],
    pub universum: &'a [DMatrix<f64>],
    /// -1 for the positive-class plane, +1 for the negative-class plane.
    pub sign: f64,
    pub c: f64,
    pub c_u: f64,
    pub mu: f64,
    pub epsilon: f64,
    pub delta_global: f64,
    pub delta_tasks: &'a [f64],
}

/// Primal objective in the stacked parameter vector `[u0; u_1; ...; u_T]`.
/// `squared` selects squared equality slacks (least squares) over hinge
/// slacks.
pub fn primal(s: &SideSetup, params: &[f64], squared: bool) -> f64 {
    let t_count = s.own.len();
    let p = s.own[0].ncols();
    let u0 = DVector::from_column_slice(&params[..p]);
    let mut j = 0.0;
    let mut own_all = 0.0;
    for a in s.own {
        own_all += (a * &u0).norm_squared();
    }
    j += 0.5 * (own_all + s.delta_global * u0.norm_squared());
    for t in 0..t_count {
        let ut = DVector::from_column_slice(&params[p * (t + 1)..p * (t + 2)]);
        j += s.mu / (2.0 * t_count as f64) * ((&s.own[t] * &ut).norm_squared() + s.delta_tasks[t] * ut.norm_squared());
        let w = &u0 + &ut;
        let loss = |v: f64| if squared { 0.5 * v * v } else { v.max(0.0) };
        let xi: f64 = (&s.other[t] * &w).iter().map(|&r| loss(1.0 - s.sign * r)).sum();
        let psi: f64 = (&s.universum[t] * &w)
            .iter()
            .map(|&r| loss(-1.0 + s.epsilon + s.sign * r))
            .sum();
        j += s.c * xi + s.c_u * psi;
    }
    j
}

pub fn stack(common: &DVector<f64>, offsets: &[DVector<f64>]) -> Vec<f64> {
    let mut v: Vec<f64> = common.iter().copied().collect();
    for o in offsets {
        v.extend(o.iter().copied());
    }
    v
}
