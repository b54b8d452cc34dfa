//! Box-constrained concave quadratic maximization,
//! `max -1/2 a'Ha + f'a  s.t.  0 <= a <= ub`,
//! by projected coordinate ascent.
//!
//! The twin-SVM duals have bound constraints only, so each coordinate has a
//! closed-form maximizer and no equality row has to be maintained.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Diagonal entries at or below this are treated as null directions.
const DEGENERATE_DIAGONAL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct BoxQpOptions {
    /// Maximum tolerated projected-gradient KKT violation.
    pub tol: f64,
    /// Maximum number of sweeps.
    pub max_iter: usize,
    /// Seed of the random-order confirmation sweep.
    pub seed: u64,
    /// Record the objective after every sweep.
    pub record_trace: bool,
}

impl Default for BoxQpOptions {
    fn default() -> Self {
        BoxQpOptions {
            tol: 1e-6,
            max_iter: 10_000,
            seed: 0,
            record_trace: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BoxQpResult {
    pub alpha: DVector<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    /// Sweeps performed, confirmation sweeps included.
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each sweep when requested.
    pub trace: Vec<f64>,
}

/// `-1/2 a'Ha + f'a`
pub fn dual_objective(h: &DMatrix<f64>, f: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
    -0.5 * alpha.dot(&(h * alpha)) + f.dot(alpha)
}

/// Largest box-KKT violation of `alpha`, recomputed from scratch.
pub fn kkt_violation(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    ub: &DVector<f64>,
    alpha: &DVector<f64>,
) -> f64 {
    let g = f - h * alpha;
    max_violation(&g, alpha, ub)
}

fn coordinate_violation(g: f64, a: f64, ub: f64) -> f64 {
    // g is the ascent direction f - Ha.
    if ub <= 0.0 {
        0.0
    } else if a <= 0.0 {
        g.max(0.0)
    } else if a >= ub {
        (-g).max(0.0)
    } else {
        g.abs()
    }
}

fn max_violation(g: &DVector<f64>, alpha: &DVector<f64>, ub: &DVector<f64>) -> f64 {
    (0..g.len())
        .map(|i| coordinate_violation(g[i], alpha[i], ub[i]))
        .fold(0.0, f64::max)
}

fn check_inputs(h: &DMatrix<f64>, f: &DVector<f64>, ub: &DVector<f64>, tol: f64) -> Result<()> {
    let n = f.len();
    if h.nrows() != n || h.ncols() != n {
        return Err(Error::dimension("box qp hessian", n, h.nrows().max(h.ncols())));
    }
    if ub.len() != n {
        return Err(Error::dimension("box qp bounds", n, ub.len()));
    }
    if !(tol > 0.0) {
        return Err(Error::Validation(format!("qp tolerance must be positive, got {tol}")));
    }
    if ub.iter().any(|&u| !(u >= 0.0 && u.is_finite())) {
        return Err(Error::Validation("qp upper bounds must be finite and non-negative".into()));
    }
    if h.iter().chain(f.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("qp data contains non-finite values".into()));
    }
    let scale = h.amax().max(1.0);
    for j in 0..n {
        for i in 0..j {
            if (h[(i, j)] - h[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::Validation(format!(
                    "qp hessian is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

struct State<'a> {
    h: &'a DMatrix<f64>,
    ub: &'a DVector<f64>,
    alpha: DVector<f64>,
    /// f - H alpha
    grad: DVector<f64>,
}

impl State<'_> {
    fn update(&mut self, i: usize) {
        let hii = self.h[(i, i)];
        let g = self.grad[i];
        let a = self.alpha[i];
        let target = if hii > DEGENERATE_DIAGONAL {
            (a + g / hii).clamp(0.0, self.ub[i])
        } else if g > 0.0 {
            self.ub[i]
        } else if g < 0.0 {
            0.0
        } else {
            a
        };
        let step = target - a;
        if step != 0.0 {
            self.alpha[i] = target;
            self.grad.axpy(-step, &self.h.column(i), 1.0);
        }
    }

    fn objective(&self, f: &DVector<f64>) -> f64 {
        // -1/2 a'Ha + f'a with Ha = f - grad
        0.5 * (f.dot(&self.alpha) + self.grad.dot(&self.alpha))
    }
}

/// Solves the box QP by cyclic coordinate ascent.
///
/// Once a cyclic sweep meets the tolerance, one sweep in random order is
/// run and the gradient is recomputed from scratch; convergence is declared
/// only if the violation is still within `tol`. Hitting `max_iter` returns
/// the last (and best) iterate with `converged == false`.
pub fn solve_box_qp(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    ub: &DVector<f64>,
    opts: &BoxQpOptions,
) -> Result<BoxQpResult> {
    check_inputs(h, f, ub, opts.tol)?;
    let n = f.len();
    let mut st = State {
        h,
        ub,
        alpha: DVector::zeros(n),
        grad: f.clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = n == 0;
    let mut residual = max_violation(&st.grad, &st.alpha, ub);

    while !converged && iterations < opts.max_iter {
        for i in 0..n {
            st.update(i);
        }
        iterations += 1;
        if opts.record_trace {
            trace.push(st.objective(f));
        }
        residual = max_violation(&st.grad, &st.alpha, ub);
        if residual > opts.tol || iterations >= opts.max_iter {
            continue;
        }
        order.shuffle(&mut rng);
        for &i in &order {
            st.update(i);
        }
        iterations += 1;
        st.grad = f - h * &st.alpha;
        if opts.record_trace {
            trace.push(st.objective(f));
        }
        residual = max_violation(&st.grad, &st.alpha, ub);
        converged = residual <= opts.tol;
    }

    let objective = dual_objective(h, f, &st.alpha);
    Ok(BoxQpResult {
        alpha: st.alpha,
        objective,
        kkt_residual: residual,
        iterations,
        converged,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let g = DMatrix::from_fn(n + 2, n, |_, _| rng.random_range(-1.0..1.0));
        let h = g.transpose() * &g + DMatrix::identity(n, n);
        let f = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        (h, f, DVector::from_element(n, 1.0))
    }

    #[test]
    fn interior_optimum() {
        let r = solve_box_qp(
            &DMatrix::identity(2, 2),
            &dv(&[1.0, 1.0]),
            &dv(&[10.0, 10.0]),
            &BoxQpOptions::default(),
        )
        .unwrap();
        assert!(r.converged);
        assert_relative_eq!(r.alpha, dv(&[1.0, 1.0]), epsilon = 1e-12);
        assert_relative_eq!(r.objective, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn clipped_optimum() {
        let r = solve_box_qp(
            &(DMatrix::identity(2, 2) * 2.0),
            &dv(&[4.0, 1.0]),
            &dv(&[1.0, 1.0]),
            &BoxQpOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(r.alpha, dv(&[1.0, 0.5]), epsilon = 1e-12);
    }

    #[test]
    fn objective_values() {
        let h = DMatrix::identity(3, 3);
        let f = DVector::from_element(3, 1.0);
        assert_eq!(dual_objective(&h, &f, &DVector::zeros(3)), 0.0);
        assert_eq!(dual_objective(&h, &f, &f), 1.5);
    }

    #[test]
    fn rejects_asymmetric_hessian() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let err = solve_box_qp(&h, &dv(&[1.0, 1.0]), &dv(&[1.0, 1.0]), &BoxQpOptions::default());
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_bad_dimensions_and_tolerance() {
        let h = DMatrix::identity(2, 2);
        assert!(solve_box_qp(&h, &dv(&[1.0]), &dv(&[1.0]), &BoxQpOptions::default()).is_err());
        let opts = BoxQpOptions { tol: 0.0, ..Default::default() };
        assert!(solve_box_qp(&h, &dv(&[1.0, 1.0]), &dv(&[1.0, 1.0]), &opts).is_err());
    }

    #[test]
    fn zero_diagonal_jumps_to_face() {
        // Second coordinate is a null direction of H with positive gradient.
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let r = solve_box_qp(&h, &dv(&[0.5, 2.0]), &dv(&[1.0, 3.0]), &BoxQpOptions::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.alpha[1], 3.0);
        assert_relative_eq!(r.alpha[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn empty_problem() {
        let r = solve_box_qp(
            &DMatrix::zeros(0, 0),
            &DVector::zeros(0),
            &DVector::zeros(0),
            &BoxQpOptions::default(),
        )
        .unwrap();
        assert!(r.converged);
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn non_convergence_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (h, f, ub) = random_instance(&mut rng, 10);
        let opts = BoxQpOptions { max_iter: 1, tol: 1e-14, ..Default::default() };
        let r = solve_box_qp(&h, &f, &ub, &opts).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 1);
        assert!(r.alpha.iter().zip(ub.iter()).all(|(a, u)| *a >= 0.0 && a <= u));
    }

    #[test]
    fn beats_random_feasible_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [3, 7, 12] {
            let (h, f, ub) = random_instance(&mut rng, n);
            let r = solve_box_qp(&h, &f, &ub, &BoxQpOptions::default()).unwrap();
            for _ in 0..200 {
                let probe = DVector::from_fn(n, |i, _| rng.random_range(0.0..=ub[i]));
                assert!(r.objective >= dual_objective(&h, &f, &probe) - 1e-12);
            }
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn monotone_feasible_and_kkt(seed in 0u64..10_000, n in 1usize..15) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (h, f, ub) = random_instance(&mut rng, n);
            let opts = BoxQpOptions { record_trace: true, ..Default::default() };
            let r = solve_box_qp(&h, &f, &ub, &opts).unwrap();
            proptest::prop_assert!(r.converged);
            for w in r.trace.windows(2) {
                proptest::prop_assert!(w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0));
            }
            for i in 0..n {
                proptest::prop_assert!(r.alpha[i] >= 0.0 && r.alpha[i] <= ub[i]);
            }
            // Box-KKT certificate in minimization form, gradient = Ha - f.
            let grad = &h * &r.alpha - &f;
            for i in 0..n {
                let tol = 1e-6;
                if r.alpha[i] == 0.0 {
                    proptest::prop_assert!(grad[i] >= -tol);
                } else if r.alpha[i] == ub[i] {
                    proptest::prop_assert!(grad[i] <= tol);
                } else {
                    proptest::prop_assert!(grad[i].abs() <= tol);
                }
            }
            proptest::prop_assert!(kkt_violation(&h, &f, &ub, &r.alpha) <= 1e-6);
        }
    }
}
