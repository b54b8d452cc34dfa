//! Symmetric positive definite solves for the least-squares variants.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct LsSolution {
    pub x: DVector<f64>,
    /// `||Mx - rhs|| / max(1, ||rhs||)`, recomputed from the returned `x`.
    pub residual: f64,
    /// The diagonal was bumped after a first factorization failure.
    pub bumped: bool,
}

/// Cholesky solve of `M x = rhs`.
///
/// If the factorization fails, it is retried once on
/// `M + 1e-8 * mean(diag(M)) * I`; a second failure is a numeric error.
pub fn solve_spd(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<LsSolution> {
    let n = rhs.len();
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::dimension("spd system", n, m.nrows().max(m.ncols())));
    }
    if m.iter().chain(rhs.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("linear system contains non-finite values".into()));
    }
    let (chol, bumped) = match Cholesky::new(m.clone()) {
        Some(c) => (c, false),
        None => {
            let bump = 1e-8 * m.diagonal().mean().abs().max(f64::MIN_POSITIVE);
            let shifted = m + DMatrix::identity(n, n) * bump;
            let c = Cholesky::new(shifted).ok_or_else(|| {
                Error::Numeric(format!("system matrix ({n}x{n}) is not positive definite"))
            })?;
            (c, true)
        }
    };
    let x = chol.solve(rhs);
    let residual = (m * &x - rhs).norm() / rhs.norm().max(1.0);
    Ok(LsSolution { x, residual, bumped })
}
