use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::linalg::max_abs;
use crate::{Error, Result};

/// Maximum number of step halvings per Newton iteration.
pub const MAX_HALVINGS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub solution: Vec<f64>,
    /// Max-norm of the residual at `solution`.
    pub residual_norm: f64,
    /// Number of Newton steps taken.
    pub iterations: usize,
    pub converged: bool,
}

/// Damped Newton iteration for `F(x) = 0` with an explicit Jacobian.
///
/// Converged means `‖F(x)‖∞ ≤ tol`. When a full step does not decrease the
/// residual it is halved up to [`MAX_HALVINGS`] times; the last trial is
/// accepted regardless so the iteration can escape shallow plateaus.
pub fn newton_solve<F, J>(
    mut residual: F,
    mut jacobian: J,
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<NewtonReport>
where
    F: FnMut(&[f64]) -> Vec<f64>,
    J: FnMut(&[f64]) -> DMatrix<f64>,
{
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut f = residual(&x);
    if f.len() != n {
        return Err(Error::Dimension(alloc::format!(
            "F maps R^{n} to R^{}",
            f.len()
        )));
    }
    let mut norm = max_abs(&f);
    let mut iterations = 0;
    while norm > tol && iterations < max_iter {
        let jac = jacobian(&x);
        if jac.nrows() != n || jac.ncols() != n {
            return Err(Error::Dimension(alloc::format!(
                "DF is {}x{}, expected {n}x{n}",
                jac.nrows(),
                jac.ncols()
            )));
        }
        let step = jac
            .lu()
            .solve(&DVector::from_column_slice(&f))
            .ok_or(Error::Singular("Newton Jacobian"))?;
        if step.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("Newton Jacobian"));
        }
        iterations += 1;
        let mut lambda = 1.0;
        let mut halvings = 0;
        loop {
            let trial: Vec<f64> = x
                .iter()
                .zip(step.iter())
                .map(|(xi, si)| xi - lambda * si)
                .collect();
            let ft = residual(&trial);
            let nt = max_abs(&ft);
            if (nt.is_finite() && nt < norm) || halvings == MAX_HALVINGS {
                if nt.is_finite() {
                    x = trial;
                    f = ft;
                    norm = nt;
                }
                break;
            }
            lambda *= 0.5;
            halvings += 1;
        }
    }
    Ok(NewtonReport {
        solution: x,
        residual_norm: norm,
        iterations,
        converged: norm <= tol,
    })
}
