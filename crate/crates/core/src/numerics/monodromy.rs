use nalgebra::Matrix4;

use super::rk::{rk_integrate, RkOptions};
use crate::{Error, Result};

/// Integrator tolerance used for the variational equation.
pub const MONODROMY_TOL: f64 = 1e-11;

/// Fundamental matrix `Φ(p)` of `Φ' = A(x) Φ`, `Φ(0) = I`, with `A` periodic of period `p`.
pub fn monodromy<A>(mut linear_rhs: A, period: f64) -> Result<Matrix4<f64>>
where
    A: FnMut(f64) -> Matrix4<f64>,
{
    if !(period > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "period must be positive, got {period}"
        )));
    }
    let id = Matrix4::<f64>::identity();
    let opts = RkOptions::with_tol(MONODROMY_TOL);
    let traj = rk_integrate(
        |x, y, dy| {
            let a = linear_rhs(x);
            let phi = Matrix4::from_column_slice(y);
            dy.copy_from_slice((a * phi).as_slice());
        },
        id.as_slice(),
        0.0,
        period,
        &opts,
        &[],
    )?;
    Ok(Matrix4::from_column_slice(&traj.y_end))
}
