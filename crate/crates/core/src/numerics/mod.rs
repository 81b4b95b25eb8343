//! Shared numerical kernels.
//!
//! Everything here is a pure function of its inputs. Dense linear algebra for
//! small systems goes through `nalgebra`; the long collocation systems of the
//! pulse problem use the banded LU in [`banded`].

pub mod banded;
mod certify;
mod linalg;
mod monodromy;
mod newton;
mod quadrature;
mod rk;

pub use certify::{
    certify_root, certify_root_with, CertifiedBall, CertifyOptions, LIPSCHITZ_SAFETY,
};
pub use linalg::{eigenvalues4, inf_norm, max_abs};
pub use monodromy::{monodromy, MONODROMY_TOL};
pub use newton::{newton_solve, NewtonReport, MAX_HALVINGS};
pub use quadrature::{periodic_trapezoid, trapezoid};
pub use rk::{rk_integrate, rk_integrate_with_event, Event, RkOptions, Trajectory};
