//! Numerical core for localized radial roll patterns of the Swift–Hohenberg
//! equation
//!
//! ```text
//! 0 = -(1 + (ε/r)∂_r + ∂_r²)² U - μU + νU² - U³,   ε = n - 1,
//! ```
//!
//! written as the first-order system `u' = f(u, μ) + (ε/r) g(u)` in the
//! variables `(U, U_r, (1 + (ε/r)∂_r + ∂_r²)U, ∂_r u3)`.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. It provides
//!
//! * [`model`]: the vector field, conserved quantity, reverser and energy density,
//! * [`numerics`]: Newton, certified root balls, Dormand–Prince, monodromy,
//!   periodic quadrature and a banded LU,
//! * [`rolls`]: symmetric periodic rolls at prescribed level `H = h`, with Floquet data,
//! * [`svf`]: the averaged field `S(h, μ)`, the PDE energy and the Maxwell point,
//! * [`avgflow`]: the averaged level flow `h_x = (ε/x) S(h, μ)` and the persistence verdicts,
//! * [`pulse`]: the radial pulse boundary-value problem,
//! * [`continuation`]: pseudo-arclength branch tracing, folds and collapse diagnostics.
//!
//! File formats, plotting and the command-line frontend live in the `rollscape` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod avgflow;
pub mod continuation;
mod error;
pub mod model;
pub mod numerics;
pub mod pulse;
pub mod rolls;
pub mod svf;

pub use error::{Error, Result};
pub use model::{ModelParams, StateVec, DEFAULT_NU};
