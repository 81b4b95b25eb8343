//! Newton–Kantorovich style root certification.
//!
//! If `‖I - A⁻¹DF(w)‖ ≤ κ < 1` on the closed ball `B_ρ(w0)` and
//! `‖A⁻¹F(w0)‖ ≤ (1 - κ)ρ`, the map `w ↦ w - A⁻¹F(w)` is a contraction of the
//! ball into itself, so `F` has a unique root `w*` there with
//! `‖w* - w0‖ ≤ ‖A⁻¹F(w0)‖ / (1 - κ)`.
//!
//! The supremum over the ball is estimated by sampling (Halton points, the
//! center and the axis extremes of the max-norm ball) and inflated by
//! [`LIPSCHITZ_SAFETY`]. This is a numerical certificate, not an
//! interval-arithmetic proof.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::linalg::{inf_norm, max_abs};
use crate::{Error, Result};

/// Factor applied to the sampled contraction constant.
pub const LIPSCHITZ_SAFETY: f64 = 1.1;

#[derive(Debug, Clone, PartialEq)]
pub struct CertifiedBall {
    pub center: Vec<f64>,
    pub radius: f64,
    /// Sampled `sup ‖I - A⁻¹DF‖∞` times [`LIPSCHITZ_SAFETY`].
    pub contraction: f64,
    /// `‖A⁻¹F(w0)‖∞`.
    pub bound: f64,
    pub certified: bool,
    /// `bound / (1 - contraction)`; infinite when `contraction ≥ 1`.
    pub root_error_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    pub samples: usize,
    pub safety: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            samples: 64,
            safety: LIPSCHITZ_SAFETY,
        }
    }
}

/// [`certify_root_with`] with 64 Halton samples and the default safety factor.
pub fn certify_root<F, J>(
    f: F,
    df: J,
    w0: &[f64],
    a: &DMatrix<f64>,
    rho: f64,
    kappa_target: f64,
) -> Result<CertifiedBall>
where
    F: FnMut(&[f64]) -> Vec<f64>,
    J: FnMut(&[f64]) -> DMatrix<f64>,
{
    certify_root_with(f, df, w0, a, rho, kappa_target, &CertifyOptions::default())
}

pub fn certify_root_with<F, J>(
    mut f: F,
    mut df: J,
    w0: &[f64],
    a: &DMatrix<f64>,
    rho: f64,
    kappa_target: f64,
    opts: &CertifyOptions,
) -> Result<CertifiedBall>
where
    F: FnMut(&[f64]) -> Vec<f64>,
    J: FnMut(&[f64]) -> DMatrix<f64>,
{
    let n = w0.len();
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::Dimension(alloc::format!(
            "A is {}x{}, expected {n}x{n}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !(rho > 0.0) || !(kappa_target > 0.0 && kappa_target < 1.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "need rho > 0 and 0 < kappa < 1, got rho = {rho}, kappa = {kappa_target}"
        )));
    }
    let a_inv = a
        .clone()
        .try_inverse()
        .ok_or(Error::Singular("certify_root: A"))?;
    if a_inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("certify_root: A"));
    }
    let id = DMatrix::<f64>::identity(n, n);

    let mut kappa_sampled = 0.0f64;
    for point in sample_points(w0, rho, opts.samples) {
        let m = &id - &a_inv * df(&point);
        kappa_sampled = kappa_sampled.max(inf_norm(&m));
    }
    let contraction = opts.safety * kappa_sampled;
    let newton_step = &a_inv * DVector::from_vec(f(w0));
    let bound = max_abs(newton_step.as_slice());
    let certified = contraction <= kappa_target && bound <= (1.0 - kappa_target) * rho;
    let root_error_bound = if contraction < 1.0 {
        bound / (1.0 - contraction)
    } else {
        f64::INFINITY
    };
    Ok(CertifiedBall {
        center: w0.to_vec(),
        radius: rho,
        contraction,
        bound,
        certified,
        root_error_bound,
    })
}

fn first_primes(n: usize) -> Vec<u32> {
    let mut primes: Vec<u32> = Vec::with_capacity(n);
    let mut c = 2u32;
    while primes.len() < n {
        if primes
            .iter()
            .take_while(|&&p| p * p <= c)
            .all(|&p| c % p != 0)
        {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

fn radical_inverse(mut i: u32, base: u32) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Center, the `2n` axis extremes, then `count` Halton points of the max-norm ball.
fn sample_points(w0: &[f64], rho: f64, count: usize) -> Vec<Vec<f64>> {
    let n = w0.len();
    let mut pts = Vec::with_capacity(count + 2 * n + 1);
    pts.push(w0.to_vec());
    for i in 0..n {
        for s in [-1.0, 1.0] {
            let mut p = w0.to_vec();
            p[i] += s * rho;
            pts.push(p);
        }
    }
    let bases = first_primes(n);
    for k in 1..=count as u32 {
        let p: Vec<f64> = (0..n)
            .map(|d| w0[d] + rho * (2.0 * radical_inverse(k, bases[d]) - 1.0))
            .collect();
        pts.push(p);
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn affine_map_has_zero_contraction() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 3.0]);
        let a2 = a.clone();
        let ball = certify_root(
            |w| vec![2.0 * w[0] + w[1] - 1.0, 3.0 * w[1] - 3.0],
            move |_| a2.clone(),
            &[0.1, 0.9],
            &a,
            0.5,
            0.5,
        )
        .unwrap();
        assert_eq!(ball.contraction, 0.0);
        assert!(ball.certified);
        // Root (0, 1): error bound is exact for affine maps.
        assert!((ball.root_error_bound - 0.1).abs() < 1e-14);
    }

    #[test]
    fn scalar_quadratic_near_two() {
        // F(x) = x² - 4, w0 = 2.1, A = DF(2.1) = 4.2. On [1.9, 2.3]:
        // |1 - 2x/4.2| ≤ 0.2/4.2·2 ≈ 0.095; Newton step 0.41/4.2 ≈ 0.0976.
        let a = DMatrix::from_element(1, 1, 4.2);
        let ball = certify_root(
            |w| vec![w[0] * w[0] - 4.0],
            |w| DMatrix::from_element(1, 1, 2.0 * w[0]),
            &[2.1],
            &a,
            0.2,
            0.5,
        )
        .unwrap();
        assert!(ball.certified);
        assert!((ball.bound - 0.41 / 4.2).abs() < 1e-14);
        assert!(ball.root_error_bound >= 0.1);
        assert!((ball.contraction - LIPSCHITZ_SAFETY * 0.4 / 4.2).abs() < 1e-12);
    }

    #[test]
    fn large_contraction_is_not_certified() {
        let a = DMatrix::from_element(1, 1, 1.0);
        let ball = certify_root(
            |w| vec![w[0] * w[0] - 4.0],
            |w| DMatrix::from_element(1, 1, 2.0 * w[0]),
            &[2.0],
            &a,
            0.5,
            0.5,
        )
        .unwrap();
        assert!(!ball.certified);
    }

    #[test]
    fn singular_preconditioner() {
        let a = DMatrix::zeros(2, 2);
        let err = certify_root(
            |w| w.to_vec(),
            |_| DMatrix::identity(2, 2),
            &[0.0, 0.0],
            &a,
            1.0,
            0.5,
        );
        assert!(matches!(err, Err(Error::Singular(_))));
    }
}
