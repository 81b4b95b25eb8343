//! The steady radial Swift–Hohenberg system as a first-order ODE in `r`.
//!
//! With `u1 = U`, `u2 = U_r`, `u3 = (1 + (ε/r)∂_r + ∂_r²)U`, `u4 = ∂_r u3` the
//! radial steady-state equation becomes
//!
//! ```text
//! u' = f(u, μ) + (ε/r) g(u),
//! f(u, μ) = (u2, u3 - u1, u4, -u3 - μu1 + νu1² - u1³),
//! g(u)    = -(0, u2, 0, u4).
//! ```
//!
//! At `ε = 0` the system is reversible under `R = diag(1, -1, 1, -1)` and
//! conserves [`hamiltonian`]. The perturbation `g` vanishes on `Fix(R)`.

use nalgebra::Matrix4;

use crate::{Error, Result};

/// Quadratic coefficient used by every figure-style run.
pub const DEFAULT_NU: f64 = 1.6;

/// Tolerance on `|u2| + |u4|` accepted as "in Fix(R)" by [`regularized_rhs_at_origin`].
pub const FIX_R_TOL: f64 = 1e-12;

/// A point `(u1, u2, u3, u4)` of the four-dimensional phase space.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StateVec(pub [f64; 4]);

impl StateVec {
    pub const ZERO: StateVec = StateVec([0.0; 4]);

    pub const fn new(u1: f64, u2: f64, u3: f64, u4: f64) -> Self {
        StateVec([u1, u2, u3, u4])
    }

    #[inline]
    pub fn u1(&self) -> f64 {
        self.0[0]
    }
    #[inline]
    pub fn u2(&self) -> f64 {
        self.0[1]
    }
    #[inline]
    pub fn u3(&self) -> f64 {
        self.0[2]
    }
    #[inline]
    pub fn u4(&self) -> f64 {
        self.0[3]
    }

    pub fn dot(&self, other: &StateVec) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Whether `u2 = u4 = 0` up to `tol`.
    pub fn in_fix_r(&self, tol: f64) -> bool {
        self.u2().abs() + self.u4().abs() <= tol
    }

    pub fn scale(&self, s: f64) -> StateVec {
        StateVec(self.0.map(|v| v * s))
    }
}

impl core::ops::Add for StateVec {
    type Output = StateVec;
    fn add(self, rhs: StateVec) -> StateVec {
        StateVec([
            self.0[0] + rhs.0[0],
            self.0[1] + rhs.0[1],
            self.0[2] + rhs.0[2],
            self.0[3] + rhs.0[3],
        ])
    }
}

impl core::ops::Sub for StateVec {
    type Output = StateVec;
    fn sub(self, rhs: StateVec) -> StateVec {
        StateVec([
            self.0[0] - rhs.0[0],
            self.0[1] - rhs.0[1],
            self.0[2] - rhs.0[2],
            self.0[3] - rhs.0[3],
        ])
    }
}

impl core::ops::Neg for StateVec {
    type Output = StateVec;
    fn neg(self) -> StateVec {
        self.scale(-1.0)
    }
}

impl From<[f64; 4]> for StateVec {
    fn from(u: [f64; 4]) -> Self {
        StateVec(u)
    }
}

/// Parameters `(μ, ν, ε)`; `ε = n - 1` is the distance from the one-dimensional problem.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelParams {
    pub mu: f64,
    pub nu: f64,
    pub eps: f64,
}

impl ModelParams {
    pub const fn new(mu: f64, nu: f64, eps: f64) -> Self {
        ModelParams { mu, nu, eps }
    }

    /// `ε = 0` parameters with the default `ν`.
    pub const fn planar(mu: f64) -> Self {
        ModelParams {
            mu,
            nu: DEFAULT_NU,
            eps: 0.0,
        }
    }

    pub fn with_mu(self, mu: f64) -> Self {
        ModelParams { mu, ..self }
    }

    pub fn with_eps(self, eps: f64) -> Self {
        ModelParams { eps, ..self }
    }
}

/// The nonlinearity `-μu + νu² - u³` of the fourth equation (without `-u3`).
#[inline]
pub fn nonlinearity(u1: f64, p: &ModelParams) -> f64 {
    -p.mu * u1 + p.nu * u1 * u1 - u1 * u1 * u1
}

/// `d/du1` of [`nonlinearity`].
#[inline]
pub fn nonlinearity_prime(u1: f64, p: &ModelParams) -> f64 {
    -p.mu + 2.0 * p.nu * u1 - 3.0 * u1 * u1
}

/// Autonomous part `f(u, μ)` of the vector field.
pub fn f_rhs(u: &StateVec, p: &ModelParams) -> StateVec {
    let [u1, u2, u3, u4] = u.0;
    StateVec([u2, u3 - u1, u4, -u3 + nonlinearity(u1, p)])
}

/// Perturbation direction `g(u) = -(0, u2, 0, u4)`.
pub fn g_pert(u: &StateVec) -> StateVec {
    StateVec([0.0, -u.u2(), 0.0, -u.u4()])
}

/// `f(u, μ) + (ε/r) g(u)` for `r > 0`.
pub fn full_rhs(u: &StateVec, r: f64, p: &ModelParams) -> Result<StateVec> {
    if !(r > 0.0) {
        return Err(Error::SingularRadius(r));
    }
    Ok(full_rhs_unchecked(u, r, p))
}

#[inline]
pub(crate) fn full_rhs_unchecked(u: &StateVec, r: f64, p: &ModelParams) -> StateVec {
    let c = p.eps / r;
    let [u1, u2, u3, u4] = u.0;
    StateVec([u2, u3 - u1 - c * u2, u4, -u3 + nonlinearity(u1, p) - c * u4])
}

/// The vector field at `r = 0` for a symmetric center `u ∈ Fix(R)`.
///
/// Near the axis `u2 ≈ u2'(0) r`, so `(ε/r) u2 → ε u2'(0)` and the second and
/// fourth equations pick up a factor `1/(1 + ε)`.
pub fn regularized_rhs_at_origin(u: &StateVec, p: &ModelParams) -> Result<StateVec> {
    if !u.in_fix_r(FIX_R_TOL) {
        return Err(Error::NotSymmetric(u.u2().abs() + u.u4().abs()));
    }
    Ok(origin_rhs_unchecked(u, p))
}

/// [`regularized_rhs_at_origin`] without the `Fix(R)` check; the `u2`, `u4`
/// entries are passed through so Newton iterates off `Fix(R)` stay smooth.
#[inline]
pub(crate) fn origin_rhs_unchecked(u: &StateVec, p: &ModelParams) -> StateVec {
    let s = 1.0 / (1.0 + p.eps);
    let [u1, u2, u3, u4] = u.0;
    StateVec([u2, s * (u3 - u1), u4, s * (-u3 + nonlinearity(u1, p))])
}

/// Conserved quantity of the `ε = 0` flow, normalized so that `H(0) = 0`.
pub fn hamiltonian(u: &StateVec, p: &ModelParams) -> f64 {
    let [u1, u2, u3, u4] = u.0;
    u2 * u4 + u1 * u3 - 0.5 * u3 * u3 + 0.5 * p.mu * u1 * u1 - p.nu * u1 * u1 * u1 / 3.0
        + 0.25 * u1 * u1 * u1 * u1
}

/// `∇_u H(u, μ)`.
pub fn grad_hamiltonian(u: &StateVec, p: &ModelParams) -> StateVec {
    let [u1, u2, u3, u4] = u.0;
    StateVec([
        u3 + p.mu * u1 - p.nu * u1 * u1 + u1 * u1 * u1,
        u4,
        u1 - u3,
        u2,
    ])
}

/// `R = diag(1, -1, 1, -1)`.
pub fn reverser(u: &StateVec) -> StateVec {
    StateVec([u.u1(), -u.u2(), u.u3(), -u.u4()])
}

/// Jacobian of [`f_rhs`]. Its trace is identically zero.
pub fn jacobian_f(u: &StateVec, p: &ModelParams) -> Matrix4<f64> {
    let d = nonlinearity_prime(u.u1(), p);
    Matrix4::new(
        0.0, 1.0, 0.0, 0.0, //
        -1.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, 1.0, //
        d, 0.0, -1.0, 0.0,
    )
}

/// Jacobian of `f + (ε/r) g` for `r > 0`.
pub(crate) fn jacobian_full(u: &StateVec, r: f64, p: &ModelParams) -> Matrix4<f64> {
    let mut j = jacobian_f(u, p);
    let c = p.eps / r;
    j[(1, 1)] -= c;
    j[(3, 3)] -= c;
    j
}

/// Jacobian of the regularized origin field.
pub(crate) fn jacobian_origin(u: &StateVec, p: &ModelParams) -> Matrix4<f64> {
    let s = 1.0 / (1.0 + p.eps);
    let d = nonlinearity_prime(u.u1(), p);
    Matrix4::new(
        0.0,
        1.0,
        0.0,
        0.0, //
        -s,
        0.0,
        s,
        0.0, //
        0.0,
        0.0,
        0.0,
        1.0, //
        s * d,
        0.0,
        -s,
        0.0,
    )
}

/// Integrand of the PDE energy, `(U + U_xx)²/2 + μU²/2 - νU³/3 + U⁴/4`.
pub fn energy_density(u: f64, uxx: f64, p: &ModelParams) -> f64 {
    let w = u + uxx;
    0.5 * w * w + 0.5 * p.mu * u * u - p.nu * u * u * u / 3.0 + 0.25 * u * u * u * u
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn state() -> impl Strategy<Value = StateVec> {
        prop::array::uniform4(-2.0f64..2.0).prop_map(StateVec)
    }

    fn params() -> impl Strategy<Value = ModelParams> {
        (-0.5f64..0.5, 0.0f64..2.5, 0.0f64..1.0)
            .prop_map(|(mu, nu, eps)| ModelParams::new(mu, nu, eps))
    }

    #[test]
    fn f_rhs_examples() {
        let p = ModelParams::new(0.3, 1.6, 0.0);
        assert_eq!(f_rhs(&StateVec::ZERO, &p), StateVec::ZERO);
        let p0 = ModelParams::new(0.0, 0.0, 0.0);
        assert_eq!(
            f_rhs(&StateVec::new(1.0, 0.0, 0.0, 0.0), &p0),
            StateVec::new(0.0, -1.0, 0.0, -1.0)
        );
        // Hand evaluation: u4' = 0.2 - 0.1 + 0.4 - 0.125 = 0.375.
        let p = ModelParams::new(0.2, 1.6, 0.0);
        let out = f_rhs(&StateVec::new(0.5, 0.1, -0.2, 0.3), &p);
        let expected = [0.1, -0.7, 0.3, 0.375];
        for k in 0..4 {
            assert_abs_diff_eq!(out.0[k], expected[k], epsilon = 1e-15);
        }
    }

    #[test]
    fn g_pert_examples() {
        assert_eq!(
            g_pert(&StateVec::new(3.0, 0.0, -7.0, 0.0)),
            StateVec::new(0.0, -0.0, 0.0, -0.0)
        );
        assert_eq!(
            g_pert(&StateVec::new(0.0, 1.0, 0.0, 2.0)),
            StateVec::new(0.0, -1.0, 0.0, -2.0)
        );
        assert_eq!(
            g_pert(&StateVec::new(1.0, 2.0, 3.0, 4.0)),
            StateVec::new(0.0, -2.0, 0.0, -4.0)
        );
    }

    #[test]
    fn full_rhs_examples() {
        let p = ModelParams::new(0.2, 1.6, 1.0);
        let u = StateVec::new(0.5, 0.1, -0.2, 0.3);
        let out = full_rhs(&u, 2.0, &p).unwrap();
        let expected = [0.1, -0.7 - 0.05, 0.3, 0.375 - 0.15];
        for k in 0..4 {
            assert_abs_diff_eq!(out.0[k], expected[k], epsilon = 1e-15);
        }
        assert_eq!(full_rhs(&u, 0.0, &p), Err(Error::SingularRadius(0.0)));
        assert!(full_rhs(&u, -1.0, &p).is_err());
        let sym = StateVec::new(0.7, 0.0, -0.3, 0.0);
        assert_eq!(full_rhs(&sym, 0.37, &p).unwrap(), f_rhs(&sym, &p));
    }

    #[test]
    fn origin_regularization() {
        let p = ModelParams::new(0.0, 0.0, 0.0);
        let u = StateVec::new(1.0, 0.0, 0.0, 0.0);
        assert_eq!(regularized_rhs_at_origin(&u, &p).unwrap(), f_rhs(&u, &p));
        assert_eq!(
            regularized_rhs_at_origin(&StateVec::ZERO, &ModelParams::planar(0.2)).unwrap(),
            StateVec::ZERO
        );
        let p1 = ModelParams::new(0.0, 0.0, 1.0);
        let out = regularized_rhs_at_origin(&StateVec::new(1.0, 0.0, 2.0, 0.0), &p1).unwrap();
        // u4' = (-u3 - u1³)/2 with u1 = 1, u3 = 2.
        assert_eq!(out, StateVec::new(0.0, 0.5, 0.0, -1.5));
        let out = regularized_rhs_at_origin(&StateVec::new(0.0, 0.0, 2.0, 0.0), &p1).unwrap();
        assert_eq!(out, StateVec::new(0.0, 1.0, 0.0, -1.0));
        assert!(matches!(
            regularized_rhs_at_origin(&StateVec::new(1.0, 1e-9, 0.0, 0.0), &p1),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn origin_limit_matches_small_radius() {
        // The l'Hôpital limit is the r → 0 limit along a smooth even solution
        // u2 = a r + O(r³): (ε/r)u2 → ε a with a = (u3 - u1)/(1 + ε).
        let p = ModelParams::new(0.2, 1.6, 0.4);
        let c = StateVec::new(0.8, 0.0, -0.1, 0.0);
        let lim = origin_rhs_unchecked(&c, &p);
        let r = 1e-7;
        let near = StateVec::new(c.u1(), lim.u2() * r, c.u3(), lim.u4() * r);
        let v = full_rhs(&near, r, &p).unwrap();
        assert_abs_diff_eq!(v.u2(), lim.u2(), epsilon = 1e-6);
        assert_abs_diff_eq!(v.u4(), lim.u4(), epsilon = 1e-6);
    }

    #[test]
    fn hamiltonian_examples() {
        let p = ModelParams::new(0.0, 0.0, 0.0);
        assert_eq!(hamiltonian(&StateVec::ZERO, &ModelParams::planar(0.2)), 0.0);
        assert_abs_diff_eq!(
            hamiltonian(&StateVec::new(1.0, 1.0, 1.0, 1.0), &p),
            1.75,
            epsilon = 1e-15
        );
    }

    #[test]
    fn reverser_examples() {
        assert_eq!(
            reverser(&StateVec::new(1.0, 2.0, 3.0, 4.0)),
            StateVec::new(1.0, -2.0, 3.0, -4.0)
        );
    }

    #[test]
    fn energy_density_examples() {
        let p0 = ModelParams::new(0.0, 0.0, 0.0);
        assert_eq!(energy_density(0.0, 0.0, &ModelParams::planar(0.2)), 0.0);
        assert_abs_diff_eq!(energy_density(1.0, -1.0, &p0), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(
            energy_density(1.0, 0.0, &ModelParams::new(2.0, 0.0, 0.0)),
            1.75,
            epsilon = 1e-15
        );
    }

    #[test]
    fn rest_state_spectrum() {
        // λ⁴ + 2λ² + (1 + μ) = 0  ⇒  λ² = -1 ± i√μ.
        for &mu in &[0.05, 0.2004, 0.5] {
            let j = jacobian_f(&StateVec::ZERO, &ModelParams::planar(mu));
            let eig = crate::numerics::eigenvalues4(&j);
            for l in eig.iter() {
                let l2 = l * l;
                let poly = l2 * l2 + l2 * 2.0 + num_complex_one() * (1.0 + mu);
                assert!(poly.norm_sqr() < 1e-24, "residual {}", poly.norm_sqr());
            }
            let stable = eig.iter().filter(|l| l.re < 0.0).count();
            let unstable = eig.iter().filter(|l| l.re > 0.0).count();
            assert_eq!((stable, unstable), (2, 2));
        }
    }

    fn num_complex_one() -> nalgebra::Complex<f64> {
        nalgebra::Complex::new(1.0, 0.0)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn reversibility(u in state(), p in params()) {
            let lhs = f_rhs(&reverser(&u), &p);
            let rhs = -reverser(&f_rhs(&u, &p));
            for k in 0..4 {
                prop_assert!((lhs.0[k] - rhs.0[k]).abs() <= 1e-14);
            }
            prop_assert_eq!(reverser(&reverser(&u)), u);
            prop_assert!((hamiltonian(&reverser(&u), &p) - hamiltonian(&u, &p)).abs() <= 1e-14);
        }

        #[test]
        fn conservation_and_pumping(u in state(), p in params()) {
            let grad = grad_hamiltonian(&u, &p);
            prop_assert!(grad.dot(&f_rhs(&u, &p)).abs() <= 1e-12);
            let pump = grad.dot(&g_pert(&u));
            prop_assert!((pump + 2.0 * u.u2() * u.u4()).abs() <= 1e-12);
        }

        #[test]
        fn fix_r_is_insensitive_to_eps(a in -2.0f64..2.0, b in -2.0f64..2.0, r in 0.01f64..50.0, p in params()) {
            let u = StateVec::new(a, 0.0, b, 0.0);
            prop_assert_eq!(full_rhs(&u, r, &p).unwrap(), full_rhs(&u, r, &p.with_eps(0.0)).unwrap());
        }

        #[test]
        fn jacobian_matches_finite_differences(u in state(), p in params()) {
            let j = jacobian_f(&u, &p);
            let h = 1e-6;
            for c in 0..4 {
                let mut up = u;
                let mut um = u;
                up.0[c] += h;
                um.0[c] -= h;
                let fp = f_rhs(&up, &p);
                let fm = f_rhs(&um, &p);
                for r in 0..4 {
                    let fd = (fp.0[r] - fm.0[r]) / (2.0 * h);
                    prop_assert!((fd - j[(r, c)]).abs() <= 1e-6 * (1.0 + j[(r, c)].abs()));
                }
            }
            prop_assert!(j.trace().abs() == 0.0);
        }
    }
}
