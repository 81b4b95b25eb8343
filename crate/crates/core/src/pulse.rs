//! Radial pulses: solutions on `[0, R_end]` with a symmetric center
//! `u(0) ∈ Fix(R)` that decay into the rest state.
//!
//! The boundary-value problem is discretized by the fourth-order
//! Hermite–Simpson box scheme on a uniform mesh. Written node by node,
//!
//! ```text
//! u_m = (u_i + u_{i+1})/2 + h/8 (F_i - F_{i+1}),
//! (u_{i+1} - u_i)/h = (F_i + 4 F(r_m, u_m) + F_{i+1})/6,
//! ```
//!
//! so the Jacobian is banded (5 sub- and 5 super-diagonals with node-major
//! unknowns). The two rows at `r = 0` impose `u2 = u4 = 0`; the two rows at
//! `R_end` put `u(R_end)` on the stable eigenspace of the rest state.

use alloc::vec::Vec;

use nalgebra::{Complex, Matrix4};
#[allow(unused_imports)]
use num_traits::Float;

use crate::model::{
    full_rhs_unchecked, hamiltonian, jacobian_f, jacobian_full, jacobian_origin,
    origin_rhs_unchecked, ModelParams, StateVec,
};
use crate::numerics::banded::BandedMatrix;
use crate::numerics::{eigenvalues4, max_abs, trapezoid};
use crate::rolls::RollSolution;
use crate::{Error, Result};

pub const DEFAULT_MESH: f64 = 0.05;
/// `R_end = L + R_END_MARGIN` unless configured otherwise.
pub const R_END_MARGIN: f64 = 45.0;
/// Width of the tanh envelope of the initial guess.
pub const ENVELOPE_WIDTH: f64 = 2.0;
pub const BVP_TOL: f64 = 1e-8;
/// Residual allowed on the doubled verification mesh.
pub const VERIFY_TOL: f64 = 1e-4;
pub const MAX_DOUBLINGS: usize = 2;
/// Band widths of the collocation Jacobian.
pub(crate) const KL: usize = 5;
pub(crate) const KU: usize = 5;

/// Rest-state boundary data at the far end.
#[derive(Debug, Clone, PartialEq)]
pub struct FarFieldBC {
    pub mu: f64,
    /// The stable pair `λ, λ̄` (`Re λ < 0`).
    pub stable_eigenvalues: [Complex<f64>; 2],
    /// `Re v`, `Im v` for the right eigenvector `v` of `λ`.
    pub stable_basis: [StateVec; 2],
    /// Rows `Re w`, `Im w` (normalized) for the left eigenvector `w` of `-λ`.
    pub projector: [[f64; 4]; 2],
}

impl FarFieldBC {
    pub fn apply(&self, u: &StateVec) -> [f64; 2] {
        [
            dot4(&self.projector[0], &u.0),
            dot4(&self.projector[1], &u.0),
        ]
    }

    /// `Re λ` of the stable pair.
    pub fn decay_rate(&self) -> f64 {
        self.stable_eigenvalues[0].re
    }
}

fn dot4(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

fn csqrt(z: Complex<f64>) -> Complex<f64> {
    let m = z.norm_sqr().sqrt();
    let re = (0.5 * (m + z.re)).max(0.0).sqrt();
    let im = (0.5 * (m - z.re)).max(0.0).sqrt();
    Complex::new(re, if z.im < 0.0 { -im } else { im })
}

/// Right eigenvector `(1, λ, λ² + 1, λ(λ² + 1))` of `jacobian_f(0, μ)`.
fn right_eigenvector(l: Complex<f64>) -> [Complex<f64>; 4] {
    let one = Complex::new(1.0, 0.0);
    let q = l * l + one;
    [one, l, q, l * q]
}

/// Left eigenvector `(λ(λ² + 1), λ² + 1, λ, 1)`.
fn left_eigenvector(l: Complex<f64>) -> [Complex<f64>; 4] {
    let one = Complex::new(1.0, 0.0);
    let q = l * l + one;
    [l * q, q, l, one]
}

/// Stable eigenspace of the rest state and the projector onto its complement.
///
/// Requires the 2-2 split `λ² = -1 ± i√μ` of a hyperbolic rest state (`μ > 0`).
pub fn far_field_bc(mu: f64) -> Result<FarFieldBC> {
    let params = ModelParams::new(mu, 0.0, 0.0);
    let eig = eigenvalues4(&jacobian_f(&StateVec::ZERO, &params));
    let stable = eig.iter().filter(|l| l.re < 0.0).count();
    let min_re = eig.iter().map(|l| l.re.abs()).fold(f64::INFINITY, f64::min);
    if stable != 2 || min_re < 1e-8 || !(mu > 0.0) {
        return Err(Error::RestStateNotHyperbolic { mu, stable, min_re });
    }
    let lam_s = -csqrt(Complex::new(-1.0, mu.sqrt()));
    let v = right_eigenvector(lam_s);
    let w = left_eigenvector(-lam_s);
    let basis = [StateVec(v.map(|c| c.re)), StateVec(v.map(|c| c.im))];
    let mut projector = [w.map(|c| c.re), w.map(|c| c.im)];
    for row in projector.iter_mut() {
        let n = dot4(row, row).sqrt();
        row.iter_mut().for_each(|x| *x /= n);
    }
    Ok(FarFieldBC {
        mu,
        stable_eigenvalues: [lam_s, lam_s.conj()],
        stable_basis: basis,
        projector,
    })
}

/// Center type of a pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Phase {
    /// Maximum of `U` at `r = 0`.
    Zero,
    /// Minimum of `U` at `r = 0`.
    Pi,
}

impl Phase {
    pub fn label(self) -> &'static str {
        match self {
            Phase::Zero => "zero",
            Phase::Pi => "pi",
        }
    }

    pub fn radians(self) -> f64 {
        match self {
            Phase::Zero => 0.0,
            Phase::Pi => core::f64::consts::PI,
        }
    }
}

impl core::str::FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "0" | "zero" => Ok(Phase::Zero),
            "pi" | "π" => Ok(Phase::Pi),
            other => Err(Error::InvalidArgument(alloc::format!(
                "unknown phase {other:?} (expected zero or pi)"
            ))),
        }
    }
}

/// Roll data used to measure plateaus.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RollReference {
    pub peak_to_peak: f64,
    pub period: f64,
}

impl RollReference {
    pub fn from_roll(roll: &RollSolution) -> Self {
        let s = roll.samples(8 * roll.modes());
        let hi = s.iter().map(|v| v.u).fold(f64::NEG_INFINITY, f64::max);
        let lo = s.iter().map(|v| v.u).fold(f64::INFINITY, f64::min);
        RollReference {
            peak_to_peak: hi - lo,
            period: roll.period,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PulseSolution {
    /// `0 = r_0 < r_1 < … < r_M = R_end`.
    pub mesh: Vec<f64>,
    pub profile: Vec<StateVec>,
    pub params: ModelParams,
    pub phase: Phase,
    /// `∫₀^{R_end} U² dr`.
    pub sq_l2_norm: f64,
    pub plateau_length: f64,
    /// Max-norm of the collocation defect; infinite for unsolved guesses.
    pub bvp_residual: f64,
    pub reference: Option<RollReference>,
}

pub fn uniform_mesh(r_end: f64, spacing: f64) -> Vec<f64> {
    let m = (r_end / spacing).ceil().max(1.0) as usize;
    (0..=m).map(|i| r_end * i as f64 / m as f64).collect()
}

/// Even envelope `(tanh((r + L)/w) - tanh((r - L)/w))/2` and its first three derivatives.
fn envelope(r: f64, l: f64, w: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (sign, z) in [(1.0, (r + l) / w), (-1.0, (r - l) / w)] {
        let t = z.tanh();
        let s = 1.0 - t * t;
        out[0] += sign * 0.5 * t;
        out[1] += sign * 0.5 * s / w;
        out[2] += sign * 0.5 * (-2.0 * t * s) / (w * w);
        out[3] += sign * 0.5 * (-2.0 * s * (1.0 - 3.0 * t * t)) / (w * w * w);
    }
    out
}

/// Roll glued to the rest state by a tanh envelope centered at `L`.
///
/// The envelope is even in `r`, so with the cosine roll the guess has
/// `u2(0) = u4(0) = 0`. `Phase::Pi` uses the roll shifted by half a period.
pub fn build_initial_guess(
    roll: &RollSolution,
    l: f64,
    r_end: f64,
    phase: Phase,
    mesh_spacing: f64,
) -> Result<PulseSolution> {
    if !(r_end >= l + 10.0) || !(l > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "need L > 0 and R_end ≥ L + 10, got L = {l}, R_end = {r_end}"
        )));
    }
    if !(mesh_spacing > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "mesh spacing must be positive, got {mesh_spacing}"
        )));
    }
    let shift = phase.radians() / (2.0 * core::f64::consts::PI) * roll.period;
    let mesh = uniform_mesh(r_end, mesh_spacing);
    let profile: Vec<StateVec> = mesh
        .iter()
        .map(|&r| {
            let [c0, c1, c2, c3] = envelope(r, l, ENVELOPE_WIDTH);
            let s = roll.sample(r + shift);
            let u = c0 * s.u;
            let ux = c1 * s.u + c0 * s.ux;
            let uxx = c2 * s.u + 2.0 * c1 * s.ux + c0 * s.uxx;
            let uxxx = c3 * s.u + 3.0 * c2 * s.ux + 3.0 * c1 * s.uxx + c0 * s.uxxx;
            if r == 0.0 {
                StateVec::new(u, 0.0, u + uxx, 0.0)
            } else {
                StateVec::new(u, ux, u + uxx, ux + uxxx)
            }
        })
        .collect();
    let params = roll.params;
    let mut p = PulseSolution {
        mesh,
        profile,
        params,
        phase,
        sq_l2_norm: 0.0,
        plateau_length: 0.0,
        bvp_residual: f64::INFINITY,
        reference: Some(RollReference::from_roll(roll)),
    };
    p.refresh_measures();
    Ok(p)
}

impl PulseSolution {
    pub fn r_end(&self) -> f64 {
        *self.mesh.last().unwrap()
    }

    pub fn mu(&self) -> f64 {
        self.params.mu
    }

    pub fn eps(&self) -> f64 {
        self.params.eps
    }

    pub fn is_solved(&self) -> bool {
        self.bvp_residual <= BVP_TOL
    }

    pub fn center(&self) -> StateVec {
        self.profile[0]
    }

    /// `H(u(0), μ)`.
    pub fn h_at_center(&self) -> f64 {
        hamiltonian(&self.profile[0], &self.params)
    }

    pub fn far_field_amplitude(&self) -> f64 {
        self.profile.last().unwrap().max_abs()
    }

    pub(crate) fn flatten(&self) -> Vec<f64> {
        self.profile.iter().flat_map(|u| u.0).collect()
    }

    pub(crate) fn set_flat(&mut self, x: &[f64]) {
        for (u, c) in self.profile.iter_mut().zip(x.chunks_exact(4)) {
            u.0.copy_from_slice(c);
        }
    }

    /// Recomputes the norm and plateau length from the profile.
    pub fn refresh_measures(&mut self) {
        self.sq_l2_norm = measure_norm(self);
        self.plateau_length = match self.reference {
            Some(r) => plateau_length(self, &r, 0.5),
            None => 0.0,
        };
    }

    /// Interval-midpoint states of the scheme.
    pub fn midpoints(&self) -> Vec<(f64, StateVec)> {
        let sys = BvpSystem::new(&self.mesh, self.params);
        (0..self.mesh.len() - 1)
            .map(|i| {
                let h = self.mesh[i + 1] - self.mesh[i];
                let fi = sys.rhs(i, &self.profile[i]);
                let fj = sys.rhs(i + 1, &self.profile[i + 1]);
                let um =
                    (self.profile[i] + self.profile[i + 1]).scale(0.5) + (fi - fj).scale(h / 8.0);
                (0.5 * (self.mesh[i] + self.mesh[i + 1]), um)
            })
            .collect()
    }

    /// The same pulse on the mesh with every interval halved; new nodes come
    /// from the scheme's cubic interpolant.
    pub fn doubled(&self) -> PulseSolution {
        let mids = self.midpoints();
        let mut mesh = Vec::with_capacity(2 * self.mesh.len() - 1);
        let mut profile = Vec::with_capacity(mesh.capacity());
        for i in 0..self.mesh.len() {
            mesh.push(self.mesh[i]);
            profile.push(self.profile[i]);
            if let Some(&(r, u)) = mids.get(i) {
                mesh.push(r);
                profile.push(u);
            }
        }
        let mut p = PulseSolution {
            mesh,
            profile,
            bvp_residual: f64::INFINITY,
            ..self.clone()
        };
        p.refresh_measures();
        p
    }

    /// Collocation defect of this profile on its own mesh (no far-field rows).
    pub fn defect(&self) -> f64 {
        let sys = BvpSystem::new(&self.mesh, self.params);
        let proj = far_field_bc(self.params.mu)
            .map(|b| b.projector)
            .unwrap_or([[0.0; 4]; 2]);
        max_abs(&sys.with_projector(proj).residual(&self.flatten()))
    }

    /// Defect after interpolation to the doubled mesh.
    pub fn verification_residual(&self) -> f64 {
        self.doubled().defect()
    }
}

/// Discretized boundary-value problem on a fixed mesh.
pub(crate) struct BvpSystem<'a> {
    mesh: &'a [f64],
    params: ModelParams,
    projector: [[f64; 4]; 2],
}

impl<'a> BvpSystem<'a> {
    pub(crate) fn new(mesh: &'a [f64], params: ModelParams) -> Self {
        BvpSystem {
            mesh,
            params,
            projector: [[0.0; 4]; 2],
        }
    }

    pub(crate) fn with_projector(mut self, projector: [[f64; 4]; 2]) -> Self {
        self.projector = projector;
        self
    }

    pub(crate) fn for_pulse(mesh: &'a [f64], params: ModelParams) -> Result<Self> {
        Ok(BvpSystem::new(mesh, params).with_projector(far_field_bc(params.mu)?.projector))
    }

    pub(crate) fn size(&self) -> usize {
        4 * self.mesh.len()
    }

    fn rhs(&self, i: usize, u: &StateVec) -> StateVec {
        let r = self.mesh[i];
        if r == 0.0 {
            origin_rhs_unchecked(u, &self.params)
        } else {
            full_rhs_unchecked(u, r, &self.params)
        }
    }

    fn jac(&self, i: usize, u: &StateVec) -> Matrix4<f64> {
        let r = self.mesh[i];
        if r == 0.0 {
            jacobian_origin(u, &self.params)
        } else {
            jacobian_full(u, r, &self.params)
        }
    }

    /// `∂F/∂μ` at node `i`.
    fn rhs_mu(&self, i: usize, u: &StateVec) -> StateVec {
        let s = if self.mesh[i] == 0.0 {
            1.0 / (1.0 + self.params.eps)
        } else {
            1.0
        };
        StateVec::new(0.0, 0.0, 0.0, -s * u.u1())
    }

    pub(crate) fn residual(&self, x: &[f64]) -> Vec<f64> {
        self.assemble(x, None, None)
    }

    /// Residual; optionally fills the banded Jacobian in `u` and the column `∂R/∂μ`.
    pub(crate) fn assemble(
        &self,
        x: &[f64],
        mut jac: Option<&mut BandedMatrix>,
        mut dmu: Option<&mut [f64]>,
    ) -> Vec<f64> {
        let m = self.mesh.len() - 1;
        let node = |i: usize| StateVec([x[4 * i], x[4 * i + 1], x[4 * i + 2], x[4 * i + 3]]);
        let mut res = alloc::vec![0.0; 4 * (m + 1)];
        res[0] = x[1];
        res[1] = x[3];
        if let Some(j) = jac.as_deref_mut() {
            j.fill_zero();
            j.set(0, 1, 1.0);
            j.set(1, 3, 1.0);
        }
        if let Some(d) = dmu.as_deref_mut() {
            d.iter_mut().for_each(|v| *v = 0.0);
        }
        let id = Matrix4::<f64>::identity();
        let mut u_i = node(0);
        let mut f_i = self.rhs(0, &u_i);
        let mut j_i = jac.as_ref().map(|_| self.jac(0, &u_i));
        for i in 0..m {
            let h = self.mesh[i + 1] - self.mesh[i];
            let rm = 0.5 * (self.mesh[i] + self.mesh[i + 1]);
            let u_j = node(i + 1);
            let f_j = self.rhs(i + 1, &u_j);
            let um = (u_i + u_j).scale(0.5) + (f_i - f_j).scale(h / 8.0);
            let fm = full_rhs_unchecked(&um, rm, &self.params);
            let g = (u_j - u_i).scale(1.0 / h) - (f_i + fm.scale(4.0) + f_j).scale(1.0 / 6.0);
            let row = 2 + 4 * i;
            res[row..row + 4].copy_from_slice(&g.0);
            let j_j = jac.as_ref().map(|_| self.jac(i + 1, &u_j));
            if let (Some(jm_out), Some(ji), Some(jj)) =
                (jac.as_deref_mut(), j_i.as_ref(), j_j.as_ref())
            {
                let jmid = jacobian_full(&um, rm, &self.params);
                let a = -id / h - (ji + jmid * 4.0 * (id * 0.5 + ji * (h / 8.0))) / 6.0;
                let b = id / h - (jj + jmid * 4.0 * (id * 0.5 - jj * (h / 8.0))) / 6.0;
                for r in 0..4 {
                    for c in 0..4 {
                        jm_out.set(row + r, 4 * i + c, a[(r, c)]);
                        jm_out.set(row + r, 4 * (i + 1) + c, b[(r, c)]);
                    }
                }
            }
            if let Some(d) = dmu.as_deref_mut() {
                let jmid = jacobian_full(&um, rm, &self.params);
                let fmu_i = self.rhs_mu(i, &u_i);
                let fmu_j = self.rhs_mu(i + 1, &u_j);
                let dum = (fmu_i - fmu_j).scale(h / 8.0);
                let dfm = StateVec::new(0.0, 0.0, 0.0, -um.u1())
                    + StateVec::from(<[f64; 4]>::from(jmid * nalgebra::Vector4::from(dum.0)));
                let dg = (fmu_i + dfm.scale(4.0) + fmu_j).scale(-1.0 / 6.0);
                d[row..row + 4].copy_from_slice(&dg.0);
            }
            u_i = u_j;
            f_i = f_j;
            j_i = j_j;
        }
        let last = node(m);
        for k in 0..2 {
            res[4 * m + 2 + k] = dot4(&self.projector[k], &last.0);
            if let Some(j) = jac.as_deref_mut() {
                for c in 0..4 {
                    j.set(4 * m + 2 + k, 4 * m + c, self.projector[k][c]);
                }
            }
        }
        if let Some(d) = dmu.as_deref_mut() {
            let dp = projector_mu_derivative(self.params.mu);
            for k in 0..2 {
                d[4 * m + 2 + k] = dot4(&dp[k], &last.0);
            }
        }
        res
    }

    pub(crate) fn new_jacobian(&self) -> BandedMatrix {
        BandedMatrix::zeros(self.size(), KL, KU)
    }
}

fn projector_mu_derivative(mu: f64) -> [[f64; 4]; 2] {
    let d = 1e-6 * mu.abs().max(1e-3);
    match (far_field_bc(mu + d), far_field_bc(mu - d)) {
        (Ok(a), Ok(b)) => {
            let mut out = [[0.0; 4]; 2];
            for k in 0..2 {
                for c in 0..4 {
                    out[k][c] = (a.projector[k][c] - b.projector[k][c]) / (2.0 * d);
                }
            }
            out
        }
        _ => [[0.0; 4]; 2],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseOptions {
    /// Newton stops once the defect is below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Mesh doublings allowed when the verification residual is too large.
    pub max_doublings: usize,
}

impl Default for PulseOptions {
    fn default() -> Self {
        PulseOptions {
            tol: 1e-10,
            max_iter: 40,
            max_doublings: MAX_DOUBLINGS,
        }
    }
}

pub(crate) struct BandedNewton {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Damped Newton on a banded system at fixed `μ`.
pub(crate) fn newton_banded(
    sys: &BvpSystem,
    x0: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<BandedNewton> {
    let mut x = x0;
    let mut f = sys.residual(&x);
    let mut norm = max_abs(&f);
    let mut jac = sys.new_jacobian();
    let mut iterations = 0;
    while norm > tol && iterations < max_iter {
        sys.assemble(&x, Some(&mut jac), None);
        let lu = jac.lu()?;
        let mut step = f.clone();
        lu.solve_in_place(&mut step);
        if step.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("pulse Newton"));
        }
        iterations += 1;
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a - lambda * s).collect();
            let ft = sys.residual(&trial);
            let nt = max_abs(&ft);
            if (nt.is_finite() && nt < norm) || lambda < 1.0 / 256.0 {
                if nt.is_finite() {
                    x = trial;
                    f = ft;
                    norm = nt;
                }
                break;
            }
            lambda *= 0.5;
        }
    }
    Ok(BandedNewton {
        x,
        residual: norm,
        iterations,
    })
}

/// Newton solve of the pulse problem at the parameters `p`, starting from `guess`.
///
/// After convergence the profile is interpolated to the doubled mesh; if the
/// defect there exceeds [`VERIFY_TOL`] the problem is re-solved on the finer
/// mesh, at most `max_doublings` times.
pub fn solve_pulse(
    guess: &PulseSolution,
    p: ModelParams,
    opts: &PulseOptions,
) -> Result<PulseSolution> {
    if !(p.eps >= 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "eps must be ≥ 0, got {}",
            p.eps
        )));
    }
    let mut current = PulseSolution {
        params: p,
        ..guess.clone()
    };
    let mut doublings = 0;
    loop {
        let sys = BvpSystem::for_pulse(&current.mesh, p)?;
        let rep = newton_banded(&sys, current.flatten(), opts.tol, opts.max_iter)?;
        if !(rep.residual <= BVP_TOL) {
            return Err(Error::NoConvergence {
                residual: rep.residual,
                iterations: rep.iterations,
            });
        }
        current.set_flat(&rep.x);
        current.bvp_residual = rep.residual;
        current.refresh_measures();
        let check = current.verification_residual();
        if check <= VERIFY_TOL {
            return Ok(current);
        }
        if doublings >= opts.max_doublings {
            return Err(Error::MeshResolution(check));
        }
        doublings += 1;
        current = current.doubled();
    }
}

/// Solves from glued guesses with plateau `l`, `l + p/4`, … up to one roll
/// period longer, returning the first that converges.
pub fn solve_pulse_near(
    roll: &RollSolution,
    l: f64,
    r_end: f64,
    phase: Phase,
    mesh_spacing: f64,
    p: ModelParams,
    opts: &PulseOptions,
) -> Result<PulseSolution> {
    let mut last = Error::InvalidArgument("no attempt".into());
    for k in 0..5 {
        let lk = l + 0.25 * k as f64 * roll.period;
        if lk + 10.0 > r_end {
            break;
        }
        let guess = build_initial_guess(roll, lk, r_end, phase, mesh_spacing)?;
        match solve_pulse(&guess, p, opts) {
            Ok(s) => return Ok(s),
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// `∫₀^{R_end} U² dr` (trapezoid on the mesh).
pub fn measure_norm(pulse: &PulseSolution) -> f64 {
    let y: Vec<f64> = pulse.profile.iter().map(|u| u.u1() * u.u1()).collect();
    trapezoid(&pulse.mesh, &y)
}

/// `∫₀^{R_end} U² r^ε dr`.
pub fn measure_norm_weighted(pulse: &PulseSolution) -> f64 {
    let eps = pulse.params.eps;
    let y: Vec<f64> = pulse
        .profile
        .iter()
        .zip(&pulse.mesh)
        .map(|(u, &r)| u.u1() * u.u1() * r.powf(eps))
        .collect();
    trapezoid(&pulse.mesh, &y)
}

/// Largest `r` whose one-period window `[r - p/2, r + p/2]` has a
/// peak-to-peak oscillation above `fraction` of the roll's; 0 if none.
pub fn plateau_length(pulse: &PulseSolution, reference: &RollReference, fraction: f64) -> f64 {
    let threshold = fraction * reference.peak_to_peak;
    let half = 0.5 * reference.period;
    let mesh = &pulse.mesh;
    let n = mesh.len();
    let (mut lo, mut hi) = (0usize, 0usize);
    let mut best = 0.0;
    for i in 0..n {
        let r = mesh[i];
        while lo < n && mesh[lo] < r - half {
            lo += 1;
        }
        while hi + 1 < n && mesh[hi + 1] <= r + half {
            hi += 1;
        }
        let (mut a, mut b) = (f64::INFINITY, f64::NEG_INFINITY);
        for u in &pulse.profile[lo..=hi] {
            a = a.min(u.u1());
            b = b.max(u.u1());
        }
        if b - a > threshold {
            best = r;
        }
    }
    best
}

/// `(r, H(u(r), μ))` at every mesh node.
pub fn hamiltonian_trace(pulse: &PulseSolution) -> Vec<(f64, f64)> {
    pulse
        .mesh
        .iter()
        .zip(&pulse.profile)
        .map(|(&r, u)| (r, hamiltonian(u, &pulse.params)))
        .collect()
}

/// Max over interior nodes of `|D_h H - (-2ε/r) u2 u4|`, relative to the max of
/// the right-hand side; `D_h` is the central difference on the mesh.
pub fn pumping_residual(pulse: &PulseSolution) -> f64 {
    let tr = hamiltonian_trace(pulse);
    let eps = pulse.params.eps;
    let (mut worst, mut scale) = (0.0f64, 0.0f64);
    for i in 1..tr.len() - 1 {
        let r = tr[i].0;
        let u = &pulse.profile[i];
        let rhs = -2.0 * eps / r * u.u2() * u.u4();
        let dh = (tr[i + 1].1 - tr[i - 1].1) / (tr[i + 1].0 - tr[i - 1].0);
        worst = worst.max((dh - rhs).abs());
        scale = scale.max(rhs.abs());
    }
    if scale == 0.0 {
        worst
    } else {
        worst / scale
    }
}
