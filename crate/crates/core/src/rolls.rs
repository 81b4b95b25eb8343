//! Symmetric periodic rolls of the steady one-dimensional equation
//! `-(1 + ∂_x²)²U - μU + νU² - U³ = 0` at a prescribed level `H = h`.
//!
//! A roll is a cosine series `U(x) = Σ a_k cos(2πkx/p)` with unknown period
//! `p`; the cosine ansatz fixes the phase and puts `γ(0)` in `Fix(R)`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Complex, DMatrix};
#[allow(unused_imports)]
use num_traits::Float;

use crate::model::{hamiltonian, jacobian_f, ModelParams, StateVec};
use crate::numerics::{eigenvalues4, max_abs, monodromy, newton_solve};
use crate::{Error, Result};

pub const DEFAULT_MODES: usize = 64;
pub const MAX_MODES: usize = 256;
/// Collocation residual accepted by [`solve_roll`].
pub const ROLL_TOL: f64 = 1e-10;
/// Shorter periods mean Newton has left the roll family.
pub const MIN_PERIOD: f64 = 1.0;
/// Multipliers this close to 1 are counted by [`FloquetData::unit_multiplicity`].
pub const UNIT_MULTIPLIER_TOL: f64 = 1e-4;

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 40;
const TAIL_RATIO: f64 = 1e-10;
const HYPERBOLIC_GAP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RollSolution {
    /// `a_0..a_N`.
    pub cosine_coeffs: Vec<f64>,
    pub period: f64,
    /// `ε` is always 0 for rolls.
    pub params: ModelParams,
    /// `h = H(γ(0), μ)`.
    pub level: f64,
    /// Set from [`floquet`].
    pub floquet_alpha: Option<f64>,
    /// Max-norm of the collocation residual; infinite for unsolved guesses.
    pub residual_norm: f64,
}

/// `U` and its first four derivatives at one point, with the phase-space state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollSample {
    pub u: f64,
    pub ux: f64,
    pub uxx: f64,
    pub uxxx: f64,
    pub uxxxx: f64,
    /// `(U, U', U + U'', U' + U''')`.
    pub state: StateVec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FloquetData {
    pub multipliers: [Complex<f64>; 4],
    /// Multipliers `e^{±αp}`.
    pub alpha: f64,
    pub unit_multiplicity: usize,
}

impl FloquetData {
    pub fn product(&self) -> Complex<f64> {
        self.multipliers
            .iter()
            .fold(Complex::new(1.0, 0.0), |acc, m| acc * m)
    }
}

impl RollSolution {
    pub fn modes(&self) -> usize {
        self.cosine_coeffs.len() - 1
    }

    pub fn mu(&self) -> f64 {
        self.params.mu
    }

    pub fn nu(&self) -> f64 {
        self.params.nu
    }

    pub fn amplitude(&self) -> f64 {
        self.cosine_coeffs[1]
    }

    pub fn is_solved(&self) -> bool {
        self.residual_norm <= ROLL_TOL
    }

    pub fn sample(&self, x: f64) -> RollSample {
        sample_roll(self, x)
    }

    pub fn state(&self, x: f64) -> StateVec {
        sample_roll(self, x).state
    }

    /// `-(1 + ∂_x²)²U - μU + νU² - U³` at `x`.
    pub fn steady_residual(&self, x: f64) -> f64 {
        let s = sample_roll(self, x);
        let (mu, nu) = (self.params.mu, self.params.nu);
        -(s.u + 2.0 * s.uxx + s.uxxxx) - mu * s.u + nu * s.u * s.u - s.u * s.u * s.u
    }

    /// `n` equispaced samples of one period, starting at `x = 0`.
    pub fn samples(&self, n: usize) -> Vec<RollSample> {
        (0..n)
            .map(|m| sample_roll(self, self.period * m as f64 / n as f64))
            .collect()
    }

    /// `max |U|` over `n` samples.
    pub fn max_abs_u(&self, n: usize) -> f64 {
        self.samples(n).iter().fold(0.0f64, |m, s| m.max(s.u.abs()))
    }

    /// The same roll shifted by half a period (minimum at the center when `a_1 > 0`).
    pub fn half_shift(&self) -> RollSolution {
        let mut r = self.clone();
        for (k, a) in r.cosine_coeffs.iter_mut().enumerate() {
            if k % 2 == 1 {
                *a = -*a;
            }
        }
        r
    }

    /// `|a_N| / max_k |a_k|`.
    pub fn tail_ratio(&self) -> f64 {
        let n = self.modes();
        self.cosine_coeffs[n].abs() / max_abs(&self.cosine_coeffs)
    }

    /// Copy with `n + 1` coefficients (truncated or zero padded).
    pub fn resized(&self, n: usize) -> RollSolution {
        let mut r = self.clone();
        r.cosine_coeffs.resize(n + 1, 0.0);
        r
    }
}

pub fn roll_onset_guess(mu: f64, nu: f64, amplitude: f64) -> RollSolution {
    let mut cosine_coeffs = alloc::vec![0.0; DEFAULT_MODES + 1];
    cosine_coeffs[1] = amplitude;
    RollSolution {
        cosine_coeffs,
        period: 2.0 * PI,
        params: ModelParams::new(mu, nu, 0.0),
        level: 0.0,
        floquet_alpha: None,
        residual_norm: f64::INFINITY,
    }
}

pub fn sample_roll(roll: &RollSolution, x: f64) -> RollSample {
    let q = 2.0 * PI / roll.period;
    let theta = q * x;
    let (s1, c1) = theta.sin_cos();
    let (mut c, mut s) = (1.0, 0.0);
    let (mut u, mut ux, mut uxx, mut uxxx, mut uxxxx) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (k, &a) in roll.cosine_coeffs.iter().enumerate() {
        let kap = q * k as f64;
        let kap2 = kap * kap;
        u += a * c;
        ux -= a * kap * s;
        uxx -= a * kap2 * c;
        uxxx += a * kap2 * kap * s;
        uxxxx += a * kap2 * kap2 * c;
        let cn = c * c1 - s * s1;
        s = s * c1 + c * s1;
        c = cn;
    }
    RollSample {
        u,
        ux,
        uxx,
        uxxx,
        uxxxx,
        state: StateVec::new(u, ux, u + uxx, ux + uxxx),
    }
}

/// Cosine table on the collocation points `θ_j = πj/N`, `j = 0..N`.
struct Collocation {
    n: usize,
    cos: Vec<f64>,
}

impl Collocation {
    fn new(n: usize) -> Self {
        let mut cos = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for k in 0..=n {
                // Reduce jk mod 2N before scaling so the table is exact at the nodes.
                let m = (j * k) % (2 * n);
                cos.push((PI * m as f64 / n as f64).cos());
            }
        }
        Collocation { n, cos }
    }

    #[inline]
    fn c(&self, j: usize, k: usize) -> f64 {
        self.cos[j * (self.n + 1) + k]
    }

    /// Residual (N+2) and Jacobian with columns `a_0..a_N, p, μ`.
    fn system(
        &self,
        a: &[f64],
        p: f64,
        mu: f64,
        nu: f64,
        h: f64,
        want_jac: bool,
    ) -> (Vec<f64>, Option<DMatrix<f64>>) {
        let n = self.n;
        let q = 2.0 * PI / p;
        let kap2: Vec<f64> = (0..=n).map(|k| (q * k as f64) * (q * k as f64)).collect();
        let lin: Vec<f64> = kap2.iter().map(|&k2| (1.0 - k2) * (1.0 - k2)).collect();
        let dlin_dp: Vec<f64> = kap2.iter().map(|&k2| 4.0 * k2 * (1.0 - k2) / p).collect();
        let mut res = Vec::with_capacity(n + 2);
        let mut jac = if want_jac {
            Some(DMatrix::zeros(n + 2, n + 3))
        } else {
            None
        };
        for j in 0..=n {
            let (mut u, mut l, mut d) = (0.0, 0.0, 0.0);
            for k in 0..=n {
                let ac = a[k] * self.c(j, k);
                u += ac;
                l += lin[k] * ac;
                d += dlin_dp[k] * ac;
            }
            res.push(-l - mu * u + nu * u * u - u * u * u);
            if let Some(jm) = jac.as_mut() {
                let dn = -mu + 2.0 * nu * u - 3.0 * u * u;
                for k in 0..=n {
                    jm[(j, k)] = (dn - lin[k]) * self.c(j, k);
                }
                jm[(j, n + 1)] = -d;
                jm[(j, n + 2)] = -u;
            }
        }
        let u1: f64 = a.iter().sum();
        let u3: f64 = a.iter().zip(&kap2).map(|(ak, k2)| (1.0 - k2) * ak).sum();
        let params = ModelParams::new(mu, nu, 0.0);
        res.push(hamiltonian(&StateVec::new(u1, 0.0, u3, 0.0), &params) - h);
        if let Some(jm) = jac.as_mut() {
            let h1 = u3 + mu * u1 - nu * u1 * u1 + u1 * u1 * u1;
            let h3 = u1 - u3;
            for k in 0..=n {
                jm[(n + 1, k)] = h1 + h3 * (1.0 - kap2[k]);
            }
            let du3_dp: f64 = a.iter().zip(&kap2).map(|(ak, k2)| 2.0 * k2 / p * ak).sum();
            jm[(n + 1, n + 1)] = h3 * du3_dp;
            jm[(n + 1, n + 2)] = 0.5 * u1 * u1;
        }
        (res, jac)
    }
}

fn check_nontrivial(a: &[f64], mu: f64, h: f64) -> Result<()> {
    if max_abs(&a[1..]) < 1e-8 {
        return Err(Error::NoRoll { mu, h });
    }
    Ok(())
}

/// Newton at fixed `N` with unknowns `(a_0..a_N, p)`.
fn solve_fixed_modes(mu: f64, nu: f64, h: f64, a0: &[f64], p0: f64) -> Result<RollSolution> {
    let n = a0.len() - 1;
    let col = Collocation::new(n);
    let mut x0 = a0.to_vec();
    x0.push(p0);
    let rep = newton_solve(
        |x| col.system(&x[..=n], x[n + 1], mu, nu, h, false).0,
        |x| {
            col.system(&x[..=n], x[n + 1], mu, nu, h, true)
                .1
                .unwrap()
                .remove_column(n + 2)
        },
        &x0,
        NEWTON_TOL,
        NEWTON_MAX_ITER,
    )?;
    finish(rep.solution, rep.residual_norm, rep.iterations, mu, nu, h)
}

fn finish(
    mut x: Vec<f64>,
    residual: f64,
    iterations: usize,
    mu: f64,
    nu: f64,
    h: f64,
) -> Result<RollSolution> {
    let period = x.pop().unwrap();
    if !(residual <= ROLL_TOL) {
        return Err(Error::NoConvergence {
            residual,
            iterations,
        });
    }
    if !(period >= MIN_PERIOD) {
        return Err(Error::PeriodCollapse(period));
    }
    check_nontrivial(&x, mu, h)?;
    Ok(RollSolution {
        cosine_coeffs: x,
        period,
        params: ModelParams::new(mu, nu, 0.0),
        level: h,
        floquet_alpha: None,
        residual_norm: residual,
    })
}

/// Roll at `(μ, ν)` with `H(γ(0)) = h_target`, starting from `guess`.
///
/// Uses `n_modes` cosine modes and doubles them (up to [`MAX_MODES`]) while
/// the spectral tail `|a_N|/max|a_k|` exceeds `1e-10`.
pub fn solve_roll(
    mu: f64,
    nu: f64,
    h_target: f64,
    guess: &RollSolution,
    n_modes: usize,
) -> Result<RollSolution> {
    if guess.cosine_coeffs.len() < 2 || guess.amplitude() == 0.0 || !guess.amplitude().is_finite() {
        return Err(Error::InvalidArgument("roll guess needs a_1 != 0".into()));
    }
    if n_modes < 2 {
        return Err(Error::InvalidArgument(alloc::format!(
            "need at least 2 modes, got {n_modes}"
        )));
    }
    let mut n = n_modes;
    let mut start = guess.resized(n);
    loop {
        let sol = solve_fixed_modes(mu, nu, h_target, &start.cosine_coeffs, start.period)?;
        if sol.tail_ratio() <= TAIL_RATIO || n >= MAX_MODES {
            return Ok(sol);
        }
        n = (2 * n).min(MAX_MODES);
        start = sol.resized(n);
    }
}

/// Roll with prescribed `a_1` and level `h`; `μ` is an unknown.
fn solve_fixed_amplitude(nu: f64, h: f64, guess: &RollSolution) -> Result<RollSolution> {
    let n = guess.modes();
    let a1 = guess.amplitude();
    let col = Collocation::new(n);
    let expand = |x: &[f64]| -> (Vec<f64>, f64, f64) {
        let mut a = Vec::with_capacity(n + 1);
        a.push(x[0]);
        a.push(a1);
        a.extend_from_slice(&x[1..n]);
        (a, x[n], x[n + 1])
    };
    let mut x0 = Vec::with_capacity(n + 2);
    x0.push(guess.cosine_coeffs[0]);
    x0.extend_from_slice(&guess.cosine_coeffs[2..]);
    x0.push(guess.period);
    x0.push(guess.params.mu);
    let rep = newton_solve(
        |x| {
            let (a, p, mu) = expand(x);
            col.system(&a, p, mu, nu, h, false).0
        },
        |x| {
            let (a, p, mu) = expand(x);
            col.system(&a, p, mu, nu, h, true)
                .1
                .unwrap()
                .remove_column(1)
        },
        &x0,
        NEWTON_TOL,
        NEWTON_MAX_ITER,
    )?;
    let (a, p, mu) = expand(&rep.solution);
    let mut x = a;
    x.push(p);
    finish(x, rep.residual_norm, rep.iterations, mu, nu, h)
}

/// The `h = 0` roll family continued from onset with `a_1` as parameter.
///
/// `μ` increases from 0 along the small-amplitude rolls, turns at a fold and
/// decreases along the large-amplitude rolls, which are the hyperbolic ones.
#[derive(Debug, Clone, PartialEq)]
pub struct OnsetBranch {
    pub nu: f64,
    pub points: Vec<RollSolution>,
    /// Index of the point with the largest `μ`.
    pub fold_index: usize,
}

const ONSET_AMPLITUDE: f64 = 0.05;
const AMPLITUDE_STEP: f64 = 0.02;
const AMPLITUDE_STEP_MIN: f64 = 1e-3;
const AMPLITUDE_MAX: f64 = 2.5;

/// Traces the onset branch until `μ` drops below `mu_floor` on the
/// large-amplitude side.
pub fn trace_onset_branch(nu: f64, n_modes: usize, mu_floor: f64) -> Result<OnsetBranch> {
    let mut guess = roll_onset_guess(0.0, nu, ONSET_AMPLITUDE).resized(n_modes);
    let first = solve_fixed_amplitude(nu, 0.0, &guess)?;
    let mut points = alloc::vec![first];
    let mut step = AMPLITUDE_STEP;
    let mut fold_index = 0;
    let mut past_fold = false;
    while points.len() < 2000 {
        let last = points.last().unwrap();
        let a1 = last.amplitude() + step;
        if a1 > AMPLITUDE_MAX {
            break;
        }
        guess = last.clone();
        if points.len() >= 2 {
            let prev = &points[points.len() - 2];
            let t = step / (last.amplitude() - prev.amplitude());
            for (g, (l, p)) in guess
                .cosine_coeffs
                .iter_mut()
                .zip(last.cosine_coeffs.iter().zip(&prev.cosine_coeffs))
            {
                *g = l + t * (l - p);
            }
            guess.period = last.period + t * (last.period - prev.period);
            guess.params.mu = last.params.mu + t * (last.params.mu - prev.params.mu);
        }
        guess.cosine_coeffs[1] = a1;
        match solve_fixed_amplitude(nu, 0.0, &guess) {
            Ok(sol) => {
                let mu = sol.params.mu;
                points.push(sol);
                let i = points.len() - 1;
                if mu > points[fold_index].params.mu {
                    fold_index = i;
                } else if i > fold_index + 1 {
                    past_fold = true;
                }
                if past_fold && mu < mu_floor {
                    break;
                }
                step = (step * 1.5).min(AMPLITUDE_STEP);
            }
            Err(e) => {
                step *= 0.5;
                if step < AMPLITUDE_STEP_MIN {
                    if past_fold {
                        break;
                    }
                    return Err(e);
                }
            }
        }
    }
    if !past_fold {
        return Err(Error::Continuation(
            "onset branch did not pass its fold".into(),
        ));
    }
    Ok(OnsetBranch {
        nu,
        points,
        fold_index,
    })
}

impl OnsetBranch {
    /// `μ` at the fold of the `h = 0` family (largest `μ` on the traced points).
    pub fn fold_mu(&self) -> f64 {
        self.points[self.fold_index].params.mu
    }

    /// Range of `μ` covered by the large-amplitude side.
    pub fn upper_mu_range(&self) -> (f64, f64) {
        (self.points.last().unwrap().params.mu, self.fold_mu())
    }

    /// Large-amplitude `h = 0` roll at `mu`, seeded from the nearest traced point.
    pub fn roll_at(&self, mu: f64) -> Result<RollSolution> {
        let upper = &self.points[self.fold_index..];
        let (lo, hi) = self.upper_mu_range();
        if !(mu >= lo && mu <= hi) {
            return Err(Error::NoRoll { mu, h: 0.0 });
        }
        let nearest = upper
            .iter()
            .min_by(|a, b| {
                (a.params.mu - mu)
                    .abs()
                    .total_cmp(&(b.params.mu - mu).abs())
            })
            .unwrap();
        // Near the fold the nearest point can still sit below it; stay on the
        // large-amplitude side by never seeding from an amplitude under the fold's.
        let seed = if nearest.amplitude() < self.points[self.fold_index].amplitude() {
            &self.points[self.fold_index]
        } else {
            nearest
        };
        let n = seed.modes();
        solve_roll(mu, self.nu, 0.0, seed, n)
    }
}

/// Rolls on a `μ × h` grid; failed nodes are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct RollFamily {
    pub nu: f64,
    pub mu_values: Vec<f64>,
    pub h_values: Vec<f64>,
    /// Row-major: index `i * h_values.len() + j` for `(μ_i, h_j)`.
    pub nodes: Vec<Option<RollSolution>>,
}

impl RollFamily {
    pub fn get(&self, i: usize, j: usize) -> Option<&RollSolution> {
        self.nodes[i * self.h_values.len() + j].as_ref()
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> Option<&mut RollSolution> {
        let nh = self.h_values.len();
        self.nodes[i * nh + j].as_mut()
    }

    pub fn solved_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_some()).count()
    }

    pub fn solved_fraction(&self) -> f64 {
        self.solved_count() as f64 / self.nodes.len() as f64
    }

    /// `(i, j, roll)` for every solved node.
    pub fn iter_solved(&self) -> impl Iterator<Item = (usize, usize, &RollSolution)> {
        let nh = self.h_values.len();
        self.nodes
            .iter()
            .enumerate()
            .filter_map(move |(idx, n)| n.as_ref().map(|r| (idx / nh, idx % nh, r)))
    }
}

pub fn linspace(range: (f64, f64), n: usize) -> Vec<f64> {
    if n == 1 {
        return alloc::vec![0.5 * (range.0 + range.1)];
    }
    (0..n)
        .map(|i| range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64)
        .collect()
}

const H_SUBSTEPS: usize = 4;

fn step_in_h(from: &RollSolution, h: f64) -> Result<RollSolution> {
    let (mu, nu, n) = (from.params.mu, from.params.nu, from.modes());
    match solve_roll(mu, nu, h, from, n) {
        Ok(r) => Ok(r),
        Err(_) => {
            let mut cur = from.clone();
            let h0 = from.level;
            for s in 1..=H_SUBSTEPS {
                let hs = h0 + (h - h0) * s as f64 / H_SUBSTEPS as f64;
                cur = solve_roll(mu, nu, hs, &cur, cur.modes())?;
            }
            Ok(cur)
        }
    }
}

/// Roll family on an `nm × nh` grid over `mu_range × h_range`.
///
/// The `h = 0` rolls come from the onset branch ([`trace_onset_branch`]); each
/// `μ` column is then continued in `h` outward from `h = 0`, reusing the
/// previous node as guess. Failures are recorded as `None`.
pub fn continue_rolls(
    mu_range: (f64, f64),
    h_range: (f64, f64),
    steps: (usize, usize),
    nu: f64,
    n_modes: usize,
) -> Result<RollFamily> {
    let (nm, nh) = steps;
    if nm == 0 || nh == 0 || !(mu_range.0 <= mu_range.1) || !(h_range.0 <= h_range.1) {
        return Err(Error::InvalidArgument("empty roll grid".into()));
    }
    let span = (mu_range.1 - mu_range.0).max(0.05);
    let branch = trace_onset_branch(nu, n_modes, mu_range.0 - 0.25 * span)?;
    let mu_values = linspace(mu_range, nm);
    let h_values = linspace(h_range, nh);
    let mut nodes = alloc::vec![None; nm * nh];
    for (i, &mu) in mu_values.iter().enumerate() {
        let Ok(base) = branch.roll_at(mu) else {
            continue;
        };
        let mut up: Vec<usize> = (0..nh).filter(|&j| h_values[j] >= 0.0).collect();
        up.sort_by(|&a, &b| h_values[a].total_cmp(&h_values[b]));
        let mut down: Vec<usize> = (0..nh).filter(|&j| h_values[j] < 0.0).collect();
        down.sort_by(|&a, &b| h_values[b].total_cmp(&h_values[a]));
        for sweep in [up, down] {
            let mut prev = base.clone();
            for j in sweep {
                if let Ok(r) = step_in_h(&prev, h_values[j]) {
                    prev = r.clone();
                    nodes[i * nh + j] = Some(r);
                }
            }
        }
    }
    Ok(RollFamily {
        nu,
        mu_values,
        h_values,
        nodes,
    })
}

/// Floquet multipliers of the `ε = 0` linearization about the roll.
///
/// Fails with [`Error::NotHyperbolic`] unless a real multiplier `λ > 1 + 1e-6`
/// exists away from the double unit multiplier.
pub fn floquet(roll: &RollSolution) -> Result<FloquetData> {
    let params = roll.params.with_eps(0.0);
    let m = monodromy(
        |x| jacobian_f(&sample_roll(roll, x).state, &params),
        roll.period,
    )?;
    let multipliers = eigenvalues4(&m);
    let unit =
        |z: &Complex<f64>| (z - Complex::new(1.0, 0.0)).norm_sqr().sqrt() < UNIT_MULTIPLIER_TOL;
    let unit_multiplicity = multipliers.iter().filter(|z| unit(z)).count();
    let lambda = multipliers
        .iter()
        .filter(|z| !unit(z) && z.im.abs() <= 1e-8 * (1.0 + z.re.abs()))
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(lambda > 1.0 + HYPERBOLIC_GAP) {
        let largest = multipliers
            .iter()
            .map(|z| z.norm_sqr().sqrt())
            .fold(0.0, f64::max);
        return Err(Error::NotHyperbolic(largest));
    }
    Ok(FloquetData {
        multipliers,
        alpha: lambda.ln() / roll.period,
        unit_multiplicity,
    })
}

impl RollFamily {
    /// Runs [`floquet`] on every solved node and stores `α` in the node.
    pub fn compute_floquet(&mut self) -> Vec<Option<FloquetData>> {
        self.nodes
            .iter_mut()
            .map(|node| {
                let roll = node.as_mut()?;
                let fd = floquet(roll).ok()?;
                roll.floquet_alpha = Some(fd.alpha);
                Some(fd)
            })
            .collect()
    }
}
