//! The averaged field `S(h, μ)`, the PDE energy and the Maxwell point.
//!
//! Along a roll at level `h`, `S = (-2/p)∫(U'² + U'U''')dx` is the period
//! average of `⟨∇H, g⟩`, and `S = E - h` where `E` is the period-averaged
//! energy.

use alloc::vec::Vec;

use crate::model::{energy_density, g_pert, grad_hamiltonian};
use crate::numerics::periodic_trapezoid;
use crate::rolls::{solve_roll, trace_onset_branch, OnsetBranch, RollFamily, RollSolution};
use crate::{Error, Result};

/// Default central-difference step for [`s_derivatives`].
pub const DERIVATIVE_STEP: f64 = 1e-4;
/// Bisection stops at this bracket width before the secant polish.
pub const MAXWELL_BISECTION_WIDTH: f64 = 1e-6;
pub const MAXWELL_SECANT_STEPS: usize = 3;

fn sample_count(roll: &RollSolution) -> usize {
    (4 * roll.modes()).max(64)
}

/// `(-2/p)∫(U'² + U'U''')dx` on `4N` samples.
pub fn s_field(roll: &RollSolution) -> f64 {
    s_field_with(roll, sample_count(roll))
}

pub fn s_field_with(roll: &RollSolution, samples: usize) -> f64 {
    let v: Vec<f64> = roll
        .samples(samples)
        .iter()
        .map(|s| -2.0 * (s.ux * s.ux + s.ux * s.uxxx))
        .collect();
    periodic_trapezoid(&v)
}

/// Period average of `⟨∇H(γ), g(γ)⟩`, the same quantity through the phase-space variables.
pub fn s_field_pumping(roll: &RollSolution) -> f64 {
    let v: Vec<f64> = roll
        .samples(sample_count(roll))
        .iter()
        .map(|s| grad_hamiltonian(&s.state, &roll.params).dot(&g_pert(&s.state)))
        .collect();
    periodic_trapezoid(&v)
}

/// Period average of the energy density.
pub fn pde_energy(roll: &RollSolution) -> f64 {
    pde_energy_with(roll, sample_count(roll))
}

pub fn pde_energy_with(roll: &RollSolution, samples: usize) -> f64 {
    let v: Vec<f64> = roll
        .samples(samples)
        .iter()
        .map(|s| energy_density(s.u, s.uxx, &roll.params))
        .collect();
    periodic_trapezoid(&v)
}

/// `(1/p)∫U²/2 dx`, which equals `S_μ` at the Maxwell point.
pub fn half_mean_square(roll: &RollSolution) -> f64 {
    let v: Vec<f64> = roll
        .samples(sample_count(roll))
        .iter()
        .map(|s| 0.5 * s.u * s.u)
        .collect();
    periodic_trapezoid(&v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxwellPoint {
    pub mu: f64,
    /// `S(0, μ)` at the returned `μ`.
    pub s: f64,
    /// The `h = 0` roll at `μ`.
    pub roll: RollSolution,
    /// Bracket after pulling unsolvable endpoints inside the roll family.
    pub bracket: (f64, f64),
}

fn s_at(branch: &OnsetBranch, mu: f64) -> Result<(f64, RollSolution)> {
    let roll = branch.roll_at(mu)?;
    Ok((s_field(&roll), roll))
}

/// Largest (or smallest) `μ` between `good` and `bad` with a roll, to `1e-6`.
fn pull_inside(branch: &OnsetBranch, mut good: f64, mut bad: f64) -> f64 {
    while (bad - good).abs() > MAXWELL_BISECTION_WIDTH {
        let mid = 0.5 * (good + bad);
        if branch.roll_at(mid).is_ok() {
            good = mid;
        } else {
            bad = mid;
        }
    }
    good
}

/// Root `μ_Max` of `S(0, ·)` on the large-amplitude roll family.
///
/// An endpoint beyond the fold of the `h = 0` family has no roll; it is moved
/// to the edge of the family before the sign check.
pub fn maxwell_point(nu: f64, mu_bracket: (f64, f64)) -> Result<MaxwellPoint> {
    let (lo, hi) = mu_bracket;
    if !(lo < hi) {
        return Err(Error::InvalidArgument(alloc::format!(
            "empty bracket [{lo}, {hi}]"
        )));
    }
    let branch = trace_onset_branch(nu, crate::rolls::DEFAULT_MODES, lo - 0.05)?;
    maxwell_point_on(&branch, mu_bracket)
}

/// [`maxwell_point`] on an already traced onset branch.
pub fn maxwell_point_on(branch: &OnsetBranch, mu_bracket: (f64, f64)) -> Result<MaxwellPoint> {
    let (mut lo, mut hi) = mu_bracket;
    let (fold, floor) = (branch.fold_mu(), branch.upper_mu_range().0);
    if hi > fold && lo < fold {
        hi = pull_inside(branch, lo.max(floor), hi);
    }
    if lo < floor && hi > floor {
        lo = pull_inside(branch, hi.min(fold), lo);
    }
    let (mut s_lo, _) = s_at(branch, lo)?;
    let (s_hi, _) = s_at(branch, hi)?;
    if s_lo.signum() == s_hi.signum() || s_lo == 0.0 || s_hi == 0.0 {
        if s_lo == 0.0 || s_hi == 0.0 {
            let mu = if s_lo == 0.0 { lo } else { hi };
            let (s, roll) = s_at(branch, mu)?;
            return Ok(MaxwellPoint {
                mu,
                s,
                roll,
                bracket: (lo, hi),
            });
        }
        return Err(Error::NoSignChange { lo, hi, s_lo, s_hi });
    }
    let bracket = (lo, hi);
    let (mut a, mut b) = (lo, hi);
    while b - a > MAXWELL_BISECTION_WIDTH {
        let mid = 0.5 * (a + b);
        let (s_mid, _) = s_at(branch, mid)?;
        if s_mid.signum() == s_lo.signum() {
            a = mid;
            s_lo = s_mid;
        } else {
            b = mid;
        }
    }
    let (mut x0, mut x1) = (a, b);
    let (mut f0, _) = s_at(branch, x0)?;
    let (mut f1, mut roll) = s_at(branch, x1)?;
    for _ in 0..MAXWELL_SECANT_STEPS {
        if f1 == f0 || f1 == 0.0 {
            break;
        }
        let x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        let (f2, r2) = s_at(branch, x2)?;
        (x0, f0) = (x1, f1);
        (x1, f1, roll) = (x2, f2, r2);
    }
    if f0.abs() < f1.abs() {
        x1 = x0;
        let (f, r) = s_at(branch, x1)?;
        f1 = f;
        roll = r;
    }
    Ok(MaxwellPoint {
        mu: x1,
        s: f1,
        roll,
        bracket,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SDerivatives {
    pub s_h: f64,
    pub s_mu: f64,
}

/// Central differences of `S` at the roll's `(h, μ)`, re-solving the roll at
/// each of the four stencil points.
pub fn s_derivatives(center: &RollSolution, step: f64) -> Result<SDerivatives> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "step must be positive, got {step}"
        )));
    }
    let (mu, nu, h, n) = (center.mu(), center.nu(), center.level, center.modes());
    let s = |m: f64, l: f64| solve_roll(m, nu, l, center, n).map(|r| s_field(&r));
    let s_h = (s(mu, h + step)? - s(mu, h - step)?) / (2.0 * step);
    let s_mu = (s(mu + step, h)? - s(mu - step, h)?) / (2.0 * step);
    Ok(SDerivatives { s_h, s_mu })
}

/// `S`, `E`, `p` and `|S - (E - h)|` on a `μ × h` grid (row-major, `None` where
/// no roll was found).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SVFGrid {
    pub nu: f64,
    pub mu_values: Vec<f64>,
    pub h_values: Vec<f64>,
    pub s: Vec<Option<f64>>,
    pub e: Vec<Option<f64>>,
    pub p: Vec<Option<f64>>,
    pub identity_residual: Vec<Option<f64>>,
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

/// Evaluates every solved node of the family.
pub fn s_grid(family: &RollFamily) -> SVFGrid {
    let mut grid = SVFGrid::empty(family.nu, family.mu_values.clone(), family.h_values.clone());
    for (idx, node) in family.nodes.iter().enumerate() {
        if let Some(roll) = node {
            grid.fill(idx, roll);
        }
    }
    grid
}

impl SVFGrid {
    pub fn empty(nu: f64, mu_values: Vec<f64>, h_values: Vec<f64>) -> Self {
        let n = mu_values.len() * h_values.len();
        SVFGrid {
            nu,
            mu_values,
            h_values,
            s: alloc::vec![None; n],
            e: alloc::vec![None; n],
            p: alloc::vec![None; n],
            identity_residual: alloc::vec![None; n],
        }
    }

    /// Writes the values of `roll` at flat index `idx`.
    pub fn fill(&mut self, idx: usize, roll: &RollSolution) {
        let s = s_field(roll);
        let e = pde_energy(roll);
        self.s[idx] = Some(s);
        self.e[idx] = Some(e);
        self.p[idx] = Some(roll.period);
        self.identity_residual[idx] = Some((s - (e - roll.level)).abs());
    }

    /// Grid with `S = f(h, μ)`; `E = S + h` and `p = 2π` so the identity holds.
    pub fn from_fn(
        mu_values: Vec<f64>,
        h_values: Vec<f64>,
        mut f: impl FnMut(f64, f64) -> f64,
    ) -> Result<Self> {
        if !strictly_increasing(&mu_values)
            || !strictly_increasing(&h_values)
            || mu_values.len() < 2
            || h_values.len() < 2
        {
            return Err(Error::InvalidArgument(
                "grid axes must be strictly increasing with ≥ 2 values".into(),
            ));
        }
        let mut g = SVFGrid::empty(f64::NAN, mu_values, h_values);
        for i in 0..g.mu_values.len() {
            for j in 0..g.h_values.len() {
                let (mu, h) = (g.mu_values[i], g.h_values[j]);
                let idx = g.index(i, j);
                let s = f(h, mu);
                g.s[idx] = Some(s);
                g.e[idx] = Some(s + h);
                g.p[idx] = Some(2.0 * core::f64::consts::PI);
                g.identity_residual[idx] = Some(0.0);
            }
        }
        Ok(g)
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.h_values.len() + j
    }

    pub fn s_at(&self, i: usize, j: usize) -> Option<f64> {
        self.s[self.index(i, j)]
    }

    pub fn is_well_formed(&self) -> bool {
        strictly_increasing(&self.mu_values) && strictly_increasing(&self.h_values)
    }

    pub fn solved_count(&self) -> usize {
        self.s.iter().filter(|v| v.is_some()).count()
    }

    pub fn max_identity_residual(&self) -> f64 {
        self.identity_residual
            .iter()
            .flatten()
            .fold(0.0, |m, &v| f64::max(m, v))
    }

    pub fn mu_range(&self) -> (f64, f64) {
        (self.mu_values[0], *self.mu_values.last().unwrap())
    }

    pub fn h_range(&self) -> (f64, f64) {
        (self.h_values[0], *self.h_values.last().unwrap())
    }

    fn cell(values: &[f64], x: f64) -> Option<(usize, f64)> {
        let n = values.len();
        if n < 2 || !(x >= values[0] && x <= values[n - 1]) {
            return None;
        }
        let k = values.partition_point(|&v| v <= x).clamp(1, n - 1) - 1;
        Some((k, (x - values[k]) / (values[k + 1] - values[k])))
    }

    /// Bilinear interpolation of `S`; `None` outside the grid or next to an unsolved node.
    pub fn interpolate(&self, h: f64, mu: f64) -> Option<f64> {
        let (i, tm) = Self::cell(&self.mu_values, mu)?;
        let (j, th) = Self::cell(&self.h_values, h)?;
        let s00 = self.s_at(i, j)?;
        let s01 = self.s_at(i, j + 1)?;
        let s10 = self.s_at(i + 1, j)?;
        let s11 = self.s_at(i + 1, j + 1)?;
        Some((1.0 - tm) * ((1.0 - th) * s00 + th * s01) + tm * ((1.0 - th) * s10 + th * s11))
    }

    /// `μ` values where `S` changes sign along the grid row `h_values[j]`
    /// (linear interpolation between neighbours).
    pub fn mu_crossings(&self, j: usize) -> Vec<f64> {
        let mut out = Vec::new();
        let n = self.mu_values.len();
        for i in 0..n {
            let Some(a) = self.s_at(i, j) else { continue };
            if a == 0.0 {
                out.push(self.mu_values[i]);
            } else if let Some(b) = (i + 1 < n).then(|| self.s_at(i + 1, j)).flatten() {
                if a * b < 0.0 {
                    let t = a / (a - b);
                    out.push(self.mu_values[i] + t * (self.mu_values[i + 1] - self.mu_values[i]));
                }
            }
        }
        out
    }

    /// Number of sign changes of `S(·, μ_i)` along the solved part of column `i`.
    pub fn h_sign_changes(&self, i: usize) -> usize {
        let col: Vec<f64> = (0..self.h_values.len())
            .filter_map(|j| self.s_at(i, j))
            .collect();
        col.windows(2)
            .filter(|w| w[0] * w[1] < 0.0 || (w[0] == 0.0 && w[1] != 0.0))
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rolls::{roll_onset_guess, DEFAULT_MODES};
    use std::sync::OnceLock;

    const NU: f64 = 1.6;

    fn branch() -> &'static OnsetBranch {
        static B: OnceLock<OnsetBranch> = OnceLock::new();
        B.get_or_init(|| trace_onset_branch(NU, DEFAULT_MODES, 0.1).unwrap())
    }

    fn maxwell() -> &'static MaxwellPoint {
        static M: OnceLock<MaxwellPoint> = OnceLock::new();
        M.get_or_init(|| maxwell_point_on(branch(), (0.15, 0.25)).unwrap())
    }

    #[test]
    fn constant_state_has_zero_s() {
        let mut r = roll_onset_guess(0.2, NU, 1.0);
        r.cosine_coeffs[1] = 0.0;
        r.cosine_coeffs[0] = 0.3;
        assert_eq!(s_field(&r), 0.0);
        r.cosine_coeffs[0] = 0.0;
        assert_eq!(pde_energy(&r), 0.0);
    }

    #[test]
    fn dual_path_and_energy_identity() {
        for &(mu, h) in &[(0.17, 0.0), (0.2, 0.03), (0.21, -0.04)] {
            let base = branch().roll_at(mu).unwrap();
            let r = solve_roll(mu, NU, h, &base, DEFAULT_MODES).unwrap();
            let s = s_field(&r);
            assert!((s - s_field_pumping(&r)).abs() <= 1e-10);
            assert!((s - (pde_energy(&r) - h)).abs() <= 1e-8);
            let n = r.modes();
            assert!((pde_energy_with(&r, 4 * n) - pde_energy_with(&r, 8 * n)).abs() < 1e-12);
        }
    }

    #[test]
    fn maxwell_point_value() {
        let m = maxwell();
        assert!((m.mu - 0.2004).abs() <= 1e-3, "μ_Max = {}", m.mu);
        assert!(m.s.abs() <= 1e-9);
        assert!(pde_energy(&m.roll).abs() <= 1e-6);
        let m2 = maxwell_point_on(branch(), (0.18, 0.22)).unwrap();
        assert!((m2.mu - m.mu).abs() <= 1e-8);
    }

    #[test]
    fn no_sign_change_is_reported() {
        let err = maxwell_point_on(branch(), (0.15, 0.17)).unwrap_err();
        match err {
            Error::NoSignChange { s_lo, s_hi, .. } => assert!(s_lo < 0.0 && s_hi < 0.0),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn derivatives_at_maxwell_point() {
        let m = maxwell();
        let d = s_derivatives(&m.roll, DERIVATIVE_STEP).unwrap();
        assert!((d.s_h + 1.0).abs() <= 1e-3, "S_h = {}", d.s_h);
        assert!(
            (d.s_mu - half_mean_square(&m.roll)).abs() <= 1e-5,
            "S_μ = {}",
            d.s_mu
        );
        let d2 = s_derivatives(&m.roll, DERIVATIVE_STEP / 2.0).unwrap();
        assert!((d2.s_h - d.s_h).abs() < 1e-5 && (d2.s_mu - d.s_mu).abs() < 1e-5);
        assert!(-d.s_mu / d.s_h > 0.0);
    }

    #[test]
    fn synthetic_grid_interpolation() {
        let g = SVFGrid::from_fn(
            alloc::vec![0.0, 1.0, 2.0],
            alloc::vec![-1.0, 1.0],
            |h, mu| 2.0 * h + mu,
        )
        .unwrap();
        assert!((g.interpolate(0.25, 1.5).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(g.interpolate(0.0, 3.0), None);
        assert_eq!(g.mu_crossings(0), alloc::vec![2.0]);
        assert_eq!(g.h_sign_changes(0), 1);
        assert!(
            SVFGrid::from_fn(alloc::vec![1.0, 0.0], alloc::vec![0.0, 1.0], |_, _| 0.0).is_err()
        );
    }
}
