//! The averaged level flow `h_x = (ε/x) S(h, μ)` and the persistence verdicts
//! built from sign scans of `S`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::numerics::{rk_integrate_with_event, Event, RkOptions};
use crate::rolls::{solve_roll, RollFamily, RollSolution};
use crate::svf::{s_derivatives, s_field, SVFGrid, DERIVATIVE_STEP};
use crate::{Error, Result};

/// Default level window `K`.
pub const DEFAULT_K: (f64, f64) = (-0.05, 0.05);
/// Default distance `δ` of the end level from 0.
pub const DEFAULT_DELTA: f64 = 1e-3;
/// Bisection tolerance on the exit location.
pub const EXIT_X_TOL: f64 = 1e-8;
const AVG_RTOL: f64 = 1e-11;

/// Source of `S(h, μ)` values.
pub trait SEvaluator {
    fn s(&mut self, h: f64, mu: f64) -> core::result::Result<f64, String>;
}

impl SEvaluator for &SVFGrid {
    fn s(&mut self, h: f64, mu: f64) -> core::result::Result<f64, String> {
        self.interpolate(h, mu)
            .ok_or_else(|| "outside the solved part of the grid".to_string())
    }
}

/// `S ≡ value`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantS(pub f64);

impl SEvaluator for ConstantS {
    fn s(&mut self, _h: f64, _mu: f64) -> core::result::Result<f64, String> {
        Ok(self.0)
    }
}

/// Closure-backed evaluator.
pub struct FnS<F>(pub F);

impl<F: FnMut(f64, f64) -> f64> SEvaluator for FnS<F> {
    fn s(&mut self, h: f64, mu: f64) -> core::result::Result<f64, String> {
        Ok((self.0)(h, mu))
    }
}

/// Exact `S` from a roll solve at every evaluation, continuing from the last solution.
pub struct RollS {
    last: RollSolution,
}

impl RollS {
    pub fn new(seed: RollSolution) -> Self {
        RollS { last: seed }
    }
}

impl SEvaluator for RollS {
    fn s(&mut self, h: f64, mu: f64) -> core::result::Result<f64, String> {
        let n = self.last.modes();
        let r = solve_roll(mu, self.last.nu(), h, &self.last, n).map_err(|e| e.to_string())?;
        let s = s_field(&r);
        self.last = r;
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AvgTrajectory {
    pub x_samples: Vec<f64>,
    pub h_samples: Vec<f64>,
    pub mu: f64,
    pub eps: f64,
    /// Where `h` left `K`, if it did.
    pub exited_k: Option<f64>,
    pub direction: Direction,
}

impl AvgTrajectory {
    pub fn h_final(&self) -> f64 {
        *self.h_samples.last().unwrap()
    }

    pub fn x_final(&self) -> f64 {
        *self.x_samples.last().unwrap()
    }
}

/// Integrates the level flow from `(x_from, h_from)` to `x_to`, stopping where `h` leaves `k`.
pub fn integrate_level<S: SEvaluator>(
    mu: f64,
    eps: f64,
    x_from: f64,
    h_from: f64,
    x_to: f64,
    k: (f64, f64),
    mut s_eval: S,
) -> Result<AvgTrajectory> {
    if !(x_from > 0.0 && x_to > 0.0 && x_from != x_to) {
        return Err(Error::InvalidArgument(alloc::format!(
            "need distinct positive radii, got {x_from}, {x_to}"
        )));
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "eps must be ≥ 0, got {eps}"
        )));
    }
    if !(k.0 < k.1) {
        return Err(Error::InvalidArgument(alloc::format!(
            "empty K = [{}, {}]",
            k.0,
            k.1
        )));
    }
    let direction = if x_to < x_from {
        Direction::Backward
    } else {
        Direction::Forward
    };
    let mut failure: Option<(f64, f64, String)> = None;
    let opts = RkOptions {
        rtol: AVG_RTOL,
        atol: AVG_RTOL,
        ..Default::default()
    };
    let event = Event {
        g: |_x: f64, y: &[f64]| (y[0] - k.0) * (k.1 - y[0]),
        x_tol: EXIT_X_TOL,
    };
    let traj = rk_integrate_with_event(
        |x, y, dy| {
            if failure.is_some() || eps == 0.0 {
                dy[0] = 0.0;
                return;
            }
            match s_eval.s(y[0], mu) {
                Ok(s) => dy[0] = eps / x * s,
                Err(reason) => {
                    failure = Some((x, y[0], reason));
                    dy[0] = 0.0;
                }
            }
        },
        &[h_from],
        x_from,
        x_to,
        &opts,
        &[],
        Some(event),
    )?;
    if let Some((x, h, reason)) = failure {
        return Err(Error::SEvaluation { x, h, reason });
    }
    let x_samples = traj.xs;
    let h_samples: Vec<f64> = traj.ys.into_iter().map(|y| y[0]).collect();
    Ok(AvgTrajectory {
        x_samples,
        h_samples,
        mu,
        eps,
        exited_k: traj.event,
        direction,
    })
}

/// Backward integration from `(L, h_end)` to `r0`.
pub fn integrate_avg<S: SEvaluator>(
    mu: f64,
    eps: f64,
    h_end: f64,
    l: f64,
    r0: f64,
    k: (f64, f64),
    s_eval: S,
) -> Result<AvgTrajectory> {
    if !(r0 > 0.0 && r0 < l) {
        return Err(Error::InvalidArgument(alloc::format!(
            "need 0 < r0 < L, got r0 = {r0}, L = {l}"
        )));
    }
    integrate_level(mu, eps, l, h_end, r0, k, s_eval)
}

/// `r0·exp((k₊ + δ)/(εb))`: plateau lengths beyond this cannot stay in `K`
/// when `|S| ≥ b` with a uniform sign.
pub fn l_min(eps: f64, r0: f64, k_plus: f64, delta: f64, b: f64) -> Result<f64> {
    if !(eps > 0.0 && r0 > 0.0 && k_plus > 0.0 && delta > 0.0 && b > 0.0) {
        return Err(Error::InvalidArgument(
            "l_min needs positive arguments".into(),
        ));
    }
    Ok(r0 * ((k_plus + delta) / (eps * b)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Verdict {
    Nonpersistent,
    Persistent,
    CollapsedCandidate,
    Inconclusive,
}

/// Half of `K` on which a uniform sign was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Side {
    /// `K ∩ [0, ∞)` with `S < 0`.
    Positive,
    /// `K ∩ (-∞, 0]` with `S > 0`.
    Negative,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum Witness {
    /// Uniform sign of `S` on one half of `K` over `J̃`; `b = min |S|` there.
    Region {
        side: Side,
        j_tilde: (f64, f64),
        b: f64,
    },
    /// Interior equilibrium `w₀` for every sampled `μ`.
    Equilibria {
        side: Side,
    },
    /// Root `μ_*` of `S(0, ·)` with grid estimates of the derivatives.
    Equilibrium {
        mu_star: f64,
        h_star: f64,
        s_h: f64,
        s_mu: f64,
    },
    None,
}

/// Sign data of one grid column `μ` over `K`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SignEvidence {
    pub mu: f64,
    /// `S(0, μ)` (interpolated when 0 is not a grid level).
    pub s_at_zero: Option<f64>,
    /// `(h, S)` for every solved grid level in `K`.
    pub samples: Vec<(f64, f64)>,
}

impl SignEvidence {
    fn positive_half(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples
            .iter()
            .filter(|(h, _)| *h >= 0.0)
            .map(|&(_, s)| s)
            .chain(self.s_at_zero)
    }

    fn negative_half(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples
            .iter()
            .filter(|(h, _)| *h <= 0.0)
            .map(|&(_, s)| s)
            .chain(self.s_at_zero)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LMinInputs {
    pub eps: f64,
    pub r0: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PersistenceReport {
    pub verdict: Verdict,
    pub witness: Witness,
    pub l_min: Option<f64>,
    pub k: (f64, f64),
    pub j_tilde: (f64, f64),
    /// Fraction of grid nodes in `K × J̃` with a solved roll.
    pub coverage: f64,
    pub evidence: Vec<SignEvidence>,
    /// Why the verdict is inconclusive, when it is.
    pub note: Option<String>,
}

fn column_evidence(grid: &SVFGrid, i: usize, k: (f64, f64)) -> SignEvidence {
    let mu = grid.mu_values[i];
    let samples: Vec<(f64, f64)> = (0..grid.h_values.len())
        .filter(|&j| grid.h_values[j] >= k.0 && grid.h_values[j] <= k.1)
        .filter_map(|j| grid.s_at(i, j).map(|s| (grid.h_values[j], s)))
        .collect();
    let s_at_zero = if k.0 <= 0.0 && k.1 >= 0.0 {
        grid.interpolate(0.0, mu)
    } else {
        None
    };
    SignEvidence {
        mu,
        s_at_zero,
        samples,
    }
}

/// Sign scan of `S` over `K × J̃`.
///
/// Order of tests: a uniform sign on one closed half of `K` (nonpersistent),
/// the interior-equilibrium pattern for every `μ` (persistent), then a sign
/// change of `S(0, ·)` with `S_h < 0 < S_μ` (collapsed candidate).
pub fn classify_snaking(
    grid: &SVFGrid,
    k: (f64, f64),
    j_tilde: (f64, f64),
    lmin: Option<LMinInputs>,
) -> PersistenceReport {
    let cols: Vec<usize> = (0..grid.mu_values.len())
        .filter(|&i| grid.mu_values[i] >= j_tilde.0 && grid.mu_values[i] <= j_tilde.1)
        .collect();
    let in_k = (0..grid.h_values.len())
        .filter(|&j| grid.h_values[j] >= k.0 && grid.h_values[j] <= k.1)
        .count();
    let total = cols.len() * in_k;
    let evidence: Vec<SignEvidence> = cols.iter().map(|&i| column_evidence(grid, i, k)).collect();
    let solved: usize = evidence.iter().map(|e| e.samples.len()).sum();
    let coverage = if total == 0 {
        0.0
    } else {
        solved as f64 / total as f64
    };
    let mut report = PersistenceReport {
        verdict: Verdict::Inconclusive,
        witness: Witness::None,
        l_min: None,
        k,
        j_tilde,
        coverage,
        evidence,
        note: None,
    };
    let used: Vec<&SignEvidence> = report
        .evidence
        .iter()
        .filter(|e| e.s_at_zero.is_some())
        .collect();
    if used.is_empty() || used.iter().any(|e| e.samples.len() < 2) {
        report.note = Some("no complete grid column in K × J̃".into());
        return report;
    }

    let uniform = |side: Side| -> Option<f64> {
        let mut b = f64::INFINITY;
        for e in &used {
            let vals: Vec<f64> = match side {
                Side::Positive => e.positive_half().map(|s| -s).collect(),
                Side::Negative => e.negative_half().collect(),
            };
            if vals.len() < 2 || vals.iter().any(|&v| !(v > 0.0)) {
                return None;
            }
            b = vals.iter().fold(b, |m, &v| m.min(v));
        }
        Some(b)
    };
    for side in [Side::Positive, Side::Negative] {
        if let Some(b) = uniform(side) {
            let mu_lo = used.first().unwrap().mu;
            let mu_hi = used.last().unwrap().mu;
            report.verdict = Verdict::Nonpersistent;
            report.witness = Witness::Region {
                side,
                j_tilde: (mu_lo, mu_hi),
                b,
            };
            report.l_min = lmin.and_then(|p| {
                let k_side = match side {
                    Side::Positive => k.1,
                    Side::Negative => -k.0,
                };
                l_min(p.eps, p.r0, k_side, p.delta, b).ok()
            });
            return report;
        }
    }

    let persistent = |side: Side| {
        used.iter().all(|e| {
            let s0 = e.s_at_zero.unwrap();
            match side {
                Side::Positive => s0 < 0.0 && e.samples.iter().any(|&(h, s)| h > 0.0 && s > 0.0),
                Side::Negative => s0 > 0.0 && e.samples.iter().any(|&(h, s)| h < 0.0 && s < 0.0),
            }
        })
    };
    for side in [Side::Positive, Side::Negative] {
        if persistent(side) {
            report.verdict = Verdict::Persistent;
            report.witness = Witness::Equilibria { side };
            return report;
        }
    }

    for w in used.windows(2) {
        let (a, b) = (w[0].s_at_zero.unwrap(), w[1].s_at_zero.unwrap());
        if a * b <= 0.0 && a != b {
            let t = a / (a - b);
            let mu_star = w[0].mu + t * (w[1].mu - w[0].mu);
            let s_mu = (b - a) / (w[1].mu - w[0].mu);
            let s_h = grid_s_h(grid, mu_star);
            if let Some(s_h) = s_h {
                if s_h < 0.0 && s_mu > 0.0 {
                    report.verdict = Verdict::CollapsedCandidate;
                    report.witness = Witness::Equilibrium {
                        mu_star,
                        h_star: 0.0,
                        s_h,
                        s_mu,
                    };
                    return report;
                }
            }
        }
    }
    report.note = Some("no sign pattern matched at this grid resolution".into());
    report
}

/// Central difference of the interpolated `S` across `h = 0`, one grid spacing wide.
fn grid_s_h(grid: &SVFGrid, mu: f64) -> Option<f64> {
    let j = grid.h_values.partition_point(|&h| h < 0.0);
    let dh = if j > 0 && j < grid.h_values.len() {
        grid.h_values[j] - grid.h_values[j - 1]
    } else {
        grid.h_values[1] - grid.h_values[0]
    };
    let up = grid.interpolate(0.5 * dh, mu)?;
    let down = grid.interpolate(-0.5 * dh, mu)?;
    Some((up - down) / dh)
}

/// A root `h*` of `S(·, μ)` with the local slope.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EquilibriumPoint {
    pub mu: f64,
    pub h_star: f64,
    pub s_h: f64,
}

const EQUILIBRIUM_SECANT_STEPS: usize = 8;

/// Root of `S(·, μ)` by secant iteration through the roll solver, from
/// `h0` and `h1`, continuing the rolls from `seed`.
pub fn equilibrium_at(seed: &RollSolution, mu: f64, h0: f64, h1: f64) -> Result<EquilibriumPoint> {
    let (nu, n) = (seed.nu(), seed.modes());
    let mut last = seed.clone();
    let mut s = |h: f64| -> Result<f64> {
        let r = solve_roll(mu, nu, h, &last, n)?;
        let v = s_field(&r);
        last = r;
        Ok(v)
    };
    let (mut x0, mut x1) = (h0, h1);
    let (mut f0, mut f1) = (s(x0)?, s(x1)?);
    for _ in 0..EQUILIBRIUM_SECANT_STEPS {
        if f1 == 0.0 || f1 == f0 || (x1 - x0).abs() < 1e-14 {
            break;
        }
        let x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        (x0, f0) = (x1, f1);
        x1 = x2;
        f1 = s(x1)?;
    }
    let center = solve_roll(mu, nu, x1, &last, n)?;
    let d = s_derivatives(&center, DERIVATIVE_STEP)?;
    Ok(EquilibriumPoint {
        mu,
        h_star: x1,
        s_h: d.s_h,
    })
}

/// Per grid column: grid bracket of the sign change of `S(·, μ)`, then secant
/// refinement through the roll solver when `family` is given (linear
/// interpolation otherwise). Columns without a sign change are skipped.
pub fn equilibrium_curve(grid: &SVFGrid, family: Option<&RollFamily>) -> Vec<EquilibriumPoint> {
    let mut out = Vec::new();
    let nh = grid.h_values.len();
    for i in 0..grid.mu_values.len() {
        let mu = grid.mu_values[i];
        let bracket = (0..nh.saturating_sub(1)).find_map(|j| {
            let (a, b) = (grid.s_at(i, j)?, grid.s_at(i, j + 1)?);
            (a * b <= 0.0 && a != b).then_some((j, a, b))
        });
        let Some((j, a, b)) = bracket else { continue };
        let (h0, h1) = (grid.h_values[j], grid.h_values[j + 1]);
        let linear = EquilibriumPoint {
            mu,
            h_star: h0 + a / (a - b) * (h1 - h0),
            s_h: (b - a) / (h1 - h0),
        };
        let refined = family
            .and_then(|f| f.get(i, j).or_else(|| f.get(i, j + 1)))
            .and_then(|seed| equilibrium_at(seed, mu, h0, h1).ok())
            .filter(|e| e.h_star >= h0 - (h1 - h0) && e.h_star <= h1 + (h1 - h0));
        out.push(refined.unwrap_or(linear));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_eps_is_flat() {
        let t = integrate_avg(0.2, 0.0, 0.01, 100.0, 1.0, DEFAULT_K, ConstantS(-1.0)).unwrap();
        assert!(t.h_samples.iter().all(|&h| h == 0.01));
        assert_eq!(t.exited_k, None);
        assert_eq!(t.direction, Direction::Backward);
    }

    #[test]
    fn logarithmic_oracle() {
        let (eps, b, l, h_end) = (0.1, 0.02, 200.0, -0.01);
        let t = integrate_avg(0.2, eps, h_end, l, 1.0, DEFAULT_K, ConstantS(-b)).unwrap();
        for (x, h) in t.x_samples.iter().zip(&t.h_samples) {
            assert!((h - (h_end + eps * b * (l / x).ln())).abs() < 1e-8);
        }
    }

    #[test]
    fn l_min_formula() {
        let v = l_min(0.1, 1.0, 0.05, 0.01, 0.02).unwrap();
        assert!((v / 30f64.exp() - 1.0).abs() < 1e-14);
        let (a, b) = (
            l_min(0.1, 2.0, 0.05, 0.01, 0.02).unwrap(),
            l_min(0.2, 2.0, 0.05, 0.01, 0.02).unwrap(),
        );
        assert!(((a / 2.0).ln() - 2.0 * (b / 2.0).ln()).abs() < 1e-12);
        assert!(l_min(0.0, 1.0, 0.05, 0.01, 0.02).is_err());
    }

    #[test]
    fn exit_matches_l_min() {
        let (eps, b, r0, delta) = (0.5, 0.05, 1.0, DEFAULT_DELTA);
        let lm = l_min(eps, r0, DEFAULT_K.1, delta, b).unwrap();
        let inside = integrate_avg(
            0.2,
            eps,
            -delta,
            lm * (1.0 - 1e-6),
            r0,
            DEFAULT_K,
            ConstantS(-b),
        )
        .unwrap();
        assert_eq!(inside.exited_k, None);
        let out = integrate_avg(
            0.2,
            eps,
            -delta,
            lm * (1.0 + 1e-6),
            r0,
            DEFAULT_K,
            ConstantS(-b),
        )
        .unwrap();
        let x_exit = out.exited_k.unwrap();
        assert!((x_exit - r0 * (1.0 + 1e-6)).abs() < 1e-5);
    }

    #[test]
    fn evaluator_failure_carries_location() {
        let g = SVFGrid::from_fn(vec![0.1, 0.2], vec![-0.01, 0.01], |h, _| -h).unwrap();
        let err = integrate_avg(0.3, 0.1, 0.0, 10.0, 1.0, DEFAULT_K, &g).unwrap_err();
        assert!(matches!(err, Error::SEvaluation { x, .. } if x == 10.0));
    }

    fn linear_grid(mu_max: f64) -> SVFGrid {
        let mus: Vec<f64> = (0..=20).map(|i| 0.15 + 0.005 * i as f64).collect();
        let hs: Vec<f64> = (0..=20).map(|j| -0.05 + 0.005 * j as f64).collect();
        SVFGrid::from_fn(mus, hs, |h, mu| 0.2 * (mu - mu_max) - h).unwrap()
    }

    #[test]
    fn verdicts_on_synthetic_grids() {
        let g = SVFGrid::from_fn(vec![0.1, 0.2, 0.3], vec![-0.05, 0.0, 0.05], |_, _| 1.0).unwrap();
        let r = classify_snaking(&g, DEFAULT_K, (0.1, 0.3), None);
        assert_eq!(r.verdict, Verdict::Nonpersistent);
        assert!(matches!(
            r.witness,
            Witness::Region {
                side: Side::Negative,
                ..
            }
        ));

        let g = linear_grid(0.2);
        let lm = LMinInputs {
            eps: 0.1,
            r0: 1.0,
            delta: DEFAULT_DELTA,
        };
        let r = classify_snaking(&g, DEFAULT_K, (0.21, 0.25), Some(lm));
        assert_eq!(r.verdict, Verdict::Nonpersistent);
        assert!(r.l_min.unwrap() > 1.0);
        let r = classify_snaking(&g, DEFAULT_K, (0.15, 0.25), None);
        assert_eq!(r.verdict, Verdict::CollapsedCandidate);
        match r.witness {
            Witness::Equilibrium {
                mu_star, s_h, s_mu, ..
            } => {
                assert!((mu_star - 0.2).abs() < 1e-12);
                assert!((s_h + 1.0).abs() < 1e-12 && (s_mu - 0.2).abs() < 1e-12);
            }
            w => panic!("{w:?}"),
        }
        let r = classify_snaking(&g, DEFAULT_K, (0.5, 0.6), None);
        assert_eq!(r.verdict, Verdict::Inconclusive);

        // Interior equilibrium above h = 0 for every μ.
        let g = SVFGrid::from_fn(vec![0.1, 0.2], vec![-0.05, 0.0, 0.02, 0.05], |h, _| {
            h - 0.01
        })
        .unwrap();
        assert_eq!(
            classify_snaking(&g, DEFAULT_K, (0.1, 0.2), None).verdict,
            Verdict::Persistent
        );
    }

    #[test]
    fn linear_equilibrium_curve() {
        let g = linear_grid(0.2);
        let eq = equilibrium_curve(&g, None);
        assert_eq!(eq.len(), 21);
        for e in &eq {
            assert!((e.h_star - 0.2 * (e.mu - 0.2)).abs() < 1e-12);
            assert!((e.s_h + 1.0).abs() < 1e-12);
        }
    }
}
