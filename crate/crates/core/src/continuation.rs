//! Pseudo-arclength continuation of pulse branches in `μ`, fold detection and
//! collapse diagnostics.
//!
//! The arclength metric is `‖Δu‖² + θ²Δμ²` with the discrete `L²` norm of the
//! profile on the mesh and `θ =` [`MU_SCALE`].

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::model::ModelParams;
use crate::numerics::banded::BandedMatrix;
use crate::numerics::max_abs;
use crate::pulse::{BvpSystem, PulseSolution};
use crate::{Error, Result};

/// Weight of `μ` in the arclength metric.
pub const MU_SCALE: f64 = 100.0;
pub const CORRECTOR_TOL: f64 = 1e-9;
const CORRECTOR_MAX_ITER: usize = 10;
const MAX_HALVINGS: usize = 3;
const MIN_STEP_COS: f64 = 0.9;
const SMOOTH_STEP_COS: f64 = 0.99;
const FOLD_SECANT_MAX: usize = 20;
const FOLD_DMU_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BranchPoint {
    pub mu: f64,
    /// `∫U² dr`.
    pub measure: f64,
    pub plateau: f64,
    /// `H(u(0), μ)`.
    pub h_at_center: f64,
    pub arc_s: f64,
    /// Set on the last point before a change of direction in `μ`.
    pub fold: bool,
}

impl BranchPoint {
    pub fn from_pulse(p: &PulseSolution, arc_s: f64) -> Self {
        BranchPoint {
            mu: p.mu(),
            measure: p.sq_l2_norm,
            plateau: p.plateau_length,
            h_at_center: p.h_at_center(),
            arc_s,
            fold: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Fold {
    pub kind: FoldKind,
    pub mu: f64,
    pub measure: f64,
    pub plateau: f64,
    pub arc_s: f64,
    /// `dμ/ds` of the local interpolant at `arc_s`.
    pub dmu_ds: f64,
}

/// `Left` is a local minimum of `μ` along the branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FoldKind {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Termination {
    Steps,
    MuBounds,
    MeasureCap,
    PlateauCap,
    StepFailure(String),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub folds: Vec<Fold>,
    pub phase: crate::pulse::Phase,
    pub eps: f64,
    pub termination: Termination,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchOptions {
    pub ds: f64,
    pub ds_max: f64,
    pub n_steps: usize,
    pub mu_bounds: (f64, f64),
    pub measure_cap: Option<f64>,
    pub plateau_cap: Option<f64>,
    /// `+1` starts in the direction of increasing measure, `-1` decreasing.
    pub direction: f64,
    /// Keep `ds` fixed.
    pub fixed_step: bool,
}

impl Default for BranchOptions {
    fn default() -> Self {
        BranchOptions {
            ds: 0.2,
            ds_max: 0.5,
            n_steps: 4000,
            mu_bounds: (0.05, 0.45),
            measure_cap: None,
            plateau_cap: Some(40.0),
            direction: 1.0,
            fixed_step: false,
        }
    }
}

/// Trapezoid weights of the mesh, one per unknown.
fn weights(mesh: &[f64]) -> Vec<f64> {
    let m = mesh.len();
    let mut w = alloc::vec![0.0; 4 * m];
    for i in 0..m {
        let left = if i > 0 { mesh[i] - mesh[i - 1] } else { 0.0 };
        let right = if i + 1 < m {
            mesh[i + 1] - mesh[i]
        } else {
            0.0
        };
        for c in 0..4 {
            w[4 * i + c] = 0.5 * (left + right);
        }
    }
    w
}

fn wdot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

/// Tangent `(t_x, t_μ)` normalized in the arclength metric.
#[derive(Debug, Clone)]
struct Tangent {
    x: Vec<f64>,
    mu: f64,
}

impl Tangent {
    fn normalized(x: Vec<f64>, mu: f64, w: &[f64]) -> Self {
        let n = (wdot(w, &x, &x) + MU_SCALE * MU_SCALE * mu * mu).sqrt();
        Tangent {
            x: x.iter().map(|v| v / n).collect(),
            mu: mu / n,
        }
    }

    fn flip(&mut self) {
        self.x.iter_mut().for_each(|v| *v = -*v);
        self.mu = -self.mu;
    }
}

struct Bordered<'a> {
    mesh: &'a [f64],
    base: ModelParams,
    w: Vec<f64>,
}

impl Bordered<'_> {
    fn system(&self, mu: f64) -> Result<BvpSystem<'_>> {
        BvpSystem::for_pulse(self.mesh, self.base.with_mu(mu))
    }

    /// Solves `[J  J_μ; aᵀ  c] (dx, dμ) = (r, n)` by block elimination with
    /// one step of iterative refinement.
    fn solve(
        &self,
        jac: &BandedMatrix,
        jmu: &[f64],
        a: &[f64],
        c: f64,
        r: &[f64],
        n: f64,
    ) -> Result<(Vec<f64>, f64)> {
        let lu = jac.lu()?;
        let once = |r: &[f64], n: f64| -> (Vec<f64>, f64) {
            let y1 = lu.solve(r);
            let y2 = lu.solve(jmu);
            let ay1: f64 = a.iter().zip(&y1).map(|(p, q)| p * q).sum();
            let ay2: f64 = a.iter().zip(&y2).map(|(p, q)| p * q).sum();
            let dmu = (n - ay1) / (c - ay2);
            let dx: Vec<f64> = y1.iter().zip(&y2).map(|(p, q)| p - q * dmu).collect();
            (dx, dmu)
        };
        let (mut dx, mut dmu) = once(r, n);
        let jdx = jac.matvec(&dx);
        let rr: Vec<f64> = r
            .iter()
            .zip(&jdx)
            .zip(jmu)
            .map(|((r, j), m)| r - j - m * dmu)
            .collect();
        let nr = n - a.iter().zip(&dx).map(|(p, q)| p * q).sum::<f64>() - c * dmu;
        let (ex, emu) = once(&rr, nr);
        dx.iter_mut().zip(&ex).for_each(|(d, e)| *d += e);
        dmu += emu;
        if dx.iter().any(|v| !v.is_finite()) || !dmu.is_finite() {
            return Err(Error::Singular("bordered continuation system"));
        }
        Ok((dx, dmu))
    }

    /// Tangent with `t_μ = 1` before normalization: `J t_x = -J_μ`.
    fn initial_tangent(&self, x: &[f64], mu: f64) -> Result<Tangent> {
        let sys = self.system(mu)?;
        let mut jac = sys.new_jacobian();
        let mut jmu = alloc::vec![0.0; x.len()];
        sys.assemble(x, Some(&mut jac), Some(&mut jmu));
        let lu = jac.lu()?;
        let mut t = jmu;
        lu.solve_in_place(&mut t);
        t.iter_mut().for_each(|v| *v = -*v);
        Ok(Tangent::normalized(t, 1.0, &self.w))
    }

    /// Tangent at a solved point, oriented along `prev`: `[J J_μ; prevᵀ W] τ = (0, 1)`.
    fn tangent_at(&self, x: &[f64], mu: f64, prev: &Tangent) -> Result<Tangent> {
        let sys = self.system(mu)?;
        let mut jac = sys.new_jacobian();
        let mut jmu = alloc::vec![0.0; x.len()];
        sys.assemble(x, Some(&mut jac), Some(&mut jmu));
        let a: Vec<f64> = self.w.iter().zip(&prev.x).map(|(w, t)| w * t).collect();
        let c = MU_SCALE * MU_SCALE * prev.mu;
        let zero = alloc::vec![0.0; x.len()];
        let (tx, tmu) = self.solve(&jac, &jmu, &a, c, &zero, 1.0)?;
        Ok(Tangent::normalized(tx, tmu, &self.w))
    }

    /// Corrector from the predicted point on the hyperplane orthogonal to `t`.
    fn correct(&self, x_pred: &[f64], mu_pred: f64, t: &Tangent) -> Result<(Vec<f64>, f64, f64)> {
        let (mut x, mut mu) = (x_pred.to_vec(), mu_pred);
        let a: Vec<f64> = self.w.iter().zip(&t.x).map(|(w, t)| w * t).collect();
        let c = MU_SCALE * MU_SCALE * t.mu;
        let mut jac = BandedMatrix::zeros(x.len(), crate::pulse::KL, crate::pulse::KU);
        let mut jmu = alloc::vec![0.0; x.len()];
        for _ in 0..CORRECTOR_MAX_ITER {
            let sys = self.system(mu)?;
            let r = sys.assemble(&x, Some(&mut jac), Some(&mut jmu));
            let n: f64 = a
                .iter()
                .zip(x.iter().zip(x_pred))
                .map(|(a, (x, p))| a * (x - p))
                .sum::<f64>()
                + c * (mu - mu_pred);
            let rn = max_abs(&r);
            let (dx, dmu) = self.solve(&jac, &jmu, &a, c, &r, n)?;
            x.iter_mut().zip(&dx).for_each(|(x, d)| *x -= d);
            mu -= dmu;
            let step = max_abs(&dx).max(dmu.abs());
            if rn <= CORRECTOR_TOL && step <= 1e-8 {
                let res = max_abs(&self.system(mu)?.residual(&x));
                if res <= CORRECTOR_TOL {
                    return Ok((x, mu, res));
                }
            }
        }
        let res = max_abs(&self.system(mu)?.residual(&x));
        if res <= CORRECTOR_TOL {
            return Ok((x, mu, res));
        }
        Err(Error::NoConvergence {
            residual: res,
            iterations: CORRECTOR_MAX_ITER,
        })
    }
}

/// Traces the branch through a solved pulse.
///
/// `observer` sees every accepted pulse (the start included) with its branch point.
pub fn trace_branch(
    start: &PulseSolution,
    opts: &BranchOptions,
    mut observer: Option<&mut dyn FnMut(&PulseSolution, &BranchPoint)>,
) -> Result<Branch> {
    if !(opts.ds > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "ds must be positive, got {}",
            opts.ds
        )));
    }
    if !start.is_solved() {
        return Err(Error::InvalidArgument(
            "trace_branch needs a solved start".into(),
        ));
    }
    let ctx = Bordered {
        mesh: &start.mesh,
        base: start.params,
        w: weights(&start.mesh),
    };
    let mut x = start.flatten();
    let mut mu = start.mu();
    let mut tangent = ctx
        .initial_tangent(&x, mu)
        .map_err(|e| Error::Continuation(alloc::format!("initial tangent: {e}")))?;
    let dmeasure: f64 = (0..start.mesh.len())
        .map(|i| ctx.w[4 * i] * start.profile[i].u1() * tangent.x[4 * i])
        .sum();
    if dmeasure * opts.direction < 0.0 {
        tangent.flip();
    }

    let mut current = start.clone();
    let mut points = alloc::vec![BranchPoint::from_pulse(&current, 0.0)];
    if let Some(obs) = observer.as_mut() {
        obs(&current, &points[0]);
    }
    let mut ds = opts.ds;
    let ds_min = opts.ds / (1 << MAX_HALVINGS) as f64;
    let mut arc = 0.0;
    let mut termination = Termination::Steps;
    for _ in 0..opts.n_steps {
        let attempt = loop {
            let x_pred: Vec<f64> = x.iter().zip(&tangent.x).map(|(x, t)| x + ds * t).collect();
            let mu_pred = mu + ds * tangent.mu;
            let can_halve = !opts.fixed_step && ds / 2.0 >= ds_min * (1.0 - 1e-12);
            match ctx.correct(&x_pred, mu_pred, &tangent) {
                Ok((x_new, mu_new, res)) => {
                    let dx: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                    let dmu = mu_new - mu;
                    let secant = Tangent::normalized(dx, dmu, &ctx.w);
                    let cos = wdot(&ctx.w, &secant.x, &tangent.x)
                        + MU_SCALE * MU_SCALE * secant.mu * tangent.mu;
                    if cos < MIN_STEP_COS && can_halve {
                        ds /= 2.0;
                        continue;
                    }
                    break Ok((x_new, mu_new, res, secant, cos));
                }
                Err(e) => {
                    if !can_halve {
                        break Err(e);
                    }
                    ds /= 2.0;
                }
            }
        };
        let (x_new, mu_new, res, secant, cos) = match attempt {
            Ok(v) => v,
            Err(e) => {
                termination =
                    Termination::StepFailure(alloc::format!("{e} at μ = {mu}, ds = {ds}"));
                break;
            }
        };
        let dx: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let dmu = mu_new - mu;
        let step = (wdot(&ctx.w, &dx, &dx) + MU_SCALE * MU_SCALE * dmu * dmu).sqrt();
        tangent = ctx.tangent_at(&x_new, mu_new, &secant).unwrap_or(secant);
        x = x_new;
        mu = mu_new;
        arc += step;
        current.params = start.params.with_mu(mu);
        current.set_flat(&x);
        current.bvp_residual = res;
        current.refresh_measures();
        let point = BranchPoint::from_pulse(&current, arc);
        if let Some(obs) = observer.as_mut() {
            obs(&current, &point);
        }
        points.push(point);
        if !opts.fixed_step && cos > SMOOTH_STEP_COS {
            ds = (ds * 1.3).min(opts.ds_max);
        }
        if mu < opts.mu_bounds.0 || mu > opts.mu_bounds.1 || !(mu > 0.0) {
            termination = Termination::MuBounds;
            break;
        }
        if opts.measure_cap.is_some_and(|m| point.measure > m) {
            termination = Termination::MeasureCap;
            break;
        }
        if opts.plateau_cap.is_some_and(|p| point.plateau > p) {
            termination = Termination::PlateauCap;
            break;
        }
    }
    let folds = detect_folds(&points);
    mark_folds(&mut points);
    Ok(Branch {
        points,
        folds,
        phase: start.phase,
        eps: start.eps(),
        termination,
    })
}

fn mark_folds(points: &mut [BranchPoint]) {
    for k in 1..points.len().saturating_sub(1) {
        let (a, b) = (
            points[k].mu - points[k - 1].mu,
            points[k + 1].mu - points[k].mu,
        );
        points[k].fold = a * b < 0.0;
    }
}

/// Lagrange interpolant through up to four points and its derivative.
fn lagrange(s: &[f64], v: &[f64], x: f64) -> (f64, f64) {
    let n = s.len();
    let (mut val, mut der) = (0.0, 0.0);
    for i in 0..n {
        let mut li = 1.0;
        let mut dli = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = s[i] - s[j];
            let mut prod = 1.0 / d;
            for k in 0..n {
                if k != i && k != j {
                    prod *= (x - s[k]) / (s[i] - s[k]);
                }
            }
            dli += prod;
            li *= (x - s[j]) / d;
        }
        val += v[i] * li;
        der += v[i] * dli;
    }
    (val, der)
}

/// Turning points of `μ` along the branch.
///
/// A sign change of `Δμ` between consecutive steps brackets a fold; it is
/// located by secant iterations on the derivative of the cubic through the
/// four surrounding points.
pub fn detect_folds(points: &[BranchPoint]) -> Vec<Fold> {
    let mut out = Vec::new();
    let n = points.len();
    if n < 3 {
        return out;
    }
    for k in 1..n - 1 {
        let (a, b) = (
            points[k].mu - points[k - 1].mu,
            points[k + 1].mu - points[k].mu,
        );
        if !(a * b < 0.0) {
            continue;
        }
        let lo = k.saturating_sub(1).min(n.saturating_sub(4));
        let idx: Vec<usize> = (lo..(lo + 4).min(n)).collect();
        let s: Vec<f64> = idx.iter().map(|&i| points[i].arc_s).collect();
        let field =
            |f: fn(&BranchPoint) -> f64| idx.iter().map(|&i| f(&points[i])).collect::<Vec<f64>>();
        let mus = field(|p| p.mu);
        let g = |x: f64| lagrange(&s, &mus, x).1;
        let (mut x0, mut x1) = (
            0.5 * (points[k - 1].arc_s + points[k].arc_s),
            0.5 * (points[k].arc_s + points[k + 1].arc_s),
        );
        let (mut g0, mut g1) = (g(x0), g(x1));
        for _ in 0..FOLD_SECANT_MAX {
            if g1 == g0 || g1.abs() <= FOLD_DMU_TOL {
                break;
            }
            let x2 = x1 - g1 * (x1 - x0) / (g1 - g0);
            (x0, g0) = (x1, g1);
            x1 = x2;
            g1 = g(x1);
        }
        let x = x1.clamp(points[k - 1].arc_s, points[k + 1].arc_s);
        out.push(Fold {
            kind: if a < 0.0 {
                FoldKind::Left
            } else {
                FoldKind::Right
            },
            mu: lagrange(&s, &mus, x).0,
            measure: lagrange(&s, &field(|p| p.measure), x).0,
            plateau: lagrange(&s, &field(|p| p.plateau), x).0,
            arc_s: x,
            dmu_ds: g(x),
        });
    }
    out
}

/// One row of [`collapse_diagnostics`]: a left fold and the right fold after it.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FoldPair {
    pub width: f64,
    pub midpoint: f64,
    /// Mean plateau of the two folds.
    pub plateau: f64,
    /// `|midpoint - μ_Max|`.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CollapseTable {
    pub pairs: Vec<FoldPair>,
    /// Least-squares slope of `ln w_k` against the plateau.
    pub log_width_slope: f64,
    pub mu_max: f64,
}

impl CollapseTable {
    /// Longest run of strictly decreasing widths, counted in pairs.
    pub fn longest_decreasing_run(&self) -> usize {
        longest_run(&self.pairs, |a, b| b.width < a.width)
    }

    /// Longest run of strictly decreasing distances to `μ_Max`.
    pub fn longest_approaching_run(&self) -> usize {
        longest_run(&self.pairs, |a, b| b.distance < a.distance)
    }
}

fn longest_run(p: &[FoldPair], ok: impl Fn(&FoldPair, &FoldPair) -> bool) -> usize {
    if p.is_empty() {
        return 0;
    }
    let (mut best, mut cur) = (1, 1);
    for w in p.windows(2) {
        cur = if ok(&w[0], &w[1]) { cur + 1 } else { 1 };
        best = best.max(cur);
    }
    best
}

/// Widths, midpoints and distances to `μ_Max` of the fold pairs of a branch.
pub fn collapse_diagnostics(folds: &[Fold], mu_max: f64) -> Result<CollapseTable> {
    let pairs: Vec<FoldPair> = folds
        .windows(2)
        .filter(|w| w[0].kind == FoldKind::Left && w[1].kind == FoldKind::Right)
        .map(|w| {
            let midpoint = 0.5 * (w[0].mu + w[1].mu);
            FoldPair {
                width: w[1].mu - w[0].mu,
                midpoint,
                plateau: 0.5 * (w[0].plateau + w[1].plateau),
                distance: (midpoint - mu_max).abs(),
            }
        })
        .collect();
    if pairs.len() < 2 {
        return Err(Error::InsufficientFolds {
            found: folds.len(),
            needed: 4,
        });
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.plateau).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.width.ln()).sum::<f64>() / n;
    let sxx: f64 = pairs
        .iter()
        .map(|p| (p.plateau - mx) * (p.plateau - mx))
        .sum();
    let sxy: f64 = pairs
        .iter()
        .map(|p| (p.plateau - mx) * (p.width.ln() - my))
        .sum();
    let log_width_slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    Ok(CollapseTable {
        pairs,
        log_width_slope,
        mu_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn synthetic(f: impl Fn(f64) -> (f64, f64), s0: f64, s1: f64, n: usize) -> Vec<BranchPoint> {
        (0..=n)
            .map(|i| {
                let s = s0 + (s1 - s0) * i as f64 / n as f64;
                let (mu, measure) = f(s);
                BranchPoint {
                    mu,
                    measure,
                    plateau: measure,
                    h_at_center: 0.0,
                    arc_s: s,
                    fold: false,
                }
            })
            .collect()
    }

    #[test]
    fn monotone_branch_has_no_folds() {
        let p = synthetic(|s| (s, s * s), 0.0, 1.0, 20);
        assert!(detect_folds(&p).is_empty());
        assert!(detect_folds(&p[..2]).is_empty());
    }

    #[test]
    fn circle_has_two_folds() {
        let p = synthetic(|s| (s.cos(), s.sin()), 0.3, 2.0 * PI + 0.3, 200);
        let f = detect_folds(&p);
        assert_eq!(f.len(), 2);
        assert_eq!((f[0].kind, f[1].kind), (FoldKind::Left, FoldKind::Right));
        assert!(
            (f[0].mu + 1.0).abs() < 1e-6 && (f[0].arc_s - PI).abs() < 1e-4,
            "{:?}",
            f
        );
        assert!((f[1].mu - 1.0).abs() < 1e-6);
        for fold in &f {
            assert!(fold.dmu_ds.abs() <= 1e-6);
        }
    }

    #[test]
    fn constant_width_has_zero_slope() {
        let p = synthetic(|s| (0.2 + 0.01 * s.sin(), s), 0.5, 40.0, 4000);
        let folds = detect_folds(&p);
        assert!(folds.len() >= 10);
        let t = collapse_diagnostics(&folds, 0.2).unwrap();
        assert!(t.log_width_slope.abs() < 1e-6);
        assert!(t.pairs.len() >= 5);
        for pair in &t.pairs {
            assert!((pair.width - 0.02).abs() < 1e-7 && pair.distance < 1e-7);
        }
        assert!(matches!(
            collapse_diagnostics(&folds[..2], 0.2),
            Err(Error::InsufficientFolds { found: 2, .. })
        ));
    }

    #[test]
    fn shrinking_snake() {
        let p = synthetic(
            |s| (0.2 + 0.05 * (-s / 20.0).exp() * s.sin(), s),
            0.5,
            40.0,
            4000,
        );
        let t = collapse_diagnostics(&detect_folds(&p), 0.2).unwrap();
        assert_eq!(t.longest_decreasing_run(), t.pairs.len());
        assert!(t.log_width_slope < 0.0);
    }
}
