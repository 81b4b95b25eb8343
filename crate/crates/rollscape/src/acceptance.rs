//! The acceptance suite: ten numbered criteria, each evaluated at its stated
//! tolerance and reported as one pass/fail line.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rollscape_core::avgflow::{integrate_avg, l_min, ConstantS};
use rollscape_core::continuation::{collapse_diagnostics, Branch, CollapseTable, FoldPair};
use rollscape_core::model::{f_rhs, grad_hamiltonian};
use rollscape_core::numerics::certify_root;
use rollscape_core::pulse::{hamiltonian_trace, pumping_residual, Phase};
use rollscape_core::rolls::{FloquetData, OnsetBranch, RollFamily};
use rollscape_core::svf::{
    half_mean_square, maxwell_point_on, s_derivatives, s_grid, MaxwellPoint,
};
use rollscape_core::{ModelParams, StateVec};

use crate::commands::{pulse_at, snake_branch, Run};
use crate::config::{RunConfig, FIG_MU_VALUES};
use crate::error::CliResult;

pub const CRITERIA: usize = 10;

/// Criteria that are evaluated and reported but whose failure is expected.
/// See the README section on the center level of the pulses.
pub const KNOWN_GAPS: [usize; 1] = [4];

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: usize,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl Outcome {
    pub fn known_gap(&self) -> bool {
        KNOWN_GAPS.contains(&self.id)
    }

    pub fn line(&self) -> String {
        let status = match (self.passed, self.known_gap()) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known gap)",
            (false, false) => "FAIL",
        };
        format!(
            "criterion {:>2} {status}: {} [{:.1} s] {}",
            self.id,
            self.title,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

/// Failures outside [`KNOWN_GAPS`].
pub fn unexpected_failures(outcomes: &[Outcome]) -> usize {
    outcomes
        .iter()
        .filter(|o| !o.passed && !o.known_gap())
        .count()
}

const TITLES: [&str; CRITERIA] = [
    "Maxwell point",
    "energy identity on the 21x21 grid",
    "derivatives of S at the Maxwell point",
    "center level of pulses at eps = 0.1",
    "persistent snaking at eps = 0",
    "collapse trend at eps = 0.1",
    "constant-S exit and l_min",
    "conservation suite",
    "Floquet certification",
    "root certification",
];

struct Ctx {
    run: Run,
    onset: Option<OnsetBranch>,
    family: Option<(RollFamily, Vec<Option<FloquetData>>)>,
    maxwell: Option<MaxwellPoint>,
}

type Check = CliResult<(bool, String)>;

impl Ctx {
    fn onset(&mut self) -> CliResult<&OnsetBranch> {
        if self.onset.is_none() {
            self.onset = Some(self.run.onset()?);
        }
        Ok(self.onset.as_ref().unwrap())
    }

    fn family(&mut self) -> CliResult<&(RollFamily, Vec<Option<FloquetData>>)> {
        if self.family.is_none() {
            self.family = Some(self.run.roll_family()?);
        }
        Ok(self.family.as_ref().unwrap())
    }

    fn maxwell(&mut self) -> CliResult<&MaxwellPoint> {
        if self.maxwell.is_none() {
            let b = self.run.cfg.maxwell.bracket;
            let mp = maxwell_point_on(self.onset()?, (b[0], b[1]))?;
            self.maxwell = Some(mp);
        }
        Ok(self.maxwell.as_ref().unwrap())
    }

    fn branches(&mut self, eps: f64) -> CliResult<Vec<(Phase, CliResult<Branch>)>> {
        self.onset()?;
        let onset = self.onset.as_ref().unwrap();
        let run = &self.run;
        let phases = [Phase::Zero, Phase::Pi];
        let traced: Vec<CliResult<Branch>> = run.install(|| {
            phases
                .par_iter()
                .map(|&ph| snake_branch(run, onset, ph, eps))
                .collect()
        });
        Ok(phases.into_iter().zip(traced).collect())
    }
}

/// Runs the selected criteria (all when `ids` is empty) with the default
/// configuration on `jobs` worker threads.
pub fn run(ids: &[usize], jobs: Option<usize>) -> CliResult<Vec<Outcome>> {
    let cfg = RunConfig {
        jobs,
        ..RunConfig::default()
    };
    let run = Run::new(cfg)?;
    let mut ctx = Ctx {
        run,
        onset: None,
        family: None,
        maxwell: None,
    };
    let selected: Vec<usize> = if ids.is_empty() {
        (1..=CRITERIA).collect()
    } else {
        ids.to_vec()
    };
    let mut out = Vec::new();
    for id in selected {
        let t0 = Instant::now();
        let result = match id {
            1 => maxwell_point(&mut ctx, t0),
            2 => energy_identity(&mut ctx, t0),
            3 => derivatives(&mut ctx),
            4 => center_levels(&mut ctx, t0),
            5 => persistent_snaking(&mut ctx),
            6 => collapse_trend(&mut ctx),
            7 => constant_s(),
            8 => conservation(&mut ctx),
            9 => floquet_certification(&mut ctx),
            10 => root_certification(),
            _ => continue,
        };
        let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
        out.push(Outcome {
            id,
            title: TITLES[id - 1],
            passed,
            detail,
            elapsed: t0.elapsed(),
        });
    }
    Ok(out)
}

fn maxwell_point(ctx: &mut Ctx, t0: Instant) -> Check {
    let mu = ctx.maxwell()?.mu;
    let secs = t0.elapsed().as_secs_f64();
    let ok = (0.199..=0.202).contains(&mu) && (mu - 0.2004).abs() <= 1.5e-3 && secs < 60.0;
    Ok((ok, format!("mu_Max = {mu:.7}, {secs:.1} s of 60")))
}

fn energy_identity(ctx: &mut Ctx, t0: Instant) -> Check {
    let (family, _) = ctx.family()?;
    let grid = s_grid(family);
    let worst = grid.max_identity_residual();
    let secs = t0.elapsed().as_secs_f64();
    let solved = grid.solved_count();
    let total = grid.s.len();
    let ok = total == 441 && solved == total && worst <= 1e-8 && secs < 120.0;
    Ok((
        ok,
        format!("max |S - (E - h)| = {worst:.2e} over {solved}/{total} nodes, {secs:.1} s of 120"),
    ))
}

fn derivatives(ctx: &mut Ctx) -> Check {
    let step = ctx.run.cfg.maxwell.derivative_step;
    let roll = ctx.maxwell()?.roll.clone();
    let d = s_derivatives(&roll, step)?;
    let quad = half_mean_square(&roll);
    let ok = (d.s_h + 1.0).abs() <= 1e-3 && (d.s_mu - quad).abs() <= 1e-5;
    Ok((
        ok,
        format!(
            "S_h = {:.6}, S_mu = {:.8}, quadrature = {:.8}",
            d.s_h, d.s_mu, quad
        ),
    ))
}

fn center_levels(ctx: &mut Ctx, t0: Instant) -> Check {
    let (l, eps) = (20.0, 0.1);
    let r_end = l + ctx.run.cfg.r_end_margin;
    ctx.onset()?;
    let onset = ctx.onset.as_ref().unwrap();
    let run = &ctx.run;
    let levels: Vec<CliResult<f64>> = run.install(|| {
        FIG_MU_VALUES
            .par_iter()
            .map(|&mu| Ok(pulse_at(run, onset, mu, eps, Phase::Zero, l, r_end)?.h_at_center()))
            .collect()
    });
    let levels: Vec<f64> = levels.into_iter().collect::<CliResult<_>>()?;
    let expected = [Some(1.0), Some(1.0), None, Some(-1.0), Some(-1.0)];
    let mut ok = t0.elapsed().as_secs_f64() < 600.0;
    for (h, e) in levels.iter().zip(expected) {
        ok &= match e {
            Some(s) => h.signum() == s,
            None => h.abs() <= 2e-3,
        };
    }
    let shown: Vec<String> = FIG_MU_VALUES
        .iter()
        .zip(&levels)
        .map(|(m, h)| format!("H({m}) = {h:+.3e}"))
        .collect();
    Ok((ok, shown.join(", ")))
}

fn fold_range(b: &Branch) -> (f64, f64) {
    b.folds
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, z), f| {
            (a.min(f.mu), z.max(f.mu))
        })
}

fn persistent_snaking(ctx: &mut Ctx) -> Check {
    let mu_max = ctx.maxwell()?.mu;
    let mut ok = true;
    let mut detail = Vec::new();
    for (ph, b) in ctx.branches(0.0)? {
        let b = b?;
        let (lo, hi) = fold_range(&b);
        let ratio = collapse_diagnostics(&b.folds, mu_max)
            .map(|t| t.pairs.last().unwrap().width / t.pairs[0].width)
            .unwrap_or(0.0);
        ok &= b.folds.len() >= 6
            && lo >= 0.15
            && hi <= 0.30
            && lo <= 0.2004
            && 0.2004 <= hi
            && ratio >= 0.5;
        detail.push(format!(
            "{}: {} folds in [{lo:.4}, {hi:.4}], width ratio {ratio:.3}",
            ph.label(),
            b.folds.len()
        ));
    }
    Ok((ok, detail.join("; ")))
}

/// Longest run of pairs along which both the width and the distance to
/// `μ_Max` strictly decrease.
pub fn collapsing_run(t: &CollapseTable) -> usize {
    let shrinks = |a: &FoldPair, b: &FoldPair| b.width < a.width && b.distance < a.distance;
    let (mut best, mut cur) = (usize::from(!t.pairs.is_empty()), 1);
    for w in t.pairs.windows(2) {
        cur = if shrinks(&w[0], &w[1]) { cur + 1 } else { 1 };
        best = best.max(cur);
    }
    best
}

fn collapse_trend(ctx: &mut Ctx) -> Check {
    let mu_max = ctx.maxwell()?.mu;
    let mut ok = true;
    let mut detail = Vec::new();
    for (ph, b) in ctx.branches(0.1)? {
        let t = collapse_diagnostics(&b?.folds, mu_max)?;
        let run = collapsing_run(&t);
        ok &= run >= 3;
        let widths: Vec<String> = t.pairs.iter().map(|p| format!("{:.5}", p.width)).collect();
        detail.push(format!(
            "{}: run {run}, widths [{}]",
            ph.label(),
            widths.join(", ")
        ));
    }
    Ok((ok, detail.join("; ")))
}

fn constant_s() -> Check {
    let (eps, r0, delta) = (0.1, 1.0, 1e-3);
    let k = rollscape_core::avgflow::DEFAULT_K;
    let mut ok = true;
    let (mut exits, mut worst_exit) = (0, 0.0f64);
    // h(x) = h_end - εS ln(L/x) leaves K through k₋ when S > 0 and through k₊ when S < 0.
    for (s, l, h_end) in [
        (0.2, 100.0, 0.0),
        (-0.1, 1000.0, 0.01),
        (0.05, 500.0, -0.03),
        (0.1, 400.0, 0.02),
    ] {
        let t = integrate_avg(0.2, eps, h_end, l, r0, k, ConstantS(s))?;
        let gap = if s > 0.0 { h_end - k.0 } else { k.1 - h_end };
        let x_exit = l * (-gap / (eps * s.abs())).exp();
        match t.exited_k {
            Some(x) if x_exit > r0 => {
                exits += 1;
                worst_exit = worst_exit.max((x - x_exit).abs() / x_exit);
            }
            None if x_exit <= r0 => {}
            _ => ok = false,
        }
    }
    ok &= exits >= 3 && worst_exit <= 1e-6;
    let b = 0.02;
    let lm = l_min(eps, r0, k.1, delta, b)?;
    let closed = r0 * ((k.1 + delta) / (eps * b)).exp();
    let rel = (lm - closed).abs() / closed;
    ok &= rel <= 1e-6;
    // From h(L) = -δ with S ≡ -b the level reaches k₊ exactly at r0 when L = l_min.
    let inside = integrate_avg(0.2, eps, -delta, lm * (1.0 - 1e-6), r0, k, ConstantS(-b))?;
    let outside = integrate_avg(0.2, eps, -delta, lm * (1.0 + 1e-6), r0, k, ConstantS(-b))?;
    ok &= inside.exited_k.is_none() && outside.exited_k.is_some();
    Ok((
        ok,
        format!(
            "{exits} exits, location rel err {worst_exit:.1e}; l_min rel err {rel:.1e}, exit just beyond l_min at x = {:?}",
            outside.exited_k
        ),
    ))
}

fn conservation(ctx: &mut Ctx) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.run.cfg.seed);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let u = StateVec::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        );
        let p = ModelParams::new(rng.gen_range(-0.5..0.5), rng.gen_range(0.0..3.0), 0.0);
        worst = worst.max(grad_hamiltonian(&u, &p).dot(&f_rhs(&u, &p)).abs());
    }
    let (mu, l) = (0.2, 20.0);
    let r_end = l + ctx.run.cfg.r_end_margin;
    ctx.onset()?;
    let onset = ctx.onset.as_ref().unwrap();
    let flat = pulse_at(&ctx.run, onset, mu, 0.0, Phase::Zero, l, r_end)?;
    let trace = hamiltonian_trace(&flat);
    let (lo, hi) = trace
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, z), &(_, h)| {
            (a.min(h), z.max(h))
        });
    let spread = hi - lo;
    let mut fine_run = RunConfig {
        mesh: 0.025,
        ..ctx.run.cfg.clone()
    };
    fine_run.jobs = Some(1);
    let fine = pulse_at(&Run::new(fine_run)?, onset, mu, 0.1, Phase::Zero, l, r_end)?;
    let pumping = pumping_residual(&fine);
    let ok = worst <= 1e-12 && spread <= 1e-7 && pumping <= 1e-3;
    Ok((
        ok,
        format!("max |<grad H, f>| = {worst:.1e}, H spread at eps = 0 {spread:.1e}, pumping residual {pumping:.1e}"),
    ))
}

fn floquet_certification(ctx: &mut Ctx) -> Check {
    let (family, data) = ctx.family()?;
    let solved = family.solved_count();
    let fl: Vec<&FloquetData> = data.iter().flatten().collect();
    let two = fl.iter().filter(|f| f.unit_multiplicity == 2).count();
    let prod = fl
        .iter()
        .map(|f| (f.product() - 1.0).norm())
        .fold(0.0, f64::max);
    let alpha = fl.iter().map(|f| f.alpha).fold(f64::INFINITY, f64::min);
    let ok = solved > 0 && fl.len() == solved && two == solved && prod <= 1e-6 && alpha > 0.0;
    Ok((
        ok,
        format!(
            "{}/{solved} nodes with data, {two} with two unit multipliers, max |prod - 1| = {prod:.1e}, min alpha = {alpha:.4}",
            fl.len()
        ),
    ))
}

/// `F(w) = M d + q(d) + c ∘ d³` with `d = w - w*`: a cubic system whose root `w*` is known.
struct Poly {
    root: Vec<f64>,
    m: DMatrix<f64>,
    q: Vec<DMatrix<f64>>,
    c: Vec<f64>,
}

impl Poly {
    fn random(rng: &mut ChaCha8Rng) -> Poly {
        let n = rng.gen_range(2..=5);
        let mut m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        for i in 0..n {
            m[(i, i)] += n as f64 * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        }
        Poly {
            root: (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            m,
            q: (0..n)
                .map(|_| DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.5..0.5)))
                .collect(),
            c: (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        }
    }

    fn d(&self, w: &[f64]) -> Vec<f64> {
        w.iter().zip(&self.root).map(|(a, b)| a - b).collect()
    }

    fn f(&self, w: &[f64]) -> Vec<f64> {
        let d = self.d(w);
        let dv = nalgebra::DVector::from_column_slice(&d);
        (0..d.len())
            .map(|i| {
                (self.m.row(i) * &dv)[0]
                    + (dv.transpose() * &self.q[i] * &dv)[0]
                    + self.c[i] * d[i].powi(3)
            })
            .collect()
    }

    fn df(&self, w: &[f64]) -> DMatrix<f64> {
        let d = self.d(w);
        let dv = nalgebra::DVector::from_column_slice(&d);
        let n = d.len();
        let mut j = self.m.clone();
        for i in 0..n {
            let g = (&self.q[i] + self.q[i].transpose()) * &dv;
            for k in 0..n {
                j[(i, k)] += g[k];
            }
            j[(i, i)] += 3.0 * self.c[i] * d[i] * d[i];
        }
        j
    }
}

fn root_certification() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut certified, mut contained) = (0, 0);
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..100 {
        let p = Poly::random(&mut rng);
        let w0: Vec<f64> = p
            .root
            .iter()
            .map(|r| r + rng.gen_range(-1e-2..1e-2))
            .collect();
        let a = p.df(&w0);
        let ball = certify_root(|w| p.f(w), |w| p.df(w), &w0, &a, 0.1, 0.5)?;
        if ball.certified {
            certified += 1;
        }
        let err = w0
            .iter()
            .zip(&p.root)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if err <= ball.root_error_bound && err <= ball.radius {
            contained += 1;
        }
        worst_ratio = worst_ratio.max(err / ball.root_error_bound);
    }
    Ok((
        certified == 100 && contained == 100,
        format!("{certified}/100 certified, {contained}/100 roots inside the bound, max error/bound {worst_ratio:.3}"),
    ))
}
