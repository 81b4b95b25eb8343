//! The subcommands. Each writes into `<out>/<command>/` next to the exact
//! configuration it ran with.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rollscape_core::avgflow::{
    classify_snaking, equilibrium_curve, integrate_avg, EquilibriumPoint, LMinInputs,
    PersistenceReport, RollS,
};
use rollscape_core::continuation::{
    collapse_diagnostics, trace_branch, Branch, BranchOptions, CollapseTable, FoldKind, Termination,
};
use rollscape_core::pulse::{solve_pulse_near, Phase, PulseSolution};
use rollscape_core::rolls::{
    continue_rolls, floquet, trace_onset_branch, FloquetData, OnsetBranch, RollFamily,
};
use rollscape_core::svf::{
    half_mean_square, maxwell_point_on, pde_energy, s_derivatives, s_grid, SVFGrid,
};
use rollscape_core::ModelParams;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::formats::{self, num, opt};
use crate::plot::{sign_map, Figure, Series};

/// Below this fraction of solved grid nodes the roll-based commands fail.
pub const MIN_COVERAGE: f64 = 0.5;

pub struct Run {
    pub cfg: RunConfig,
    pool: rayon::ThreadPool,
}

/// `ROLLSCAPE_JOBS`, then the configured value, then the available parallelism.
pub fn effective_jobs(cfg: &RunConfig) -> usize {
    std::env::var("ROLLSCAPE_JOBS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .or(cfg.jobs)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn label_num(x: f64) -> String {
    format!("{x}")
}

impl Run {
    pub fn new(cfg: RunConfig) -> CliResult<Run> {
        cfg.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(effective_jobs(&cfg))
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
        Ok(Run { cfg, pool })
    }

    /// Runs `f` on this run's worker pool.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }

    /// Creates `<out>/<name>` and writes the configuration into it.
    pub fn out_dir(&self, name: &str) -> CliResult<PathBuf> {
        let dir = self.cfg.out.join(name);
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        formats::write_text(&dir.join("config.toml"), &self.cfg.to_toml())?;
        Ok(dir)
    }

    pub fn onset(&self) -> CliResult<OnsetBranch> {
        let span = (self.cfg.mu_range[1] - self.cfg.mu_range[0]).max(0.05);
        let floor = self.cfg.mu_range[0]
            .min(self.cfg.maxwell.bracket[0])
            .min(self.cfg.snake.mu)
            .min(self.cfg.pulse.mu)
            .min(
                self.cfg
                    .avgflow
                    .mu_values
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min),
            )
            - 0.25 * span;
        Ok(trace_onset_branch(self.cfg.nu, self.cfg.modes, floor)?)
    }

    /// Roll family with Floquet data; `floquet_alpha` is filled on hyperbolic nodes.
    pub fn roll_family(&self) -> CliResult<(RollFamily, Vec<Option<FloquetData>>)> {
        let c = &self.cfg;
        let mut family = continue_rolls(c.mu_range(), c.h_range(), c.grid(), c.nu, c.modes)?;
        let data: Vec<Option<FloquetData>> = self.pool.install(|| {
            family
                .nodes
                .par_iter()
                .map(|n| n.as_ref().and_then(|r| floquet(r).ok()))
                .collect()
        });
        for (node, f) in family.nodes.iter_mut().zip(&data) {
            if let (Some(r), Some(f)) = (node.as_mut(), f) {
                r.floquet_alpha = Some(f.alpha);
            }
        }
        Ok((family, data))
    }

    fn coverage(&self, family: &RollFamily) -> CliResult<()> {
        let f = family.solved_fraction();
        if f < MIN_COVERAGE {
            return Err(CliError::Coverage(format!(
                "{} of {} roll nodes solved ({:.1}%)",
                family.solved_count(),
                family.nodes.len(),
                100.0 * f
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RollsSummary {
    pub solved: usize,
    pub total: usize,
    pub solved_fraction: f64,
    pub hyperbolic: usize,
    pub min_alpha: Option<f64>,
    pub max_product_error: Option<f64>,
    /// Every hyperbolic node has exactly two unit multipliers.
    pub two_unit_multipliers: bool,
    pub max_period_jump: f64,
}

pub fn summarize_rolls(family: &RollFamily, data: &[Option<FloquetData>]) -> RollsSummary {
    let fl: Vec<&FloquetData> = data.iter().flatten().collect();
    let nh = family.h_values.len();
    let mut jump: f64 = 0.0;
    for (i, j, r) in family.iter_solved() {
        for (a, b) in [(i + 1, j), (i, j + 1)] {
            if a < family.mu_values.len() && b < nh {
                if let Some(s) = family.get(a, b) {
                    jump = jump.max((s.period - r.period).abs());
                }
            }
        }
    }
    RollsSummary {
        solved: family.solved_count(),
        total: family.nodes.len(),
        solved_fraction: family.solved_fraction(),
        hyperbolic: fl.len(),
        min_alpha: fl.iter().map(|f| f.alpha).reduce(f64::min),
        max_product_error: fl
            .iter()
            .map(|f| (f.product() - 1.0).norm())
            .reduce(f64::max),
        two_unit_multipliers: fl.iter().all(|f| f.unit_multiplicity == 2),
        max_period_jump: jump,
    }
}

pub fn cmd_rolls(run: &Run) -> CliResult<RollsSummary> {
    let dir = run.out_dir("rolls")?;
    let (family, data) = run.roll_family()?;
    formats::write_roll_family(&dir.join("rolls.csv"), &family, &data)?;
    let summary = summarize_rolls(&family, &data);
    formats::write_json(&dir.join("floquet.json"), &summary)?;
    run.coverage(&family)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct SvfHeader {
    pub nu: f64,
    pub mu_range: (f64, f64),
    pub h_range: (f64, f64),
    pub dims: (usize, usize),
    pub solved: usize,
    pub max_identity_residual: f64,
    /// Zeros of `S(0, ·)` along the `h = 0` row, when the grid has one.
    pub zero_crossings_at_h0: Vec<f64>,
}

pub fn cmd_svf(run: &Run) -> CliResult<(SVFGrid, SvfHeader)> {
    let dir = run.out_dir("svf")?;
    let (family, _) = run.roll_family()?;
    let grid = s_grid(&family);
    formats::write_svf_grid(&dir.join("svf.csv"), &grid)?;
    let j0 = grid.h_values.iter().position(|h| h.abs() < 1e-14);
    let header = SvfHeader {
        nu: grid.nu,
        mu_range: grid.mu_range(),
        h_range: grid.h_range(),
        dims: (grid.mu_values.len(), grid.h_values.len()),
        solved: grid.solved_count(),
        max_identity_residual: grid.max_identity_residual(),
        zero_crossings_at_h0: j0.map(|j| grid.mu_crossings(j)).unwrap_or_default(),
    };
    formats::write_json(&dir.join("svf.json"), &header)?;
    if run.cfg.plot {
        let svg = sign_map(
            &format!("sign of S(h, mu), nu = {}", grid.nu),
            "mu",
            "h",
            &grid.mu_values,
            &grid.h_values,
            &grid.s,
        );
        formats::write_text(&dir.join("svf.svg"), &svg)?;
    }
    run.coverage(&family)?;
    Ok((grid, header))
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxwellReport {
    pub nu: f64,
    pub bracket: (f64, f64),
    /// Bracket after moving endpoints without rolls inside the family.
    pub bracket_used: (f64, f64),
    pub mu_max: f64,
    pub s_at_max: f64,
    pub e_at_max: f64,
    pub period_at_max: f64,
    pub s_h_at_max: f64,
    pub s_mu_at_max: f64,
    /// `(1/p)∫U²/2 dx` at the Maxwell roll.
    pub s_mu_quadrature: f64,
    pub derivative_step: f64,
    /// `max |S - (E - h)|` over the configured roll grid.
    pub identity_max_residual: f64,
}

pub fn cmd_maxwell(run: &Run) -> CliResult<MaxwellReport> {
    let dir = run.out_dir("maxwell")?;
    let c = &run.cfg;
    let onset = run.onset()?;
    let bracket = (c.maxwell.bracket[0], c.maxwell.bracket[1]);
    let mp = maxwell_point_on(&onset, bracket)?;
    let d = s_derivatives(&mp.roll, c.maxwell.derivative_step)?;
    let (family, _) = run.roll_family()?;
    let grid = s_grid(&family);
    let report = MaxwellReport {
        nu: c.nu,
        bracket,
        bracket_used: mp.bracket,
        mu_max: mp.mu,
        s_at_max: mp.s,
        e_at_max: pde_energy(&mp.roll),
        period_at_max: mp.roll.period,
        s_h_at_max: d.s_h,
        s_mu_at_max: d.s_mu,
        s_mu_quadrature: half_mean_square(&mp.roll),
        derivative_step: c.maxwell.derivative_step,
        identity_max_residual: grid.max_identity_residual(),
    };
    formats::write_json(&dir.join("maxwell.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedReport {
    pub name: String,
    pub eps: Option<f64>,
    pub report: PersistenceReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryRow {
    pub mu: f64,
    pub eps: f64,
    pub l: f64,
    pub r0: f64,
    pub h_end: f64,
    pub h_r0: f64,
    pub exited_at: Option<f64>,
    pub file: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AvgflowReport {
    pub reports: Vec<NamedReport>,
    pub trajectories: Vec<TrajectoryRow>,
    pub equilibria: Vec<EquilibriumPoint>,
}

pub fn cmd_avgflow(run: &Run) -> CliResult<AvgflowReport> {
    let dir = run.out_dir("avgflow")?;
    let c = &run.cfg;
    let a = &c.avgflow;
    let k = (a.k[0], a.k[1]);
    let (family, _) = run.roll_family()?;
    run.coverage(&family)?;
    let grid = s_grid(&family);
    let mut reports = vec![NamedReport {
        name: "window".into(),
        eps: None,
        report: classify_snaking(&grid, k, c.mu_range(), None),
    }];
    for &eps in c.eps.iter().filter(|&&e| e > 0.0) {
        let lmin = LMinInputs {
            eps,
            r0: a.r0,
            delta: a.delta,
        };
        reports.push(NamedReport {
            name: "j_tilde".into(),
            eps: Some(eps),
            report: classify_snaking(&grid, k, (a.j_tilde[0], a.j_tilde[1]), Some(lmin)),
        });
    }
    let onset = run.onset()?;
    let jobs: Vec<(f64, f64)> = c
        .eps
        .iter()
        .flat_map(|&e| a.mu_values.iter().map(move |&m| (m, e)))
        .collect();
    let results: Vec<CliResult<(TrajectoryRow, rollscape_core::avgflow::AvgTrajectory)>> =
        run.pool.install(|| {
            jobs.par_iter()
                .map(|&(mu, eps)| {
                    let t = if a.exact {
                        let seed = onset.roll_at(mu)?;
                        integrate_avg(mu, eps, a.h_end, a.l, a.r0, k, RollS::new(seed))?
                    } else {
                        integrate_avg(mu, eps, a.h_end, a.l, a.r0, k, &grid)?
                    };
                    let file = format!("trajectory_mu{}_eps{}.csv", label_num(mu), label_num(eps));
                    let row = TrajectoryRow {
                        mu,
                        eps,
                        l: a.l,
                        r0: a.r0,
                        h_end: a.h_end,
                        h_r0: t.h_final(),
                        exited_at: t.exited_k,
                        file,
                    };
                    Ok((row, t))
                })
                .collect()
        });
    let mut trajectories = Vec::new();
    for r in results {
        let (row, t) = r?;
        formats::write_trajectory(&dir.join(&row.file), &t)?;
        trajectories.push(row);
    }
    let table: Vec<Vec<String>> = trajectories
        .iter()
        .map(|t| {
            vec![
                num(t.mu),
                num(t.eps),
                num(t.l),
                num(t.r0),
                num(t.h_end),
                num(t.h_r0),
                opt(t.exited_at),
            ]
        })
        .collect();
    formats::write_table(
        &dir.join("trajectories.csv"),
        &["mu", "eps", "l", "r0", "h_end", "h_r0", "exited_at"],
        table,
    )?;
    let report = AvgflowReport {
        reports,
        trajectories,
        equilibria: equilibrium_curve(&grid, Some(&family)),
    };
    formats::write_json(&dir.join("report.json"), &report)?;
    if c.plot {
        let mut fig = Figure {
            title: format!("averaged level flow, L = {}", a.l),
            x_label: "x".into(),
            y_label: "h".into(),
            ..Default::default()
        };
        for (row, path) in report.trajectories.iter().map(|r| (r, dir.join(&r.file))) {
            let pts = read_xy(&path)?;
            fig.series.push(Series {
                label: format!("mu {} eps {}", row.mu, row.eps),
                points: pts,
                ..Default::default()
            });
        }
        formats::write_text(&dir.join("avgflow.svg"), &fig.render())?;
    }
    Ok(report)
}

fn read_xy(path: &Path) -> CliResult<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok((formats::parse_num(&rec[0])?, formats::parse_num(&rec[1])?))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PulseRow {
    pub eps: f64,
    pub phase: Phase,
    pub mu: f64,
    pub l: f64,
    pub h_center: Option<f64>,
    pub plateau: Option<f64>,
    pub measure: Option<f64>,
    pub bvp_residual: Option<f64>,
    pub verification_residual: Option<f64>,
    pub error: Option<String>,
}

fn pulse_row(eps: f64, phase: Phase, mu: f64, l: f64, r: &CliResult<PulseSolution>) -> PulseRow {
    let ok = r.as_ref().ok();
    PulseRow {
        eps,
        phase,
        mu,
        l,
        h_center: ok.map(|p| p.h_at_center()),
        plateau: ok.map(|p| p.plateau_length),
        measure: ok.map(|p| p.sq_l2_norm),
        bvp_residual: ok.map(|p| p.bvp_residual),
        verification_residual: ok.map(|p| p.verification_residual()),
        error: r.as_ref().err().map(|e| e.to_string()),
    }
}

/// Pulse with plateau near `l` at `(μ, ε)`, glued from the `h = 0` roll.
pub fn pulse_at(
    run: &Run,
    onset: &OnsetBranch,
    mu: f64,
    eps: f64,
    phase: Phase,
    l: f64,
    r_end: f64,
) -> CliResult<PulseSolution> {
    let c = &run.cfg;
    let roll = onset.roll_at(mu)?;
    Ok(solve_pulse_near(
        &roll,
        l,
        r_end,
        phase,
        c.mesh,
        ModelParams::new(mu, c.nu, eps),
        &c.pulse_options(),
    )?)
}

pub fn cmd_pulse(run: &Run) -> CliResult<Vec<PulseRow>> {
    let dir = run.out_dir("pulse")?;
    let c = &run.cfg;
    let onset = run.onset()?;
    let l = c.pulse.l;
    let r_end = l + c.r_end_margin;
    let main: Vec<(f64, Phase)> = c
        .eps
        .iter()
        .flat_map(|&e| c.phases.iter().map(move |&p| (e, p)))
        .collect();
    let solved: Vec<CliResult<PulseSolution>> = run.pool.install(|| {
        main.par_iter()
            .map(|&(eps, ph)| pulse_at(run, &onset, c.pulse.mu, eps, ph, l, r_end))
            .collect()
    });
    let mut rows = Vec::new();
    for (&(eps, ph), r) in main.iter().zip(&solved) {
        let stem = format!("{}_eps{}", ph.label(), label_num(eps));
        match r {
            Ok(p) => {
                formats::write_profile(&dir.join(format!("profile_{stem}.csv")), p)?;
                formats::write_json(&dir.join(format!("checkpoint_{stem}.json")), p)?;
            }
            Err(e) => eprintln!("pulse {stem}: {e}"),
        }
        rows.push(pulse_row(eps, ph, c.pulse.mu, l, r));
    }
    let extra: Vec<(f64, Phase, f64)> = main
        .iter()
        .flat_map(|&(e, p)| c.pulse.mu_values.iter().map(move |&m| (e, p, m)))
        .collect();
    let centers: Vec<PulseRow> = run.pool.install(|| {
        extra
            .par_iter()
            .map(|&(eps, ph, mu)| {
                pulse_row(
                    eps,
                    ph,
                    mu,
                    l,
                    &pulse_at(run, &onset, mu, eps, ph, l, r_end),
                )
            })
            .collect()
    });
    let table = rows
        .iter()
        .chain(&centers)
        .map(|r| {
            vec![
                num(r.eps),
                r.phase.label().into(),
                num(r.mu),
                num(r.l),
                opt(r.h_center),
                opt(r.plateau),
                opt(r.measure),
                opt(r.bvp_residual),
                opt(r.verification_residual),
            ]
        })
        .collect();
    formats::write_table(
        &dir.join("pulses.csv"),
        &[
            "eps",
            "phase",
            "mu",
            "l",
            "h_center",
            "plateau",
            "measure",
            "bvp_residual",
            "verification_residual",
        ],
        table,
    )?;
    if c.plot {
        let mut fig = Figure {
            title: format!("H along pulses, mu = {}", c.pulse.mu),
            x_label: "r".into(),
            y_label: "H(u(r))".into(),
            ..Default::default()
        };
        for (&(eps, ph), r) in main.iter().zip(&solved) {
            if let Ok(p) = r {
                fig.series.push(Series {
                    label: format!("{} eps {}", ph.label(), eps),
                    points: rollscape_core::pulse::hamiltonian_trace(p),
                    ..Default::default()
                });
            }
        }
        formats::write_text(&dir.join("hamiltonian.svg"), &fig.render())?;
    }
    rows.extend(centers);
    if solved.iter().all(|r| r.is_err()) {
        return Err(CliError::Solver("no pulse converged".into()));
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchSummary {
    pub label: String,
    pub phase: Phase,
    pub eps: f64,
    pub points: usize,
    pub folds: usize,
    pub fold_mu_range: Option<(f64, f64)>,
    pub termination: Option<Termination>,
    pub collapse: Option<CollapseTable>,
    pub error: Option<String>,
}

pub fn branch_label(phase: Phase, eps: f64) -> String {
    format!("{}_eps{}", phase.label(), label_num(eps))
}

/// Traces one snaking branch from a pulse with plateau near `snake.l`.
pub fn snake_branch(run: &Run, onset: &OnsetBranch, phase: Phase, eps: f64) -> CliResult<Branch> {
    let s = &run.cfg.snake;
    let start = pulse_at(
        run,
        onset,
        s.mu,
        eps,
        phase,
        s.l,
        s.plateau_cap + run.cfg.r_end_margin,
    )?;
    let opts = BranchOptions {
        ds: s.ds,
        ds_max: s.ds_max,
        n_steps: s.n_steps,
        mu_bounds: (s.mu_bounds[0], s.mu_bounds[1]),
        measure_cap: None,
        plateau_cap: Some(s.plateau_cap),
        direction: 1.0,
        fixed_step: false,
    };
    Ok(trace_branch(&start, &opts, None)?)
}

pub fn cmd_snake(run: &Run) -> CliResult<Vec<BranchSummary>> {
    let dir = run.out_dir("snake")?;
    let c = &run.cfg;
    let onset = run.onset()?;
    let mu_max = maxwell_point_on(&onset, (c.maxwell.bracket[0], c.maxwell.bracket[1]))
        .ok()
        .map(|m| m.mu);
    let jobs: Vec<(Phase, f64)> = c
        .eps
        .iter()
        .flat_map(|&e| c.phases.iter().map(move |&p| (p, e)))
        .collect();
    let traced: Vec<CliResult<Branch>> = run.pool.install(|| {
        jobs.par_iter()
            .map(|&(ph, eps)| snake_branch(run, &onset, ph, eps))
            .collect()
    });
    let mut summaries = Vec::new();
    let mut done = Vec::new();
    for (&(ph, eps), r) in jobs.iter().zip(traced) {
        let label = branch_label(ph, eps);
        match r {
            Ok(b) => {
                let collapse = mu_max.and_then(|m| collapse_diagnostics(&b.folds, m).ok());
                if let Some(t) = &collapse {
                    formats::write_collapse(&dir.join(format!("collapse_{label}.csv")), t)?;
                }
                let fm = b.folds.iter().map(|f| f.mu);
                summaries.push(BranchSummary {
                    label: label.clone(),
                    phase: ph,
                    eps,
                    points: b.points.len(),
                    folds: b.folds.len(),
                    fold_mu_range: fm.clone().reduce(f64::min).zip(fm.reduce(f64::max)),
                    termination: Some(b.termination.clone()),
                    collapse,
                    error: None,
                });
                done.push((label, b));
            }
            Err(e) => {
                eprintln!("branch {label}: {e}");
                summaries.push(BranchSummary {
                    label,
                    phase: ph,
                    eps,
                    points: 0,
                    folds: 0,
                    fold_mu_range: None,
                    termination: None,
                    collapse: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    snaking_diagram(&done, &dir, mu_max, c.plot)?;
    formats::write_json(&dir.join("summary.json"), &summaries)?;
    if done.is_empty() {
        return Err(CliError::Solver("no branch completed".into()));
    }
    Ok(summaries)
}

/// Per-branch CSVs, an index `branches.csv` and the combined measure-vs-μ diagram.
pub fn snaking_diagram(
    branches: &[(String, Branch)],
    dir: &Path,
    mu_max: Option<f64>,
    plot: bool,
) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut index = Vec::new();
    let mut fig = Figure {
        title: "snaking diagram".into(),
        x_label: "mu".into(),
        y_label: "integral of U^2".into(),
        vlines: mu_max
            .map(|m| (m, format!("mu_Max = {m:.4}")))
            .into_iter()
            .collect(),
        ..Default::default()
    };
    for (label, b) in branches {
        let file = format!("branch_{label}.csv");
        formats::write_branch(&dir.join(&file), &b.points)?;
        formats::write_folds(&dir.join(format!("folds_{label}.csv")), &b.folds)?;
        index.push(vec![
            label.clone(),
            b.phase.label().into(),
            num(b.eps),
            b.points.len().to_string(),
            b.folds.len().to_string(),
            b.folds
                .iter()
                .filter(|f| f.kind == FoldKind::Left)
                .count()
                .to_string(),
            file,
        ]);
        fig.series.push(Series {
            label: label.clone(),
            points: b.points.iter().map(|p| (p.mu, p.measure)).collect(),
            markers: b.folds.iter().map(|f| (f.mu, f.measure)).collect(),
            ..Default::default()
        });
    }
    formats::write_table(
        &dir.join("branches.csv"),
        &[
            "label",
            "phase",
            "eps",
            "points",
            "folds",
            "left_folds",
            "file",
        ],
        index,
    )?;
    if plot {
        formats::write_text(&dir.join("diagram.svg"), &fig.render())?;
    }
    Ok(())
}
