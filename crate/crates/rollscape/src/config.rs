//! Run configuration: a TOML file plus command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use rollscape_core::pulse::Phase;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub nu: f64,
    /// Roll-family window in `μ`.
    pub mu_range: [f64; 2],
    /// Roll-family window in `h`.
    pub h_range: [f64; 2],
    /// Grid nodes in `μ` and `h`.
    pub grid: [usize; 2],
    pub eps: Vec<f64>,
    pub phases: Vec<Phase>,
    pub modes: usize,
    pub mesh: f64,
    /// `R_end = L + r_end_margin`.
    pub r_end_margin: f64,
    pub tolerances: Tolerances,
    pub out: PathBuf,
    /// Seed for randomized checks.
    pub seed: u64,
    pub plot: bool,
    /// Worker threads; the number of available cores when absent.
    pub jobs: Option<usize>,
    pub maxwell: MaxwellConfig,
    pub avgflow: AvgflowConfig,
    pub pulse: PulseConfig,
    pub snake: SnakeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Newton tolerance of the pulse solver.
    pub bvp: f64,
    pub max_doublings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaxwellConfig {
    pub bracket: [f64; 2],
    pub derivative_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AvgflowConfig {
    pub k: [f64; 2],
    pub j_tilde: [f64; 2],
    pub delta: f64,
    pub r0: f64,
    pub l: f64,
    pub h_end: f64,
    pub mu_values: Vec<f64>,
    /// Evaluate `S` by solving rolls instead of interpolating the grid.
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseConfig {
    pub mu: f64,
    pub l: f64,
    /// Extra `μ` values whose center level `H(u(0))` is tabulated.
    pub mu_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnakeConfig {
    pub mu: f64,
    pub l: f64,
    pub ds: f64,
    pub ds_max: f64,
    pub n_steps: usize,
    pub plateau_cap: f64,
    pub mu_bounds: [f64; 2],
}

pub const FIG_MU_VALUES: [f64; 5] = [0.195, 0.1975, 0.2004, 0.2025, 0.205];

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            nu: rollscape_core::DEFAULT_NU,
            mu_range: [0.15, 0.225],
            h_range: [-0.05, 0.05],
            grid: [21, 21],
            eps: vec![0.0, 0.1],
            phases: vec![Phase::Zero, Phase::Pi],
            modes: rollscape_core::rolls::DEFAULT_MODES,
            mesh: rollscape_core::pulse::DEFAULT_MESH,
            r_end_margin: rollscape_core::pulse::R_END_MARGIN,
            tolerances: Tolerances::default(),
            out: PathBuf::from("out"),
            seed: 1,
            plot: true,
            jobs: None,
            maxwell: MaxwellConfig::default(),
            avgflow: AvgflowConfig::default(),
            pulse: PulseConfig::default(),
            snake: SnakeConfig::default(),
        }
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            bvp: 1e-10,
            max_doublings: rollscape_core::pulse::MAX_DOUBLINGS,
        }
    }
}

impl Default for MaxwellConfig {
    fn default() -> Self {
        MaxwellConfig {
            bracket: [0.15, 0.25],
            derivative_step: rollscape_core::svf::DERIVATIVE_STEP,
        }
    }
}

impl Default for AvgflowConfig {
    fn default() -> Self {
        let k = rollscape_core::avgflow::DEFAULT_K;
        AvgflowConfig {
            k: [k.0, k.1],
            j_tilde: [0.21, 0.225],
            delta: rollscape_core::avgflow::DEFAULT_DELTA,
            r0: 1.0,
            l: 40.0,
            h_end: 0.0,
            mu_values: FIG_MU_VALUES.to_vec(),
            exact: true,
        }
    }
}

impl Default for PulseConfig {
    fn default() -> Self {
        PulseConfig {
            mu: 0.2,
            l: 20.0,
            mu_values: FIG_MU_VALUES.to_vec(),
        }
    }
}

impl Default for SnakeConfig {
    fn default() -> Self {
        SnakeConfig {
            mu: 0.2,
            l: 8.0,
            ds: 0.2,
            ds_max: 0.5,
            n_steps: 4000,
            plateau_cap: 40.0,
            mu_bounds: [0.1, 0.3],
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> CliResult<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg()))
    }
}

fn range(name: &str, r: [f64; 2]) -> CliResult<()> {
    check(r[0].is_finite() && r[1].is_finite() && r[0] < r[1], || {
        format!("{name} must satisfy min < max, got [{}, {}]", r[0], r[1])
    })
}

fn positive(name: &str, v: f64) -> CliResult<()> {
    check(v > 0.0 && v.is_finite(), || {
        format!("{name} must be positive, got {v}")
    })
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        RunConfig::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        positive("nu", self.nu)?;
        range("mu_range", self.mu_range)?;
        range("h_range", self.h_range)?;
        check(self.grid[0] >= 2 && self.grid[1] >= 2, || {
            format!("grid needs at least 2 × 2 nodes, got {:?}", self.grid)
        })?;
        check(!self.eps.is_empty(), || "eps list is empty".into())?;
        for &e in &self.eps {
            check(e >= 0.0 && e.is_finite(), || {
                format!("eps must be ≥ 0, got {e}")
            })?;
        }
        check(!self.phases.is_empty(), || "phase list is empty".into())?;
        check(
            (8..=rollscape_core::rolls::MAX_MODES).contains(&self.modes),
            || {
                format!(
                    "modes must lie in [8, {}], got {}",
                    rollscape_core::rolls::MAX_MODES,
                    self.modes
                )
            },
        )?;
        positive("mesh", self.mesh)?;
        check(self.r_end_margin >= 10.0, || {
            format!("r_end_margin must be ≥ 10, got {}", self.r_end_margin)
        })?;
        positive("tolerances.bvp", self.tolerances.bvp)?;
        check(self.jobs != Some(0), || "jobs must be ≥ 1".into())?;
        range("maxwell.bracket", self.maxwell.bracket)?;
        positive("maxwell.derivative_step", self.maxwell.derivative_step)?;
        let a = &self.avgflow;
        range("avgflow.k", a.k)?;
        check(a.k[0] < 0.0 && a.k[1] > 0.0, || {
            format!("avgflow.k must contain 0 in its interior, got {:?}", a.k)
        })?;
        range("avgflow.j_tilde", a.j_tilde)?;
        positive("avgflow.delta", a.delta)?;
        positive("avgflow.r0", a.r0)?;
        check(a.l > a.r0, || {
            format!("avgflow.l must exceed r0, got {} ≤ {}", a.l, a.r0)
        })?;
        positive("pulse.mu", self.pulse.mu)?;
        positive("pulse.l", self.pulse.l)?;
        let s = &self.snake;
        positive("snake.mu", s.mu)?;
        positive("snake.l", s.l)?;
        positive("snake.ds", s.ds)?;
        check(s.ds_max >= s.ds, || {
            format!("snake.ds_max must be ≥ ds, got {} < {}", s.ds_max, s.ds)
        })?;
        positive("snake.plateau_cap", s.plateau_cap)?;
        range("snake.mu_bounds", s.mu_bounds)?;
        Ok(())
    }

    pub fn pulse_options(&self) -> rollscape_core::pulse::PulseOptions {
        rollscape_core::pulse::PulseOptions {
            tol: self.tolerances.bvp,
            max_doublings: self.tolerances.max_doublings,
            ..Default::default()
        }
    }

    pub fn mu_range(&self) -> (f64, f64) {
        (self.mu_range[0], self.mu_range[1])
    }

    pub fn h_range(&self) -> (f64, f64) {
        (self.h_range[0], self.h_range[1])
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.grid[0], self.grid[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = RunConfig::from_toml("nu = 1.5\n[snake]\nplateau_cap = 20.0\n").unwrap();
        assert_eq!(c.nu, 1.5);
        assert_eq!(c.snake.plateau_cap, 20.0);
        assert_eq!(c.snake.ds, SnakeConfig::default().ds);
        assert_eq!(c.phases, vec![Phase::Zero, Phase::Pi]);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "mu_range = [0.2, 0.2]",
            "mu_range = [0.3, 0.2]",
            "grid = [1, 5]",
            "eps = [-0.1]",
            "eps = []",
            "phases = [\"half\"]",
            "mesh = 0.0",
            "unknown_key = 1",
            "[avgflow]\nk = [0.01, 0.05]",
            "nu = ",
        ] {
            let err = RunConfig::from_toml(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = RunConfig::from_toml("nu = 1.6\nmu_range = [0.1,\n").unwrap_err();
        assert!(
            err.to_string().contains("line 2") || err.to_string().contains("line 3"),
            "{err}"
        );
    }
}
