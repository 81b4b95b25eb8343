use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rollscape::acceptance;
use rollscape::commands::{self, Run};
use rollscape::config::RunConfig;
use rollscape::error::{CliError, CliResult};
use rollscape_core::pulse::Phase;

#[derive(Parser)]
#[command(
    name = "rollscape",
    version,
    about = "Radial localized roll patterns: roll families, averaged field, pulses and snaking branches"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Roll family on the (mu, h) grid with Floquet data.
    Rolls,
    /// Averaged field S(h, mu) on the grid and its sign map.
    Svf,
    /// Root of S(0, mu) and the derivative checks there.
    Maxwell,
    /// Averaged level flow trajectories and the persistence classification.
    Avgflow,
    /// Radial pulses for each (eps, phase).
    Pulse,
    /// Snaking branches for each (eps, phase).
    Snake,
    /// Run the acceptance suite.
    Check {
        /// Only these criteria (1-10).
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
    },
}

#[derive(Args)]
struct Overrides {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    nu: Option<f64>,
    /// Comma-separated list of eps values.
    #[arg(long, global = true, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    mesh: Option<f64>,
    #[arg(long, global = true)]
    modes: Option<usize>,
    /// Comma-separated phases: 0, pi.
    #[arg(long, global = true, value_delimiter = ',')]
    phase: Option<Vec<Phase>>,
    #[arg(long, global = true, overrides_with = "no_plot")]
    plot: bool,
    #[arg(long, global = true, overrides_with = "plot")]
    no_plot: bool,
    /// Worker threads; ROLLSCAPE_JOBS takes precedence.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

impl Overrides {
    fn resolve(self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.nu {
            cfg.nu = v;
        }
        if let Some(v) = self.eps {
            cfg.eps = v;
        }
        if let Some(v) = self.out {
            cfg.out = v;
        }
        if let Some(v) = self.mesh {
            cfg.mesh = v;
        }
        if let Some(v) = self.modes {
            cfg.modes = v;
        }
        if let Some(v) = self.phase {
            cfg.phases = v;
        }
        if self.plot {
            cfg.plot = true;
        }
        if self.no_plot {
            cfg.plot = false;
        }
        if self.jobs.is_some() {
            cfg.jobs = self.jobs;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let cfg = cli.overrides.resolve()?;
    match cli.command {
        Command::Check { only } => {
            let jobs = Some(commands::effective_jobs(&cfg));
            let outcomes = acceptance::run(&only, jobs)?;
            for o in &outcomes {
                println!("{}", o.line());
            }
            match acceptance::unexpected_failures(&outcomes) {
                0 => Ok(()),
                n => Err(CliError::Acceptance(n)),
            }
        }
        cmd => {
            let run = Run::new(cfg)?;
            match cmd {
                Command::Rolls => {
                    let s = commands::cmd_rolls(&run)?;
                    println!(
                        "{}/{} rolls solved, min alpha {:?}",
                        s.solved, s.total, s.min_alpha
                    );
                }
                Command::Svf => {
                    let (_, h) = commands::cmd_svf(&run)?;
                    println!(
                        "S on {}/{} nodes, max identity residual {:.2e}",
                        h.solved,
                        h.dims.0 * h.dims.1,
                        h.max_identity_residual
                    );
                }
                Command::Maxwell => {
                    let r = commands::cmd_maxwell(&run)?;
                    println!(
                        "mu_Max = {:.7}, S_h = {:.6}, S_mu = {:.6}",
                        r.mu_max, r.s_h_at_max, r.s_mu_at_max
                    );
                }
                Command::Avgflow => {
                    let r = commands::cmd_avgflow(&run)?;
                    for n in &r.reports {
                        println!("{} eps {:?}: {:?}", n.name, n.eps, n.report.verdict);
                    }
                }
                Command::Pulse => {
                    let rows = commands::cmd_pulse(&run)?;
                    let ok = rows.iter().filter(|r| r.error.is_none()).count();
                    println!("{ok}/{} pulses converged", rows.len());
                }
                Command::Snake => {
                    for b in commands::cmd_snake(&run)? {
                        println!("{}: {} points, {} folds", b.label, b.points, b.folds);
                    }
                }
                Command::Check { .. } => unreachable!(),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
