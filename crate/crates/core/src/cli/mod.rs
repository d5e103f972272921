//! Command-line front end.
//!
//! Arguments are parsed by clap into [`Cli`], validated into a [`RunConfig`],
//! and executed by [`execute`]. Everything that produces numbers is reachable
//! without a process boundary, which is how the tests drive it.

mod grid;
mod report;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::document::SystemDocument;
use crate::linalg::Tolerance;
use crate::model::{build_chain_bench, build_swing_grid, LinearSystem, SwingGridSpec};

pub use grid::{run_bench, run_sweep, BenchRow, SweepRow, BENCH_HEADER, SWEEP_HEADER};
pub use report::{analyze, gramians, AnalysisReport, GramianSummary, GramiansReport};

/// Exit status for invalid configuration or unreadable input.
pub const EXIT_CONFIG: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "ctrlvol", version, about = "Constrained controllability and observability volumes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Analyze,
    Sweep,
    Bench,
    Gramian,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Volumes and rank certificate for a single constraint set (JSON).
    Analyze(CommonArgs),
    /// Volumes and certificates over a grid of constraints (CSV).
    Sweep(CommonArgs),
    /// Timing of the volume computation against the rank certificate (CSV).
    Bench(CommonArgs),
    /// Classical controllability and observability Gramians (JSON).
    Gramian(CommonArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// System description in JSON.
    #[arg(long, value_name = "FILE")]
    pub spec: Option<PathBuf>,
    /// Swing-equation grid with ROWS x COLS buses.
    #[arg(long, num_args = 2, value_names = ["ROWS", "COLS"])]
    pub swing: Option<Vec<usize>>,
    #[arg(long, value_name = "F")]
    pub dt: Option<f64>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Chain benchmark sizes, comma separated.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub bench_nx: Option<Vec<usize>>,
    /// Actuator count relative to the state dimension for chain systems.
    #[arg(long, value_name = "F")]
    pub density: Option<f64>,
    /// Horizon.
    #[arg(long = "T", value_name = "N")]
    pub horizon: Option<usize>,
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub tau: Option<Vec<usize>>,
    /// Communication speeds; `inf` disables the constraint.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub speed: Option<Vec<Level<f64>>>,
    /// Locality radii; `inf` disables the constraint.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub radius: Option<Vec<Level<usize>>>,
    #[arg(long, value_name = "N")]
    pub trials: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "F")]
    pub rank_rtol: Option<f64>,
    #[arg(long, value_name = "F")]
    pub feas_atol: Option<f64>,
}

/// A grid value that may be `inf`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Level<T>(pub Option<T>);

impl<T: FromStr> FromStr for Level<T> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") {
            return Ok(Level(None));
        }
        s.parse().map(|v| Level(Some(v))).map_err(|_| format!("expected a number or `inf`, got `{s}`"))
    }
}

impl<T: fmt::Display> fmt::Display for Level<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Some(v) => v.fmt(f),
            None => f.write_str("inf"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SystemSource {
    Spec(PathBuf),
    Swing(SwingGridSpec),
    Chain { sizes: Vec<usize>, density: f64, horizon: usize, seed: u64 },
}

/// Cartesian grid of constraint parameters, iterated as tau, then speed,
/// then radius.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintGrid {
    pub tau: Vec<usize>,
    pub speed: Vec<Option<f64>>,
    pub radius: Vec<Option<usize>>,
}

impl ConstraintGrid {
    pub fn len(&self) -> usize {
        self.tau.len() * self.speed.len() * self.radius.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub source: SystemSource,
    pub grid: ConstraintGrid,
    pub seed: u64,
    pub trials: usize,
    pub out: Option<PathBuf>,
    pub tol: Tolerance,
}

pub const DEFAULT_BENCH_SIZES: [usize; 9] = [5, 6, 7, 8, 9, 10, 15, 20, 25];
pub const DEFAULT_TRIALS: usize = 40;

impl RunConfig {
    pub fn from_args(mode: Mode, args: &CommonArgs) -> anyhow::Result<Self> {
        let seed = args.seed.unwrap_or(0);
        let sources = [args.spec.is_some(), args.swing.is_some(), args.bench_nx.is_some()];
        let given = sources.iter().filter(|&&s| s).count();
        if given > 1 {
            bail!("give exactly one of --spec, --swing and --bench-nx");
        }
        if args.dt.is_some() && args.swing.is_none() {
            bail!("--dt applies to --swing systems only");
        }
        if args.density.is_some() && mode != Mode::Bench && args.bench_nx.is_none() {
            bail!("--density applies to chain systems only");
        }

        let source = if let Some(path) = &args.spec {
            if args.horizon.is_some() {
                bail!("the horizon of a --spec system comes from its \"T\" field");
            }
            SystemSource::Spec(path.clone())
        } else if let Some(dims) = &args.swing {
            let mut spec = SwingGridSpec { rows: dims[0], cols: dims[1], seed, ..SwingGridSpec::default() };
            if let Some(dt) = args.dt {
                spec.dt = dt;
            }
            if let Some(t) = args.horizon {
                spec.horizon = t;
            }
            SystemSource::Swing(spec)
        } else if args.bench_nx.is_some() || mode == Mode::Bench {
            let sizes = args.bench_nx.clone().unwrap_or_else(|| DEFAULT_BENCH_SIZES.to_vec());
            if sizes.is_empty() {
                bail!("--bench-nx needs at least one size");
            }
            if mode != Mode::Bench && sizes.len() != 1 {
                bail!("--bench-nx takes a single size outside of `bench`");
            }
            SystemSource::Chain {
                sizes,
                density: args.density.unwrap_or(0.75),
                horizon: args.horizon.unwrap_or(10),
                seed,
            }
        } else if mode == Mode::Sweep {
            // Defaults reproduce the 3x3 grid experiment.
            let mut spec = SwingGridSpec { seed, ..SwingGridSpec::default() };
            if let Some(t) = args.horizon {
                spec.horizon = t;
            }
            SystemSource::Swing(spec)
        } else {
            bail!("no system given: use --spec FILE, --swing ROWS COLS or --bench-nx N");
        };
        if mode == Mode::Bench && !matches!(source, SystemSource::Chain { .. }) {
            bail!("`bench` runs on chain systems (--bench-nx)");
        }

        let grid = default_grid(mode, &source, args);
        if grid.is_empty() {
            bail!("the constraint grid is empty");
        }
        if mode == Mode::Analyze && grid.len() != 1 {
            bail!("`analyze` takes a single value for each of --tau, --speed and --radius");
        }
        if let Some(v) = grid.speed.iter().flatten().find(|v| v.is_nan() || **v <= 0.0) {
            bail!("speeds must be positive, got {v}");
        }
        let trials = args.trials.unwrap_or(if mode == Mode::Bench { DEFAULT_TRIALS } else { 1 });
        if trials == 0 {
            bail!("--trials must be at least 1");
        }
        let defaults = Tolerance::default();
        let tol = Tolerance::new(
            args.rank_rtol.unwrap_or(defaults.rank_rtol),
            args.feas_atol.unwrap_or(defaults.feas_atol),
        )?;
        Ok(Self { mode, source, grid, seed, trials, out: args.out.clone(), tol })
    }

    /// The analysed system for every mode except `bench`.
    pub fn system(&self) -> anyhow::Result<LoadedSystem> {
        match &self.source {
            SystemSource::Spec(path) => {
                let doc = SystemDocument::load(path)
                    .with_context(|| format!("cannot read system file {}", path.display()))?;
                let system = doc.system().with_context(|| format!("invalid system in {}", path.display()))?;
                let pattern = doc.pattern(&system)?;
                Ok(LoadedSystem { has_output: doc.c.is_some(), system, pattern })
            }
            SystemSource::Swing(spec) => {
                Ok(LoadedSystem { system: build_swing_grid(spec)?, has_output: false, pattern: None })
            }
            SystemSource::Chain { sizes, density, horizon, seed } => Ok(LoadedSystem {
                system: build_chain_bench(sizes[0], *density, *horizon, *seed)?,
                has_output: false,
                pattern: None,
            }),
        }
    }
}

fn default_grid(mode: Mode, source: &SystemSource, args: &CommonArgs) -> ConstraintGrid {
    let speeds = |d: Vec<Option<f64>>| args.speed.as_ref().map_or(d, |v| v.iter().map(|l| l.0).collect());
    let radii = |d: Vec<Option<usize>>| args.radius.as_ref().map_or(d, |v| v.iter().map(|l| l.0).collect());
    match mode {
        Mode::Sweep => {
            let horizon = match source {
                SystemSource::Swing(s) => s.horizon,
                SystemSource::Chain { horizon, .. } => *horizon,
                SystemSource::Spec(_) => 12,
            };
            let mut r: Vec<Option<usize>> = (1..=8).map(Some).collect();
            r.push(None);
            ConstraintGrid {
                tau: args.tau.clone().unwrap_or_else(|| (0..=horizon).collect()),
                speed: speeds(vec![None]),
                radius: radii(r),
            }
        }
        Mode::Bench => ConstraintGrid {
            tau: args.tau.clone().unwrap_or_else(|| vec![0]),
            speed: speeds(vec![Some(1.0), Some(2.0), None]),
            radius: radii(vec![Some(1), Some(2), Some(3), None]),
        },
        Mode::Analyze | Mode::Gramian => ConstraintGrid {
            tau: args.tau.clone().unwrap_or_else(|| vec![0]),
            speed: speeds(vec![None]),
            radius: radii(vec![None]),
        },
    }
}

pub struct LoadedSystem {
    pub system: LinearSystem,
    /// Whether an output matrix was supplied, which enables observability.
    pub has_output: bool,
    pub pattern: Option<crate::constraints::SupportPattern>,
}

/// Runs a validated configuration and returns the text to emit.
pub fn execute(cfg: &RunConfig) -> anyhow::Result<String> {
    match cfg.mode {
        Mode::Analyze => {
            let loaded = cfg.system()?;
            let report = analyze(&loaded, &cfg.grid, &cfg.tol)?;
            Ok(serde_json::to_string_pretty(&report)? + "\n")
        }
        Mode::Gramian => {
            let loaded = cfg.system()?;
            Ok(serde_json::to_string_pretty(&gramians(&loaded, &cfg.tol))? + "\n")
        }
        Mode::Sweep => {
            let loaded = cfg.system()?;
            let rows = run_sweep(&loaded.system, loaded.pattern.as_ref(), &cfg.grid, &cfg.tol)?;
            Ok(grid::sweep_csv(&rows))
        }
        Mode::Bench => {
            let SystemSource::Chain { sizes, density, horizon, seed } = &cfg.source else {
                bail!("`bench` runs on chain systems (--bench-nx)");
            };
            let rows = run_bench(sizes, *density, *horizon, *seed, cfg.trials, &cfg.grid, &cfg.tol)?;
            Ok(grid::bench_csv(&rows))
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let (mode, args) = match &cli.command {
        Command::Analyze(a) => (Mode::Analyze, a),
        Command::Sweep(a) => (Mode::Sweep, a),
        Command::Bench(a) => (Mode::Bench, a),
        Command::Gramian(a) => (Mode::Gramian, a),
    };
    let cfg = RunConfig::from_args(mode, args)?;
    let text = execute(&cfg)?;
    emit(cfg.out.as_deref(), &text)
}

pub fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
