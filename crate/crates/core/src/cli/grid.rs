use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use super::{ConstraintGrid, Level};
use crate::constraints::{pattern_from, ConstraintSpec, SupportPattern};
use crate::error::Result;
use crate::linalg::Tolerance;
use crate::model::{build_chain_bench, LinearSystem};
use crate::rank::RankCertifier;
use crate::volume::{VolumeReport, VolumeSolver, VolumeStatus};

pub const SWEEP_HEADER: &str = "tau,speed,radius,status,log_Vc,log_Yc,ratio,rank_holds,feasible,t_vol_ms,t_rank_ms";
pub const BENCH_HEADER: &str = "n_x,trials,t_vol_total_ms,t_rank_total_ms,speedup";

/// One cell of a sweep. Zero volumes carry `log_yc = -inf` and `ratio = 0`,
/// unbounded ones `+inf` for both.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub tau: usize,
    pub speed: Option<f64>,
    pub radius: Option<usize>,
    pub status: VolumeStatus,
    pub log_vc: f64,
    pub log_yc: f64,
    pub ratio: f64,
    pub rank_holds: bool,
    pub feasible: bool,
    pub t_vol_ms: f64,
    pub t_rank_ms: f64,
}

impl SweepRow {
    fn new(spec: ConstraintSpec, vol: &VolumeReport, holds: bool, feasible: bool, t_vol: f64, t_rank: f64) -> Self {
        let (log_yc, ratio) = match vol.status {
            VolumeStatus::Ok => (vol.log_yc.unwrap_or(f64::NAN), vol.ratio().unwrap_or(f64::NAN)),
            VolumeStatus::Infeasible | VolumeStatus::SingularA => (f64::NEG_INFINITY, 0.0),
            VolumeStatus::DegenerateUnbounded => (f64::INFINITY, f64::INFINITY),
        };
        Self {
            tau: spec.tau,
            speed: spec.speed,
            radius: spec.radius,
            status: vol.status,
            log_vc: vol.log_vc(),
            log_yc,
            ratio,
            rank_holds: holds,
            feasible,
            t_vol_ms: t_vol,
            t_rank_ms: t_rank,
        }
    }

    /// The CSV line, without the trailing newline.
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{:.3},{:.3}",
            self.tau,
            Level(self.speed),
            Level(self.radius),
            self.status.as_str(),
            self.log_vc,
            self.log_yc,
            self.ratio,
            self.rank_holds,
            self.feasible,
            self.t_vol_ms,
            self.t_rank_ms
        )
    }
}

fn cells(grid: &ConstraintGrid) -> Result<Vec<ConstraintSpec>> {
    let mut out = Vec::with_capacity(grid.len());
    for &tau in &grid.tau {
        for &speed in &grid.speed {
            for &radius in &grid.radius {
                out.push(ConstraintSpec::new(tau, speed, radius)?);
            }
        }
    }
    Ok(out)
}

fn pattern(sys: &LinearSystem, spec: ConstraintSpec, custom: Option<&SupportPattern>) -> Result<SupportPattern> {
    let p = pattern_from(sys, spec)?;
    match custom {
        Some(c) => p.intersect(c),
        None => Ok(p),
    }
}

fn millis(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Evaluates every grid cell, in parallel, returning rows in grid order.
pub fn run_sweep(
    sys: &LinearSystem,
    custom: Option<&SupportPattern>,
    grid: &ConstraintGrid,
    tol: &Tolerance,
) -> Result<Vec<SweepRow>> {
    let solver = VolumeSolver::new(sys, tol);
    let certifier = RankCertifier::new(sys, tol);
    cells(grid)?
        .into_par_iter()
        .map(|spec| {
            let p = pattern(sys, spec, custom)?;
            let start = Instant::now();
            let vol = solver.solve(&p)?;
            let t_vol = millis(start);
            let start = Instant::now();
            let rank = certifier.check(&p)?;
            let t_rank = millis(start);
            Ok(SweepRow::new(spec, &vol, rank.holds, rank.feasible, t_vol, t_rank))
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv());
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub n_x: usize,
    pub trials: usize,
    /// Mean over trials of the time for all grid cells.
    pub t_vol_total_ms: f64,
    pub t_rank_total_ms: f64,
    pub speedup: f64,
}

/// Times both routes over every grid cell on `trials` random chain systems
/// per size. Per-system setup counts towards each route; building the
/// systems and patterns does not. Runs on the calling thread.
pub fn run_bench(
    sizes: &[usize],
    density: f64,
    horizon: usize,
    seed: u64,
    trials: usize,
    grid: &ConstraintGrid,
    tol: &Tolerance,
) -> Result<Vec<BenchRow>> {
    let specs = cells(grid)?;
    let mut rows = Vec::with_capacity(sizes.len());
    for &n_x in sizes {
        let (mut t_vol, mut t_rank) = (0.0, 0.0);
        for trial in 0..trials {
            let sys = build_chain_bench(n_x, density, horizon, seed.wrapping_add(trial as u64))?;
            let patterns = specs.iter().map(|&s| pattern_from(&sys, s)).collect::<Result<Vec<_>>>()?;
            let volume = || -> Result<f64> {
                let start = Instant::now();
                let solver = VolumeSolver::new(&sys, tol);
                for p in &patterns {
                    std::hint::black_box(solver.solve(p)?);
                }
                Ok(millis(start))
            };
            let rank = || -> Result<f64> {
                let start = Instant::now();
                let certifier = RankCertifier::new(&sys, tol);
                for p in &patterns {
                    std::hint::black_box(certifier.check(p)?);
                }
                Ok(millis(start))
            };
            // alternate the order so neither route always runs on a warm cache
            if trial % 2 == 0 {
                t_vol += volume()?;
                t_rank += rank()?;
            } else {
                t_rank += rank()?;
                t_vol += volume()?;
            }
        }
        let n = trials as f64;
        rows.push(BenchRow {
            n_x,
            trials,
            t_vol_total_ms: t_vol / n,
            t_rank_total_ms: t_rank / n,
            speedup: t_vol / t_rank,
        });
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(BENCH_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{:.3},{:.3},{:.4}", r.n_x, r.trials, r.t_vol_total_ms, r.t_rank_total_ms, r.speedup);
    }
    out
}
