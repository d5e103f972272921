use serde::Serialize;

use super::{ConstraintGrid, LoadedSystem};
use crate::constraints::{pattern_from, ConstraintSpec};
use crate::linalg::{mat_to_rows, Tolerance};
use crate::rank::{RankCertifier, RankReport};
use crate::volume::{classical_controllability, classical_observability, GramianReport, VolumeSolver, VolumeSummary};

#[derive(Clone, Debug, Serialize)]
pub struct SystemShape {
    pub nx: usize,
    pub nu: usize,
    pub ny: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalysisReport {
    pub system: SystemShape,
    pub constraints: ConstraintSpec,
    /// Whether the explicit masks of a spec file were intersected with the families.
    pub custom_support: bool,
    pub controllability: VolumeSummary,
    pub rank: RankReport,
    /// Present when the system file supplies `C`. Uses the constraint
    /// families on the dual system; explicit masks do not carry over.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observability: Option<VolumeSummary>,
}

pub fn analyze(loaded: &LoadedSystem, grid: &ConstraintGrid, tol: &Tolerance) -> anyhow::Result<AnalysisReport> {
    let sys = &loaded.system;
    let spec = ConstraintSpec::new(grid.tau[0], grid.speed[0], grid.radius[0])?;
    let mut pattern = pattern_from(sys, spec)?;
    if let Some(custom) = &loaded.pattern {
        pattern = pattern.intersect(custom)?;
    }
    let controllability = VolumeSolver::new(sys, tol).solve(&pattern)?.summary();
    let rank = RankCertifier::new(sys, tol).check(&pattern)?;
    let observability = if loaded.has_output {
        let dual = sys.dual();
        Some(VolumeSolver::new(&dual, tol).solve(&pattern_from(&dual, spec)?)?.summary())
    } else {
        None
    };
    Ok(AnalysisReport {
        system: SystemShape { nx: sys.nx(), nu: sys.nu(), ny: sys.ny(), horizon: sys.horizon() },
        constraints: spec,
        custom_support: loaded.pattern.is_some(),
        controllability,
        rank,
        observability,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GramianSummary {
    pub log_det: Option<f64>,
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
}

impl From<&GramianReport> for GramianSummary {
    fn from(g: &GramianReport) -> Self {
        Self { log_det: g.log_det.finite(), w: mat_to_rows(&g.w) }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GramiansReport {
    pub system: SystemShape,
    pub controllability: GramianSummary,
    pub observability: GramianSummary,
}

pub fn gramians(loaded: &LoadedSystem, tol: &Tolerance) -> GramiansReport {
    let sys = &loaded.system;
    GramiansReport {
        system: SystemShape { nx: sys.nx(), nu: sys.nu(), ny: sys.ny(), horizon: sys.horizon() },
        controllability: (&classical_controllability(sys, tol)).into(),
        observability: (&classical_observability(sys, tol)).into(),
    }
}
