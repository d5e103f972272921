//! Classical and constrained controllability / observability volumes.
//!
//! Volumes are reported without the unit-ball constant, i.e. as
//! `sqrt(det)`-type quantities; all comparisons are ratios, so the constant
//! cancels. Quantities are kept in log space.

use serde::{Deserialize, Serialize};

use crate::constraints::{pattern_from, Provenance, Rollout, SupportPattern};
use crate::error::{Error, Result};
use crate::linalg::{logdet_gram, logdet_psd, range_basis, symmetrize, LogDet, Mat, SvdFactors, Tolerance, Vector};
use crate::model::LinearSystem;

/// A Gramian and its log-determinant.
#[derive(Clone, Debug)]
pub struct GramianReport {
    pub w: Mat,
    pub log_det: LogDet,
}

impl GramianReport {
    pub fn det(&self) -> f64 {
        self.log_det.value().exp()
    }
}

/// `W_c = sum_{t<T} A^t B B^T (A^T)^t`.
pub fn classical_controllability(sys: &LinearSystem, tol: &Tolerance) -> GramianReport {
    let nx = sys.nx();
    let mut w = Mat::zeros(nx, nx);
    let mut ab = sys.b().clone();
    for t in 0..sys.horizon() {
        if t > 0 {
            ab = sys.a() * ab;
        }
        w += &ab * ab.transpose();
    }
    symmetrize(&mut w);
    let log_det = logdet_psd(&w, tol);
    GramianReport { w, log_det }
}

/// `W_o`, computed as the controllability Gramian of `(A^T, C^T)`.
pub fn classical_observability(sys: &LinearSystem, tol: &Tolerance) -> GramianReport {
    classical_controllability(&sys.dual(), tol)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VolumeStatus {
    Ok,
    /// Some column admits no constrained solution; the volume is zero.
    Infeasible,
    /// `G^T G` is singular while `A` is not; the ellipsoid is unbounded.
    DegenerateUnbounded,
    /// `det A = 0`; the image `A^T x0` is flat and the volume is zero.
    SingularA,
}

impl VolumeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            VolumeStatus::Ok => "ok",
            VolumeStatus::Infeasible => "infeasible",
            VolumeStatus::DegenerateUnbounded => "degenerate-unbounded",
            VolumeStatus::SingularA => "singular-A",
        }
    }
}

#[derive(Clone, Debug)]
pub struct VolumeReport {
    pub status: VolumeStatus,
    pub classical: GramianReport,
    /// `log Y_c`, finite exactly when `status == Ok`.
    pub log_yc: Option<f64>,
    /// `Q = G^T G` with `G = (I - M M^+) N`; `None` when infeasible.
    pub q: Option<Mat>,
    /// Kernel dimension `r_i` of each processed column.
    pub ranks: Vec<usize>,
}

/// Serialized form of a [`VolumeReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeSummary {
    pub status: VolumeStatus,
    #[serde(rename = "log_Vc")]
    pub log_vc: Option<f64>,
    #[serde(rename = "log_Yc")]
    pub log_yc: Option<f64>,
    #[serde(rename = "Yc2_over_Vc")]
    pub yc2_over_vc: Option<f64>,
    pub ranks: Vec<usize>,
}

impl VolumeReport {
    pub fn log_vc(&self) -> f64 {
        self.classical.log_det.value()
    }

    /// `Y_c^2 / V_c`, when both are finite and nonzero.
    pub fn ratio(&self) -> Option<f64> {
        let log_vc = self.classical.log_det.finite()?;
        self.log_yc.map(|l| (2.0 * l - log_vc).exp())
    }

    /// `Y_c` itself: zero when infeasible or `A` is singular, infinite when unbounded.
    pub fn yc(&self) -> f64 {
        match self.status {
            VolumeStatus::Ok => self.log_yc.map_or(f64::NAN, f64::exp),
            VolumeStatus::Infeasible | VolumeStatus::SingularA => 0.0,
            VolumeStatus::DegenerateUnbounded => f64::INFINITY,
        }
    }

    /// `x0^T Q x0`, the optimal input energy for steering `x0` to the origin.
    pub fn energy(&self, x0: &Vector) -> Option<f64> {
        self.q.as_ref().map(|q| x0.dot(&(q * x0)))
    }

    pub fn summary(&self) -> VolumeSummary {
        VolumeSummary {
            status: self.status,
            log_vc: self.classical.log_det.finite(),
            log_yc: self.log_yc,
            yc2_over_vc: self.ratio(),
            ranks: self.ranks.clone(),
        }
    }
}

/// Feasibility and general solution `Phi_i = omega_i + V_i lambda_i` of one column.
#[derive(Clone, Debug)]
pub struct ColumnSolution {
    pub feasible: bool,
    pub residual: f64,
    pub omega: Vector,
    pub kernel: Mat,
}

/// Per-system state reused across support patterns.
#[derive(Clone, Debug)]
pub struct VolumeSolver {
    rollout: Rollout,
    classical: GramianReport,
    /// `log |det A^T| = T log |det A|`.
    log_det_a_pow: LogDet,
    horizon: usize,
    nx: usize,
    nu: usize,
    tol: Tolerance,
}

impl VolumeSolver {
    pub fn new(sys: &LinearSystem, tol: &Tolerance) -> Self {
        let log_det_a_pow = match logdet_gram(sys.a(), tol) {
            LogDet::Finite(v) => LogDet::Finite(0.5 * v * sys.horizon() as f64),
            LogDet::Singular => LogDet::Singular,
        };
        Self {
            rollout: Rollout::new(sys),
            classical: classical_controllability(sys, tol),
            log_det_a_pow,
            horizon: sys.horizon(),
            nx: sys.nx(),
            nu: sys.nu(),
            tol: *tol,
        }
    }

    pub fn solve_column(&self, p: &SupportPattern, i: usize) -> ColumnSolution {
        let cc = self.rollout.column_constraint(p, i);
        let svd = SvdFactors::new(&cc.s, &self.tol);
        let rhs = Mat::from_column_slice(cc.c.len(), 1, (-&cc.c).as_slice());
        let omega = svd.solve(&rhs);
        let residual = (&cc.s * &omega - &rhs).norm();
        ColumnSolution {
            feasible: self.tol.is_feasible(residual, cc.c.norm()),
            residual,
            omega: omega.column(0).into_owned(),
            kernel: svd.kernel(),
        }
    }

    pub fn solve(&self, p: &SupportPattern) -> Result<VolumeReport> {
        if (p.nx(), p.nu(), p.horizon()) != (self.nx, self.nu, self.horizon) {
            return Err(Error::Dimension(format!(
                "pattern is for (nx, nu, T) = ({}, {}, {}), system is ({}, {}, {})",
                p.nx(),
                p.nu(),
                p.horizon(),
                self.nx,
                self.nu,
                self.horizon
            )));
        }
        let width = self.horizon * self.nu;
        let mut n = Mat::zeros(width, self.nx);
        let mut kernels = Vec::with_capacity(self.nx);
        let mut ranks = Vec::with_capacity(self.nx);
        for i in 0..self.nx {
            let col = self.solve_column(p, i);
            ranks.push(col.kernel.ncols());
            if !col.feasible {
                return Ok(VolumeReport {
                    status: VolumeStatus::Infeasible,
                    classical: self.classical.clone(),
                    log_yc: None,
                    q: None,
                    ranks,
                });
            }
            n.set_column(i, &col.omega);
            kernels.push(col.kernel);
        }

        let total: usize = ranks.iter().sum();
        let mut m = Mat::zeros(width, total);
        let mut offset = 0;
        for k in &kernels {
            m.columns_mut(offset, k.ncols()).copy_from(k);
            offset += k.ncols();
        }
        // G = N - M M^+ N, with M M^+ the projector onto range(M).
        let basis = range_basis(&m, &self.tol);
        let g = &n - &basis * basis.tr_mul(&n);
        let mut q = g.tr_mul(&g);
        symmetrize(&mut q);

        let (status, log_yc) = match (self.log_det_a_pow, logdet_gram(&g, &self.tol)) {
            (LogDet::Singular, _) => (VolumeStatus::SingularA, None),
            (LogDet::Finite(_), LogDet::Singular) => (VolumeStatus::DegenerateUnbounded, None),
            (LogDet::Finite(la), LogDet::Finite(lg)) => (VolumeStatus::Ok, Some(la - 0.5 * lg)),
        };
        Ok(VolumeReport { status, classical: self.classical.clone(), log_yc, q: Some(q), ranks })
    }
}

pub fn constrained_controllability(
    sys: &LinearSystem,
    p: &SupportPattern,
    tol: &Tolerance,
) -> Result<VolumeReport> {
    VolumeSolver::new(sys, tol).solve(p)
}

/// Constrained volume of the dual system `(A^T, C^T)`. Family patterns are
/// rebuilt on the dual (transposed) graph; custom patterns must already be
/// shaped for the dual, i.e. `phi_u(t)` is `ny x nx`.
pub fn constrained_observability(
    sys: &LinearSystem,
    p: &SupportPattern,
    tol: &Tolerance,
) -> Result<VolumeReport> {
    let dual = sys.dual();
    let dual_pattern = match p.provenance() {
        Provenance::Families(spec) => pattern_from(&dual, spec)?,
        Provenance::Custom => p.clone(),
    };
    constrained_controllability(&dual, &dual_pattern, tol)
}
