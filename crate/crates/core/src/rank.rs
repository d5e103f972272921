//! Rank certificate for "constraints cost nothing".
//!
//! `Z_AB0` stacks, for one column of `phi = [phi_x(0..T); phi_u(0..T)]`, the
//! rows `phi_x(0) = I`, `phi_x(t+1) - A phi_x(t) - B phi_u(t) = 0` for
//! `t < T - 1`, and the terminal rows `-A phi_x(T-1) - B phi_u(T-1) = 0`.
//! That is `nx (T + 1)` rows by `(nx + nu) T` columns.
//!
//! The certificate holds when every column is feasible and
//! `rank(Z_h) = rank([Z_h H_1 ... Z_h H_nx])`, with `Z_h = I - Z_AB0^+ Z_AB0`
//! and `H_i = I - Z_h[R_i]^+ Z_h[R_i]`.

use serde::{Deserialize, Serialize};

use crate::constraints::{zero_indices, SupportPattern, ZeroIndexSet};
use crate::error::{Error, Result};
use crate::linalg::{rank_of, singular_values, Mat, SvdFactors, Tolerance, Vector};
use crate::model::LinearSystem;

#[derive(Clone, Debug)]
pub struct ZSystem {
    pub z_ab0: Mat,
    /// `Z_AB0^+ [I; 0]`, one particular closed-loop column per initial state.
    pub z_p: Mat,
    /// Orthogonal projector onto `ker Z_AB0`.
    pub z_h: Mat,
    /// Orthonormal basis `K` of `ker Z_AB0`, so `Z_h = K K^T`.
    pub kernel: Mat,
    /// `||Z_AB0 Z_p e_i - [e_i; 0]||` per column.
    pub residuals: Vec<f64>,
    nx: usize,
    nu: usize,
    horizon: usize,
    tol: Tolerance,
}

impl ZSystem {
    pub fn dims(&self) -> (usize, usize) {
        self.z_ab0.shape()
    }

    /// Length of one stacked column of `phi`.
    pub fn block_len(&self) -> usize {
        (self.nx + self.nu) * self.horizon
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Whether column `i` satisfies the dynamics and `x(T) = 0` without support constraints.
    pub fn column_feasible(&self, i: usize) -> bool {
        self.tol.is_feasible(self.residuals[i], 1.0)
    }

    /// Rows `R` of `Z_h`.
    pub fn z_h_rows(&self, rows: &[usize]) -> Mat {
        self.z_h.select_rows(rows)
    }
}

pub fn build_z(sys: &LinearSystem, tol: &Tolerance) -> ZSystem {
    let (nx, nu, t) = (sys.nx(), sys.nu(), sys.horizon());
    let n = (nx + nu) * t;
    let xi = |s: usize| s * nx;
    let ui = |s: usize| nx * t + s * nu;

    let mut z = Mat::zeros(nx * (t + 1), n);
    z.view_mut((0, xi(0)), (nx, nx)).fill_with_identity();
    for s in 0..t {
        let r = nx * (s + 1);
        if s + 1 < t {
            z.view_mut((r, xi(s + 1)), (nx, nx)).fill_with_identity();
        }
        z.view_mut((r, xi(s)), (nx, nx)).copy_from(&(-sys.a()));
        z.view_mut((r, ui(s)), (nx, nu)).copy_from(&(-sys.b()));
    }

    let mut rhs = Mat::zeros(nx * (t + 1), nx);
    rhs.view_mut((0, 0), (nx, nx)).fill_with_identity();

    let svd = SvdFactors::new(&z, tol);
    let z_p = svd.solve(&rhs);
    let kernel = svd.kernel();
    let z_h = &kernel * kernel.transpose();
    let fit = &z * &z_p - &rhs;
    let residuals = (0..nx).map(|i| fit.column(i).norm()).collect();
    ZSystem { z_ab0: z, z_p, z_h, kernel, residuals, nx, nu, horizon: t, tol: *tol }
}

/// `H_i = I - Z_h[R_i]^+ Z_h[R_i]`; `H_i = I` when `R_i` is empty.
pub fn h_blocks(z: &ZSystem, zr: &ZeroIndexSet) -> Result<Vec<Mat>> {
    check_layout(z, zr)?;
    let n = z.block_len();
    Ok(zr
        .per_column
        .iter()
        .map(|r| {
            if r.is_empty() {
                return Mat::identity(n, n);
            }
            let f = z.z_h_rows(r);
            Mat::identity(n, n) - SvdFactors::with_scale(&f, 1.0, &z.tol).pinv() * f
        })
        .collect())
}

fn check_layout(z: &ZSystem, zr: &ZeroIndexSet) -> Result<()> {
    if zr.block_len != z.block_len() || zr.per_column.len() != z.nx {
        return Err(Error::Dimension(format!(
            "zero-index set has {} columns of length {}, Z system has {} of length {}",
            zr.per_column.len(),
            zr.block_len,
            z.nx,
            z.block_len()
        )));
    }
    if let Some(&bad) = zr.per_column.iter().flatten().find(|&&k| k >= z.block_len()) {
        return Err(Error::Dimension(format!("zero index {bad} out of range")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    #[serde(rename = "rank_Zh")]
    pub rank_zh: usize,
    /// `None` when an infeasible column stopped the check early.
    #[serde(rename = "rank_ZhH")]
    pub rank_zhh: Option<usize>,
    pub feasible: bool,
    pub holds: bool,
    /// `rank(Z_h H_i)` per processed column.
    #[serde(skip)]
    pub free_dims: Vec<usize>,
}

/// Evaluates the certificate for many patterns of one system.
///
/// All work happens in coordinates of `K`: rows `R_i` of `Z_h` equal
/// `K[R_i] K^T`, so `range(Z_h H_i) = K ker(K[R_i])` and
/// `rank(Z_h H) = rank([ker K[R_1] ... ker K[R_nx]])`, a `k x sum(d_i)`
/// matrix with `k = rank(Z_h)`. Column feasibility asks whether
/// `(Z_p e_i)[R_i]` lies in `range(K[R_i])`.
#[derive(Clone, Debug)]
pub struct RankCertifier {
    z: ZSystem,
}

impl RankCertifier {
    pub fn new(sys: &LinearSystem, tol: &Tolerance) -> Self {
        Self { z: build_z(sys, tol) }
    }

    pub fn from_z(z: ZSystem) -> Self {
        Self { z }
    }

    pub fn z(&self) -> &ZSystem {
        &self.z
    }

    pub fn check(&self, p: &SupportPattern) -> Result<RankReport> {
        let z = &self.z;
        if (p.nx(), p.nu(), p.horizon()) != (z.nx, z.nu, z.horizon) {
            return Err(Error::Dimension("pattern does not match the system dimensions".into()));
        }
        let zr = zero_indices(p);
        let k = z.kernel.ncols();
        let tol = &z.tol;

        let mut free_dims = Vec::with_capacity(z.nx);
        let mut blocks: Vec<Mat> = Vec::new();
        for (i, r) in zr.per_column.iter().enumerate() {
            let mut feasible = z.column_feasible(i);
            if feasible && r.is_empty() {
                free_dims.push(k);
            } else if feasible {
                let kr = z.kernel.select_rows(r);
                // rows of an orthonormal basis: norm at most one
                let svd = SvdFactors::with_scale(&kr, 1.0, tol);
                let target = -z.z_p.column(i).select_rows(r);
                let target = Mat::from_column_slice(target.len(), 1, target.as_slice());
                let residual = svd.residual(&target);
                feasible = tol.is_feasible(residual, target.norm());
                let basis = svd.kernel();
                free_dims.push(basis.ncols());
                blocks.push(basis);
            }
            if !feasible {
                return Ok(RankReport { rank_zh: k, rank_zhh: None, feasible: false, holds: false, free_dims });
            }
        }

        // An empty R_i contributes all of K.
        let rank_zhh = if free_dims.contains(&k) {
            k
        } else {
            let total: usize = blocks.iter().map(Mat::ncols).sum();
            let mut cat = Mat::zeros(k, total);
            let mut off = 0;
            for b in &blocks {
                cat.columns_mut(off, b.ncols()).copy_from(b);
                off += b.ncols();
            }
            rank_of(&cat, tol)
        };
        Ok(RankReport { rank_zh: k, rank_zhh: Some(rank_zhh), feasible: true, holds: rank_zhh == k, free_dims })
    }
}

pub fn rank_condition(sys: &LinearSystem, p: &SupportPattern, tol: &Tolerance) -> Result<RankReport> {
    RankCertifier::new(sys, tol).check(p)
}

/// `(rank Z_h, rank [Z_h H_1 ... Z_h H_nx])` from the explicitly formed blocks.
/// Quadratic in memory; meant for small systems and cross-checks.
pub fn dense_ranks(z: &ZSystem, zr: &ZeroIndexSet) -> Result<(usize, usize)> {
    let h = h_blocks(z, zr)?;
    Ok((dim_s(z), rank_at_scale(&hcat(h.iter().map(|hi| &z.z_h * hi)), 1.0, &z.tol)))
}

/// Dimension of the unconstrained trajectory set, `rank Z_h`.
pub fn dim_s(z: &ZSystem) -> usize {
    rank_of(&z.z_h, &z.tol)
}

/// Dimension of the constrained trajectory set for `x0`,
/// `rank([x0[1] Z_h H_1 ... x0[nx] Z_h H_nx])`.
pub fn dim_t(z: &ZSystem, zr: &ZeroIndexSet, x0: &Vector) -> Result<usize> {
    if x0.len() != z.nx {
        return Err(Error::Dimension(format!("x0 has length {}, expected {}", x0.len(), z.nx)));
    }
    let h = h_blocks(z, zr)?;
    let scale = x0.amax();
    Ok(rank_at_scale(&hcat(h.iter().zip(x0.iter()).map(|(hi, &w)| (&z.z_h * hi) * w)), scale, &z.tol))
}

/// Rank with the cutoff taken relative to `scale` instead of the largest
/// singular value. Products of projectors have norm at most one, and when
/// they vanish in exact arithmetic the computed product is pure rounding
/// noise, which a relative cutoff would count as full rank.
fn rank_at_scale(m: &Mat, scale: f64, tol: &Tolerance) -> usize {
    let cut = tol.cutoff(scale, m.nrows(), m.ncols());
    singular_values(m).iter().filter(|&&s| s > cut).count()
}

fn hcat(blocks: impl Iterator<Item = Mat>) -> Mat {
    let blocks: Vec<Mat> = blocks.collect();
    let rows = blocks.first().map_or(0, Mat::nrows);
    let cols = blocks.iter().map(Mat::ncols).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut off = 0;
    for b in &blocks {
        out.columns_mut(off, b.ncols()).copy_from(b);
        off += b.ncols();
    }
    out
}
