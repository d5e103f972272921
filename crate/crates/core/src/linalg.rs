//! Dense linear-algebra kernel.
//!
//! Every rank, kernel and pseudoinverse decision in the crate goes through a
//! single singular-value cutoff: `sigma_max * rank_rtol * max(rows, cols)`.
//! Determinants are accumulated in log space from singular values.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Numerical thresholds shared by every module.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    /// Relative singular-value threshold for rank and kernel decisions.
    pub rank_rtol: f64,
    /// Absolute residual threshold for feasibility of linear constraints.
    pub feas_atol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { rank_rtol: 1e-10, feas_atol: 1e-8 }
    }
}

impl Tolerance {
    pub fn new(rank_rtol: f64, feas_atol: f64) -> Result<Self> {
        if !(rank_rtol > 0.0 && rank_rtol.is_finite()) {
            return Err(Error::InvalidParameter(format!("rank_rtol must be positive, got {rank_rtol}")));
        }
        if !(feas_atol > 0.0 && feas_atol.is_finite()) {
            return Err(Error::InvalidParameter(format!("feas_atol must be positive, got {feas_atol}")));
        }
        Ok(Self { rank_rtol, feas_atol })
    }

    /// Singular values at or below this value are treated as zero.
    pub fn cutoff(&self, sigma_max: f64, rows: usize, cols: usize) -> f64 {
        sigma_max * self.rank_rtol * rows.max(cols) as f64
    }

    /// Whether a least-squares residual counts as an exact solution for a
    /// right-hand side of the given norm.
    pub fn is_feasible(&self, residual: f64, rhs_norm: f64) -> bool {
        residual <= self.feas_atol * rhs_norm.max(1.0)
    }
}

/// Builds a matrix from row-major data, rejecting wrong lengths and non-finite entries.
pub fn mat_from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Mat> {
    if data.len() != rows * cols {
        return Err(Error::Shape { rows, cols, len: data.len() });
    }
    ensure_finite(Mat::from_row_slice(rows, cols, data))
}

/// Builds a matrix from nested rows. An empty outer slice gives a 0x0 matrix.
pub fn mat_from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let cols = rows.first().map_or(0, Vec::len);
    for (row, r) in rows.iter().enumerate() {
        if r.len() != cols {
            return Err(Error::Ragged { row, expected: cols, found: r.len() });
        }
    }
    let data: Vec<f64> = rows.iter().flatten().copied().collect();
    mat_from_row_slice(rows.len(), cols, &data)
}

pub fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn ensure_finite(m: Mat) -> Result<Mat> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(m)
}

/// Log-determinant that may be minus infinity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LogDet {
    Finite(f64),
    Singular,
}

impl LogDet {
    pub fn value(self) -> f64 {
        match self {
            LogDet::Finite(v) => v,
            LogDet::Singular => f64::NEG_INFINITY,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            LogDet::Finite(v) => Some(v),
            LogDet::Singular => None,
        }
    }

    pub fn is_singular(self) -> bool {
        matches!(self, LogDet::Singular)
    }
}

/// Singular value decomposition `m = U diag(s) V^T` with a complete set of
/// right singular vectors, so the kernel is available for wide matrices too.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    /// `rows x p` with `p = min(rows, cols)`.
    pub u: Mat,
    /// Nonincreasing, nonnegative, length `p`.
    pub singular_values: Vec<f64>,
    /// `cols x cols`, orthogonal.
    pub v: Mat,
    rows: usize,
    cols: usize,
    cutoff: f64,
}

impl SvdFactors {
    pub fn new(m: &Mat, tol: &Tolerance) -> Self {
        let (rows, cols) = m.shape();
        let p = rows.min(cols);
        if p == 0 {
            return Self {
                u: Mat::zeros(rows, 0),
                singular_values: Vec::new(),
                v: Mat::identity(cols, cols),
                rows,
                cols,
                cutoff: 0.0,
            };
        }
        let (u, singular_values, v) = gesvd(m, Factors::Both);
        let cutoff = tol.cutoff(singular_values[0], rows, cols);
        Self { u, singular_values, v, rows, cols, cutoff }
    }

    /// Like [`SvdFactors::new`], but the cutoff is relative to `scale`, a
    /// known bound on the norm of `m`. Use it when `m` may vanish in exact
    /// arithmetic, e.g. a row block of an orthonormal basis.
    pub fn with_scale(m: &Mat, scale: f64, tol: &Tolerance) -> Self {
        let mut svd = Self::new(m, tol);
        svd.cutoff = tol.cutoff(scale, svd.rows, svd.cols);
        svd
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn rank(&self) -> usize {
        self.singular_values.iter().take_while(|&&s| s > self.cutoff).count()
    }

    /// Orthonormal basis of the kernel, `cols x (cols - rank)`.
    pub fn kernel(&self) -> Mat {
        let r = self.rank();
        self.v.columns(r, self.cols - r).into_owned()
    }

    /// Orthonormal basis of the range, `rows x rank`.
    pub fn range(&self) -> Mat {
        self.u.columns(0, self.rank()).into_owned()
    }

    pub fn pinv(&self) -> Mat {
        let r = self.rank();
        let mut vs = self.v.columns(0, r).into_owned();
        for (j, s) in self.singular_values.iter().take(r).enumerate() {
            vs.column_mut(j).scale_mut(1.0 / s);
        }
        vs * self.u.columns(0, r).transpose()
    }

    /// Minimum-norm least-squares solution `m^+ b`.
    pub fn solve(&self, b: &Mat) -> Mat {
        let r = self.rank();
        let mut coeffs = self.u.columns(0, r).tr_mul(b);
        for (j, s) in self.singular_values.iter().take(r).enumerate() {
            coeffs.row_mut(j).scale_mut(1.0 / s);
        }
        self.v.columns(0, r) * coeffs
    }

    /// `||(I - U_r U_r^T) b||_F`, the least-squares residual of `m x = b`.
    pub fn residual(&self, b: &Mat) -> f64 {
        let ur = self.u.columns(0, self.rank());
        let proj = ur * ur.tr_mul(b);
        (b - proj).norm()
    }
}

/// Singular values only, sorted nonincreasing.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    gesvd(m, Factors::None).1
}

/// Orthonormal basis of the column space of `m`, `rows x rank`.
pub fn range_basis(m: &Mat, tol: &Tolerance) -> Mat {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Mat::zeros(rows, 0);
    }
    let (u, s, _) = gesvd(m, Factors::Left);
    let cut = tol.cutoff(s[0], rows, cols);
    let r = s.iter().take_while(|&&x| x > cut).count();
    u.columns(0, r).into_owned()
}

// Provides the symbols behind the `lapack` bindings.
#[link(name = "lapack")]
extern "C" {}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Factors {
    None,
    Left,
    Both,
}

/// LAPACK `dgesvd`: thin `U` (`rows x p`), singular values and the full
/// `cols x cols` right factor. Factors that were not requested come back empty.
fn gesvd(m: &Mat, want: Factors) -> (Mat, Vec<f64>, Mat) {
    let (rows, cols) = m.shape();
    let p = rows.min(cols);
    let jobu = if want == Factors::None { b'N' } else { b'S' };
    let jobvt = if want == Factors::Both { b'A' } else { b'N' };
    let (ldu, ucols) = if jobu == b'S' { (rows, p) } else { (1, 1) };
    let ldvt = if jobvt == b'A' { cols } else { 1 };
    let mut a = m.as_slice().to_vec();
    let mut s = vec![0.0; p];
    let mut u = vec![0.0; ldu * ucols];
    let mut vt = vec![0.0; ldvt * ldvt];
    let mut info = 0;
    let mut query = [0.0];
    let (mi, ni) = (rows as i32, cols as i32);
    // SAFETY: every buffer is sized for the leading dimensions passed, and
    // `a` holds `m` in column-major order as LAPACK expects.
    unsafe {
        lapack::dgesvd(
            jobu, jobvt, mi, ni, &mut a, mi, &mut s, &mut u, ldu as i32, &mut vt, ldvt as i32, &mut query, -1,
            &mut info,
        );
    }
    let lwork = query[0] as usize;
    let mut work = vec![0.0; lwork.max(1)];
    unsafe {
        lapack::dgesvd(
            jobu, jobvt, mi, ni, &mut a, mi, &mut s, &mut u, ldu as i32, &mut vt, ldvt as i32, &mut work,
            lwork as i32, &mut info,
        );
    }
    assert!(info >= 0, "dgesvd: illegal argument {}", -info);
    assert!(info == 0, "dgesvd: {info} superdiagonals failed to converge");
    for x in &mut s {
        *x = x.max(0.0);
    }
    let u = if jobu == b'S' { Mat::from_vec(rows, p, u) } else { Mat::zeros(rows, 0) };
    let v = if jobvt == b'A' { Mat::from_vec(cols, cols, vt).transpose() } else { Mat::zeros(cols, 0) };
    (u, s, v)
}

/// Moore-Penrose pseudoinverse.
pub fn pinv(m: &Mat, tol: &Tolerance) -> Mat {
    SvdFactors::new(m, tol).pinv()
}

/// Orthonormal basis of `ker(m)`; zero columns when the kernel is trivial.
pub fn nullspace_basis(m: &Mat, tol: &Tolerance) -> Mat {
    SvdFactors::new(m, tol).kernel()
}

pub fn rank_of(m: &Mat, tol: &Tolerance) -> usize {
    let s = singular_values(m);
    match s.first() {
        None => 0,
        Some(&smax) => {
            let cut = tol.cutoff(smax, m.nrows(), m.ncols());
            s.iter().take_while(|&&x| x > cut).count()
        }
    }
}

/// `log det(m^T m)` as `2 * sum(log sigma_j)` over all `cols` singular values.
pub fn logdet_gram(m: &Mat, tol: &Tolerance) -> LogDet {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return LogDet::Finite(0.0);
    }
    if rows < cols {
        return LogDet::Singular;
    }
    let s = singular_values(m);
    let cut = tol.cutoff(s[0], rows, cols);
    if s.iter().any(|&x| x <= cut) {
        return LogDet::Singular;
    }
    LogDet::Finite(2.0 * s.iter().map(|x| x.ln()).sum::<f64>())
}

/// `log det(w)` for a symmetric positive semidefinite `w`.
pub fn logdet_psd(w: &Mat, tol: &Tolerance) -> LogDet {
    let n = w.nrows();
    if n == 0 {
        return LogDet::Finite(0.0);
    }
    let s = singular_values(w);
    let cut = tol.cutoff(s[0], n, n);
    if s.iter().any(|&x| x <= cut) {
        return LogDet::Singular;
    }
    LogDet::Finite(s.iter().map(|x| x.ln()).sum())
}

/// Minimum-norm least-squares solution `a^+ b` and the residual `||a x - b||_F`.
pub fn solve_lstsq(a: &Mat, b: &Mat, tol: &Tolerance) -> Result<(Mat, f64)> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "lstsq: a has {} rows, b has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let svd = SvdFactors::new(a, tol);
    let x = svd.solve(b);
    let residual = (a * &x - b).norm();
    Ok((x, residual))
}

/// Symmetrizes in place as `(m + m^T) / 2`.
pub fn symmetrize(m: &mut Mat) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}
