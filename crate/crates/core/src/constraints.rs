//! Support constraints on the closed-loop maps and the per-column linear
//! systems they induce.
//!
//! Layout conventions used throughout:
//! * `phi_x(t)` is `nx x nx`, `phi_u(t)` is `nu x nx`, `t = 0..T`, and column `i`
//!   of each is the response to `x0[i]`.
//! * The unknown of column `i` is `Phi_i = [phi_u(0)[:, i]; ...; phi_u(T-1)[:, i]]`.
//! * The stacked column of `phi` is `[phi_x(0..T)[:, i]; phi_u(0..T)[:, i]]`, of
//!   length `(nx + nu) T`; `vec(phi)` stacks these columns for `i = 0..nx`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::{check_permutation, graph_distance, graph_of, DistanceTable, LinearSystem};

/// Delay, communication speed and locality radius. `None` disables a family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub tau: usize,
    #[serde(with = "unbounded")]
    pub speed: Option<f64>,
    #[serde(with = "unbounded")]
    pub radius: Option<usize>,
}

impl ConstraintSpec {
    pub const UNCONSTRAINED: Self = Self { tau: 0, speed: None, radius: None };

    pub fn new(tau: usize, speed: Option<f64>, radius: Option<usize>) -> Result<Self> {
        if let Some(v) = speed {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::InvalidParameter(format!("speed must be positive, got {v}")));
            }
        }
        Ok(Self { tau, speed: speed.filter(|v| v.is_finite()), radius })
    }

    pub fn delay(tau: usize) -> Self {
        Self { tau, ..Self::UNCONSTRAINED }
    }

    pub fn speed(v: f64) -> Self {
        Self { speed: Some(v), ..Self::UNCONSTRAINED }
    }

    pub fn locality(r: usize) -> Self {
        Self { radius: Some(r), ..Self::UNCONSTRAINED }
    }
}

/// Serializes `None` as the string `"inf"`.
mod unbounded {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr<T> {
        Value(T),
        Inf(String),
    }

    pub fn serialize<T: Serialize + Copy, S: Serializer>(v: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => x.serialize(s),
            None => s.serialize_str("inf"),
        }
    }

    pub fn deserialize<'de, T: Deserialize<'de>, D: Deserializer<'de>>(d: D) -> Result<Option<T>, D::Error> {
        match Repr::<T>::deserialize(d)? {
            Repr::Value(x) => Ok(Some(x)),
            Repr::Inf(s) if s == "inf" => Ok(None),
            Repr::Inf(s) => Err(serde::de::Error::custom(format!("expected number or \"inf\", got {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Provenance {
    Families(ConstraintSpec),
    Custom,
}

/// Boolean matrix, `true` where an entry is allowed to be nonzero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn full(rows: usize, cols: usize) -> Self {
        Self { rows, cols, bits: vec![true; rows * cols] }
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self { rows, cols, bits: vec![false; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        Self { rows, cols, bits: (0..rows * cols).map(|k| f(k / cols, k % cols)).collect() }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn allows(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, allowed: bool) {
        self.bits[r * self.cols + c] = allowed;
    }

    pub fn allowed_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    fn and(&self, other: &Self) -> Self {
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect();
        Self { rows: self.rows, cols: self.cols, bits }
    }

    fn is_subset_of(&self, other: &Self) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }
}

/// Per-time support masks of `phi_x(t)` and `phi_u(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportPattern {
    nx: usize,
    nu: usize,
    phi_x: Vec<Mask>,
    phi_u: Vec<Mask>,
    provenance: Provenance,
}

impl SupportPattern {
    pub fn unconstrained(sys: &LinearSystem) -> Self {
        let (nx, nu, t) = (sys.nx(), sys.nu(), sys.horizon());
        Self {
            nx,
            nu,
            phi_x: vec![Mask::full(nx, nx); t],
            phi_u: vec![Mask::full(nu, nx); t],
            provenance: Provenance::Families(ConstraintSpec::UNCONSTRAINED),
        }
    }

    /// Explicit masks, one per time step. Fails with
    /// [`Error::InfeasiblePattern`] if `phi_x(0)` excludes part of the diagonal.
    pub fn from_masks(sys: &LinearSystem, phi_x: Vec<Mask>, phi_u: Vec<Mask>) -> Result<Self> {
        let (nx, nu, t) = (sys.nx(), sys.nu(), sys.horizon());
        if phi_x.len() != t || phi_u.len() != t {
            return Err(Error::Dimension(format!(
                "expected {t} masks per map, got {} for phi_x and {} for phi_u",
                phi_x.len(),
                phi_u.len()
            )));
        }
        if let Some(m) = phi_x.iter().find(|m| m.shape() != (nx, nx)) {
            return Err(Error::Dimension(format!("phi_x mask is {:?}, expected ({nx}, {nx})", m.shape())));
        }
        if let Some(m) = phi_u.iter().find(|m| m.shape() != (nu, nx)) {
            return Err(Error::Dimension(format!("phi_u mask is {:?}, expected ({nu}, {nx})", m.shape())));
        }
        let p = Self { nx, nu, phi_x, phi_u, provenance: Provenance::Custom };
        p.check_initial()?;
        Ok(p)
    }

    fn check_initial(&self) -> Result<()> {
        match (0..self.nx).find(|&i| !self.phi_x[0].allows(i, i)) {
            Some(state) => Err(Error::InfeasiblePattern { state }),
            None => Ok(()),
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn horizon(&self) -> usize {
        self.phi_x.len()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn phi_x(&self, t: usize) -> &Mask {
        &self.phi_x[t]
    }

    pub fn phi_u(&self, t: usize) -> &Mask {
        &self.phi_u[t]
    }

    pub fn allows_x(&self, t: usize, j: usize, i: usize) -> bool {
        self.phi_x[t].allows(j, i)
    }

    pub fn allows_u(&self, t: usize, k: usize, i: usize) -> bool {
        self.phi_u[t].allows(k, i)
    }

    pub fn is_unconstrained(&self) -> bool {
        self.phi_x.iter().chain(&self.phi_u).all(|m| m.bits.iter().all(|&b| b))
    }

    /// Entry-wise intersection of the allowed sets.
    pub fn intersect(&self, other: &Self) -> Result<Self> {
        if (self.nx, self.nu, self.horizon()) != (other.nx, other.nu, other.horizon()) {
            return Err(Error::Dimension("cannot intersect patterns of different shapes".into()));
        }
        let zip = |a: &[Mask], b: &[Mask]| a.iter().zip(b).map(|(x, y)| x.and(y)).collect();
        Ok(Self {
            nx: self.nx,
            nu: self.nu,
            phi_x: zip(&self.phi_x, &other.phi_x),
            phi_u: zip(&self.phi_u, &other.phi_u),
            provenance: Provenance::Custom,
        })
    }

    /// Same allowed entries, regardless of provenance.
    pub fn same_support(&self, other: &Self) -> bool {
        self.phi_x == other.phi_x && self.phi_u == other.phi_u
    }

    /// Every entry allowed here is allowed in `other`.
    pub fn is_refinement_of(&self, other: &Self) -> bool {
        self.phi_x.iter().zip(&other.phi_x).all(|(a, b)| a.is_subset_of(b))
            && self.phi_u.iter().zip(&other.phi_u).all(|(a, b)| a.is_subset_of(b))
    }

    /// Relabels states consistently with [`LinearSystem::permute_states`].
    pub fn permute_states(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.nx)?;
        let phi_x = self
            .phi_x
            .iter()
            .map(|m| Mask::from_fn(self.nx, self.nx, |j, i| m.allows(perm[j], perm[i])))
            .collect();
        let phi_u = self
            .phi_u
            .iter()
            .map(|m| Mask::from_fn(self.nu, self.nx, |k, i| m.allows(k, perm[i])))
            .collect();
        Ok(Self { nx: self.nx, nu: self.nu, phi_x, phi_u, provenance: self.provenance })
    }

    /// Number of masked `phi_x` and `phi_u` entries in column `i`.
    pub fn masked_in_column(&self, i: usize) -> usize {
        let x = self.phi_x.iter().map(|m| (0..self.nx).filter(|&j| !m.allows(j, i)).count());
        let u = self.phi_u.iter().map(|m| (0..self.nu).filter(|&k| !m.allows(k, i)).count());
        x.sum::<usize>() + u.sum::<usize>()
    }
}

/// `phi_u(t) = 0` for `t < tau`.
pub fn delay_pattern(sys: &LinearSystem, tau: usize) -> SupportPattern {
    let mut p = SupportPattern::unconstrained(sys);
    for m in p.phi_u.iter_mut().take(tau) {
        *m = Mask::empty(sys.nu(), sys.nx());
    }
    p.provenance = Provenance::Families(ConstraintSpec::delay(tau));
    p
}

/// `phi_x(t)[j, i]` allowed iff `dist(j, i) <= floor(v t)`.
pub fn speed_pattern(sys: &LinearSystem, v: f64) -> Result<SupportPattern> {
    let spec = ConstraintSpec::new(0, Some(v), None)?;
    let dist = graph_distance(&graph_of(sys));
    let phi_x = (0..sys.horizon())
        .map(|t| {
            let reach = (v * t as f64).floor();
            let bound = if reach >= sys.nx() as f64 { sys.nx() } else { reach as usize };
            distance_mask(&dist, bound)
        })
        .collect();
    Ok(derived_pattern(sys, phi_x, spec))
}

/// `phi_x(t)[j, i]` allowed iff `dist(j, i) <= r`, for every `t`.
pub fn locality_pattern(sys: &LinearSystem, r: usize) -> SupportPattern {
    let dist = graph_distance(&graph_of(sys));
    let m = distance_mask(&dist, r);
    derived_pattern(sys, vec![m; sys.horizon()], ConstraintSpec::locality(r))
}

fn distance_mask(dist: &DistanceTable, bound: usize) -> Mask {
    let n = dist.node_count();
    Mask::from_fn(n, n, |j, i| dist.within(j, i, bound))
}

/// Completes state masks with `supp(phi_u(t)) = supp(|B^T| supp(phi_x(t)))`.
fn derived_pattern(sys: &LinearSystem, phi_x: Vec<Mask>, spec: ConstraintSpec) -> SupportPattern {
    let (nx, nu) = (sys.nx(), sys.nu());
    let b = sys.b();
    let phi_u = phi_x
        .iter()
        .map(|mx| Mask::from_fn(nu, nx, |k, i| (0..nx).any(|j| b[(j, k)] != 0.0 && mx.allows(j, i))))
        .collect();
    SupportPattern { nx, nu, phi_x, phi_u, provenance: Provenance::Families(spec) }
}

/// Intersection of the delay, speed and locality patterns; inactive families
/// contribute nothing.
pub fn pattern_from(sys: &LinearSystem, spec: ConstraintSpec) -> Result<SupportPattern> {
    let spec = ConstraintSpec::new(spec.tau, spec.speed, spec.radius)?;
    let mut p = delay_pattern(sys, spec.tau);
    if let Some(v) = spec.speed {
        p = p.intersect(&speed_pattern(sys, v)?)?;
    }
    if let Some(r) = spec.radius {
        p = p.intersect(&locality_pattern(sys, r))?;
    }
    p.check_initial()?;
    p.provenance = Provenance::Families(spec);
    Ok(p)
}

/// Linear constraints `S_i Phi_i + C_i = 0` on column `i` of `phi_u`.
#[derive(Clone, Debug)]
pub struct ColumnConstraint {
    pub column: usize,
    pub s: Mat,
    pub c: Vector,
}

/// Matrix powers shared by all columns of one system.
#[derive(Clone, Debug)]
pub struct Rollout {
    /// `A^t` for `t = 0..=T`.
    a_pow: Vec<Mat>,
    /// `A^m B` for `m = 0..T`.
    a_pow_b: Vec<Mat>,
    nx: usize,
    nu: usize,
    horizon: usize,
}

impl Rollout {
    pub fn new(sys: &LinearSystem) -> Self {
        let t = sys.horizon();
        let mut a_pow = Vec::with_capacity(t + 1);
        a_pow.push(Mat::identity(sys.nx(), sys.nx()));
        for k in 0..t {
            a_pow.push(sys.a() * &a_pow[k]);
        }
        let a_pow_b = a_pow[..t].iter().map(|p| p * sys.b()).collect();
        Self { a_pow, a_pow_b, nx: sys.nx(), nu: sys.nu(), horizon: t }
    }

    pub fn a_pow(&self, t: usize) -> &Mat {
        &self.a_pow[t]
    }

    /// `D = [A^{T-1} B ... A B  B]`, the map from stacked inputs to `x(T)`.
    pub fn terminal_map(&self) -> Mat {
        let (t, nu) = (self.horizon, self.nu);
        let mut d = Mat::zeros(self.nx, t * nu);
        for s in 0..t {
            d.columns_mut(s * nu, nu).copy_from(&self.a_pow_b[t - 1 - s]);
        }
        d
    }

    /// Row `j` of the map `Phi_i -> phi_x(t)[:, i]`, written into `row`.
    fn state_row(&self, t: usize, j: usize, row: &mut [f64]) {
        let nu = self.nu;
        for s in 0..t {
            let p = &self.a_pow_b[t - 1 - s];
            for k in 0..nu {
                row[s * nu + k] = p[(j, k)];
            }
        }
    }

    /// Rows are emitted in order: masked `phi_u` entries, masked `phi_x(t)`
    /// entries for `t >= 1`, then the `nx` terminal rows `x(T) = 0`.
    /// Masked off-diagonal entries of `phi_x(0)` are identically zero and
    /// produce no row.
    pub fn column_constraint(&self, p: &SupportPattern, i: usize) -> ColumnConstraint {
        let (nx, nu, t) = (self.nx, self.nu, self.horizon);
        let width = t * nu;
        let mut rows: Vec<f64> = Vec::new();
        let mut c: Vec<f64> = Vec::new();

        for s in 0..t {
            for k in 0..nu {
                if !p.allows_u(s, k, i) {
                    let mut row = vec![0.0; width];
                    row[s * nu + k] = 1.0;
                    rows.extend(row);
                    c.push(0.0);
                }
            }
        }
        let mut row = vec![0.0; width];
        for s in 1..t {
            for j in 0..nx {
                if !p.allows_x(s, j, i) {
                    row.fill(0.0);
                    self.state_row(s, j, &mut row);
                    rows.extend_from_slice(&row);
                    c.push(self.a_pow[s][(j, i)]);
                }
            }
        }
        for j in 0..nx {
            row.fill(0.0);
            self.state_row(t, j, &mut row);
            rows.extend_from_slice(&row);
            c.push(self.a_pow[t][(j, i)]);
        }
        let m = c.len();
        ColumnConstraint { column: i, s: Mat::from_row_slice(m, width, &rows), c: Vector::from_vec(c) }
    }

    /// Simulates `phi_x(t+1)[:, i] = A phi_x(t)[:, i] + B phi_u(t)[:, i]` from
    /// `phi_x(0)[:, i] = e_i`, returning `T + 1` state columns.
    pub fn simulate_column(&self, a: &Mat, b: &Mat, i: usize, phi_i: &Vector) -> Vec<Vector> {
        let mut x = Vector::zeros(self.nx);
        x[i] = 1.0;
        let mut traj = vec![x.clone()];
        for s in 0..self.horizon {
            let u = phi_i.rows(s * self.nu, self.nu);
            x = a * &x + b * u;
            traj.push(x.clone());
        }
        traj
    }
}

pub fn column_constraints(sys: &LinearSystem, p: &SupportPattern, i: usize) -> ColumnConstraint {
    Rollout::new(sys).column_constraint(p, i)
}

/// Indices of entries of `vec(phi)` constrained to zero, grouped by column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ZeroIndexSet {
    /// Length of one stacked column, `(nx + nu) T`.
    pub block_len: usize,
    /// `per_column[i]` holds sorted positions within the stacked column `i`.
    pub per_column: Vec<Vec<usize>>,
}

impl ZeroIndexSet {
    pub fn is_empty(&self) -> bool {
        self.per_column.iter().all(Vec::is_empty)
    }

    pub fn len(&self) -> usize {
        self.per_column.iter().map(Vec::len).sum()
    }

    /// The sorted global index set `R` into `vec(phi)`.
    pub fn global(&self) -> Vec<usize> {
        self.per_column
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |&k| i * self.block_len + k))
            .collect()
    }
}

pub fn zero_indices(p: &SupportPattern) -> ZeroIndexSet {
    let (nx, nu, t) = (p.nx, p.nu, p.horizon());
    let per_column = (0..nx)
        .map(|i| {
            let mut r = Vec::new();
            for s in 0..t {
                r.extend((0..nx).filter(|&j| !p.allows_x(s, j, i)).map(|j| s * nx + j));
            }
            for s in 0..t {
                r.extend((0..nu).filter(|&k| !p.allows_u(s, k, i)).map(|k| nx * t + s * nu + k));
            }
            r
        })
        .collect();
    ZeroIndexSet { block_len: (nx + nu) * t, per_column }
}
