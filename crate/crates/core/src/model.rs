//! Linear systems, their interaction graphs, and the two experiment families
//! (swing-equation grids and stochastic chains).

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, Mat};

/// Discrete-time system `x(t+1) = A x(t) + B u(t)`, `y(t) = C x(t)` analysed over horizon `T`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSystem {
    a: Mat,
    b: Mat,
    c: Mat,
    horizon: usize,
}

impl LinearSystem {
    /// `c = None` defaults to the identity output map.
    pub fn new(a: Mat, b: Mat, c: Option<Mat>, horizon: usize) -> Result<Self> {
        let nx = a.nrows();
        if a.ncols() != nx {
            return Err(Error::Dimension(format!("A must be square, got {}x{}", nx, a.ncols())));
        }
        if nx == 0 {
            return Err(Error::Dimension("state dimension must be positive".into()));
        }
        if b.nrows() != nx {
            return Err(Error::Dimension(format!("B has {} rows, A has {}", b.nrows(), nx)));
        }
        let c = c.unwrap_or_else(|| Mat::identity(nx, nx));
        if c.ncols() != nx {
            return Err(Error::Dimension(format!("C has {} columns, A has {}", c.ncols(), nx)));
        }
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon T must be at least 1".into()));
        }
        Ok(Self { a: ensure_finite(a)?, b: ensure_finite(b)?, c: ensure_finite(c)?, horizon })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn c(&self) -> &Mat {
        &self.c
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    pub fn ny(&self) -> usize {
        self.c.nrows()
    }

    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), Some(self.c.clone()), horizon)
    }

    /// The estimation dual `(A^T, C^T)` with output map `B^T`, so that
    /// `sys.dual().dual() == sys`.
    pub fn dual(&self) -> Self {
        Self {
            a: self.a.transpose(),
            b: self.c.transpose(),
            c: self.b.transpose(),
            horizon: self.horizon,
        }
    }

    /// Relabels states: new state `k` is old state `perm[k]`.
    pub fn permute_states(&self, perm: &[usize]) -> Result<Self> {
        let n = self.nx();
        check_permutation(perm, n)?;
        let a = Mat::from_fn(n, n, |i, j| self.a[(perm[i], perm[j])]);
        let b = Mat::from_fn(n, self.nu(), |i, k| self.b[(perm[i], k)]);
        let c = Mat::from_fn(self.ny(), n, |k, j| self.c[(k, perm[j])]);
        Self::new(a, b, Some(c), self.horizon)
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::InvalidParameter(format!("not a permutation of 0..{n}")));
    }
    Ok(())
}

/// Directed interaction graph: edge `i -> j` iff `A[i, j] != 0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    adj: Vec<bool>,
}

impl Graph {
    pub fn from_adjacency(n: usize, adj: Vec<bool>) -> Result<Self> {
        if adj.len() != n * n {
            return Err(Error::Dimension(format!("adjacency has {} entries for {n} nodes", adj.len())));
        }
        Ok(Self { n, adj })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j]
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|&&e| e).count()
    }
}

/// Adjacency of the nonzero pattern of `A`. Structural zeros are exact, so
/// the test is an exact comparison.
pub fn graph_of(sys: &LinearSystem) -> Graph {
    let n = sys.nx();
    let a = sys.a();
    let adj = (0..n * n).map(|k| a[(k / n, k % n)] != 0.0).collect();
    Graph { n, adj }
}

/// All-pairs directed hop distances. `get(i, j)` is the length of the
/// shortest walk `i -> ... -> j` along graph edges; `None` when unreachable.
///
/// Since `(A^t)[j, i] != 0` requires a walk of length `t` from `j` to `i`,
/// the influence of `x0[i]` on `x(t)[j]` is bounded by `get(j, i)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceTable {
    n: usize,
    dist: Vec<usize>,
}

impl DistanceTable {
    pub const UNREACHABLE: usize = usize::MAX;

    pub fn get(&self, i: usize, j: usize) -> Option<usize> {
        match self.dist[i * self.n + j] {
            Self::UNREACHABLE => None,
            d => Some(d),
        }
    }

    /// Whether `get(i, j) <= bound`.
    pub fn within(&self, i: usize, j: usize, bound: usize) -> bool {
        let d = self.dist[i * self.n + j];
        d != Self::UNREACHABLE && d <= bound
    }

    pub fn node_count(&self) -> usize {
        self.n
    }
}

pub fn graph_distance(g: &Graph) -> DistanceTable {
    let n = g.n;
    let mut dist = vec![DistanceTable::UNREACHABLE; n * n];
    let mut queue = VecDeque::with_capacity(n);
    for src in 0..n {
        let row = &mut dist[src * n..(src + 1) * n];
        row[src] = 0;
        queue.clear();
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let du = row[u];
            for (v, d) in row.iter_mut().enumerate() {
                if g.has_edge(u, v) && *d == DistanceTable::UNREACHABLE {
                    *d = du + 1;
                    queue.push_back(v);
                }
            }
        }
    }
    DistanceTable { n, dist }
}

/// Parameters of a grid of linearized, discretized swing-equation generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwingGridSpec {
    pub rows: usize,
    pub cols: usize,
    /// Discretization step in seconds.
    pub dt: f64,
    /// Line coupling `k_ij`.
    pub coupling: (f64, f64),
    /// Inverse inertia `1 / m_i`.
    pub inv_inertia: (f64, f64),
    /// Damping `d_i`.
    pub damping: (f64, f64),
    pub horizon: usize,
    pub seed: u64,
}

impl Default for SwingGridSpec {
    fn default() -> Self {
        Self {
            rows: 3,
            cols: 3,
            dt: 0.1,
            coupling: (0.5, 1.0),
            inv_inertia: (0.0, 2.0),
            damping: (1.0, 1.5),
            horizon: 12,
            seed: 0,
        }
    }
}

impl SwingGridSpec {
    fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidParameter("swing grid needs at least one node".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        for (name, (lo, hi)) in [
            ("coupling", self.coupling),
            ("inv_inertia", self.inv_inertia),
            ("damping", self.damping),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidParameter(format!("{name} range [{lo}, {hi}] is empty")));
            }
        }
        Ok(())
    }

    /// Undirected 4-neighbour grid edges `(i, j)`, `i < j`, nodes numbered row-major.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let i = r * self.cols + c;
                if c + 1 < self.cols {
                    edges.push((i, i + 1));
                }
                if r + 1 < self.rows {
                    edges.push((i, i + self.cols));
                }
            }
        }
        edges
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Swing-equation grid. Node `i` owns states `2i` (phase angle) and `2i + 1`
/// (frequency) and one actuator on its frequency state. Couplings are
/// symmetric, `k_ij = k_ji`.
///
/// Sampling order: one coupling per edge in [`SwingGridSpec::edges`] order,
/// then inverse inertia and damping per node.
pub fn build_swing_grid(spec: &SwingGridSpec) -> Result<LinearSystem> {
    spec.validate()?;
    let nodes = spec.rows * spec.cols;
    let dt = spec.dt;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let edges = spec.edges();
    let coupling: Vec<f64> = edges.iter().map(|_| uniform(&mut rng, spec.coupling)).collect();
    let inv_m: Vec<f64> = (0..nodes).map(|_| uniform(&mut rng, spec.inv_inertia)).collect();
    let damping: Vec<f64> = (0..nodes).map(|_| uniform(&mut rng, spec.damping)).collect();

    let mut k_total = vec![0.0; nodes];
    for (&(i, j), &k) in edges.iter().zip(&coupling) {
        k_total[i] += k;
        k_total[j] += k;
    }

    let nx = 2 * nodes;
    let mut a = Mat::zeros(nx, nx);
    let mut b = Mat::zeros(nx, nodes);
    for i in 0..nodes {
        let (th, om) = (2 * i, 2 * i + 1);
        a[(th, th)] = 1.0;
        a[(th, om)] = dt;
        a[(om, th)] = -k_total[i] * inv_m[i] * dt;
        a[(om, om)] = 1.0 - damping[i] * inv_m[i] * dt;
        b[(om, i)] = 1.0;
    }
    for (&(i, j), &k) in edges.iter().zip(&coupling) {
        a[(2 * i + 1, 2 * j)] = k * inv_m[i] * dt;
        a[(2 * j + 1, 2 * i)] = k * inv_m[j] * dt;
    }
    LinearSystem::new(a, b, None, spec.horizon)
}

/// Tridiagonal row-stochastic `A` with `round(density * n_x)` actuators on
/// distinct, seed-chosen states. Diagonal weights dominate the neighbour
/// weights, which keeps every eigenvalue of `A` above 1/3 and `A^T` far from
/// singular over long horizons.
pub fn build_chain_bench(n_x: usize, density: f64, horizon: usize, seed: u64) -> Result<LinearSystem> {
    if n_x < 2 {
        return Err(Error::InvalidParameter(format!("chain needs n_x >= 2, got {n_x}")));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidParameter(format!("density must lie in (0, 1], got {density}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Mat::zeros(n_x, n_x);
    for i in 0..n_x {
        let lo = i.saturating_sub(1);
        let hi = (i + 1).min(n_x - 1);
        for j in lo..=hi {
            a[(i, j)] = if i == j { rng.gen_range(2.0..=3.0) } else { rng.gen_range(0.2..=0.5) };
        }
        let s: f64 = a.row(i).sum();
        a.row_mut(i).scale_mut(1.0 / s);
    }
    let nu = (density * n_x as f64).round() as usize;
    let mut b = Mat::zeros(n_x, nu);
    for (k, state) in sample(&mut rng, n_x, nu).into_iter().enumerate() {
        b[(state, k)] = 1.0;
    }
    LinearSystem::new(a, b, None, horizon)
}
