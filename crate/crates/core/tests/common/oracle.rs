//! Brute-force evaluation of the constrained input energy `h(x0)`.
//!
//! Solves the whole problem at once over `vec(phi)` (states and inputs for
//! every column) with explicit dynamics rows, and never splits it per column
//! or reuses the rollout constraints of the main algorithm.

use ctrlvol::constraints::SupportPattern;
use ctrlvol::linalg::{nullspace_basis, solve_lstsq, Mat, SvdFactors, Tolerance, Vector};
use ctrlvol::model::LinearSystem;

pub struct Oracle {
    nx: usize,
    nu: usize,
    horizon: usize,
    feasible: bool,
    particular: Vector,
    kernel: Mat,
    tol: Tolerance,
}

impl Oracle {
    pub fn new(sys: &LinearSystem, p: &SupportPattern, tol: &Tolerance) -> Self {
        let (nx, nu, t) = (sys.nx(), sys.nu(), sys.horizon());
        let block = (nx + nu) * t;
        let xi = |s: usize, j: usize| s * nx + j;
        let ui = |s: usize, k: usize| nx * t + s * nu + k;

        let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut rhs: Vec<f64> = Vec::new();
        for i in 0..nx {
            let off = i * block;
            // phi_x(0) = I
            for j in 0..nx {
                rows.push(vec![(off + xi(0, j), 1.0)]);
                rhs.push(if i == j { 1.0 } else { 0.0 });
            }
            // phi_x(s+1) = A phi_x(s) + B phi_u(s); phi_x(T) = 0
            for s in 0..t {
                for j in 0..nx {
                    let mut row = Vec::new();
                    if s + 1 < t {
                        row.push((off + xi(s + 1, j), 1.0));
                    }
                    for l in 0..nx {
                        row.push((off + xi(s, l), -sys.a()[(j, l)]));
                    }
                    for k in 0..nu {
                        row.push((off + ui(s, k), -sys.b()[(j, k)]));
                    }
                    rows.push(row);
                    rhs.push(0.0);
                }
            }
            for s in 0..t {
                for j in 0..nx {
                    if !p.allows_x(s, j, i) {
                        rows.push(vec![(off + xi(s, j), 1.0)]);
                        rhs.push(0.0);
                    }
                }
                for k in 0..nu {
                    if !p.allows_u(s, k, i) {
                        rows.push(vec![(off + ui(s, k), 1.0)]);
                        rhs.push(0.0);
                    }
                }
            }
        }

        let mut e = Mat::zeros(rows.len(), nx * block);
        for (r, row) in rows.iter().enumerate() {
            for &(c, v) in row {
                e[(r, c)] += v;
            }
        }
        let f = Mat::from_column_slice(rhs.len(), 1, &rhs);
        let svd = SvdFactors::new(&e, tol);
        let particular = svd.solve(&f);
        let residual = (&e * &particular - &f).norm();
        Self {
            nx,
            nu,
            horizon: t,
            feasible: tol.is_feasible(residual, f.norm()),
            particular: particular.column(0).into_owned(),
            kernel: nullspace_basis(&e, tol),
            tol: *tol,
        }
    }

    pub fn feasible(&self) -> bool {
        self.feasible
    }

    /// `min ||u||^2` over all constrained closed-loop maps, with `u = phi_u x0`.
    /// Infeasible problems give `+inf`.
    pub fn h(&self, x0: &Vector) -> f64 {
        if !self.feasible {
            return f64::INFINITY;
        }
        let (nx, nu, t) = (self.nx, self.nu, self.horizon);
        let block = (nx + nu) * t;
        // L maps vec(phi) to the stacked input u = sum_i x0[i] phi_u[:, i].
        let mut l = Mat::zeros(nu * t, nx * block);
        for i in 0..nx {
            for r in 0..nu * t {
                l[(r, i * block + nx * t + r)] = x0[i];
            }
        }
        let u0 = &l * &self.particular;
        let lk = &l * &self.kernel;
        let target = Mat::from_column_slice(u0.len(), 1, (-u0).as_slice());
        let (_, residual) = solve_lstsq(&lk, &target, &self.tol).expect("shapes agree by construction");
        residual * residual
    }
}

