//! Randomized invariants, one seed per case. Shared by the proptest suites
//! and the acceptance run.

use ctrlvol::constraints::{column_constraints, pattern_from, zero_indices, Rollout, SupportPattern};
use ctrlvol::linalg::{logdet_gram, nullspace_basis, pinv, range_basis, rank_of, Mat, Vector};
use ctrlvol::model::LinearSystem;
use ctrlvol::rank::{build_z, dense_ranks, h_blocks, RankCertifier};
use ctrlvol::volume::{classical_observability, constrained_controllability, constrained_observability, VolumeStatus};
use rand::Rng;

use super::{nonzero_vector, random_masks, random_pattern, random_spec, rng, sparse_system, tol, uniform_mat};

pub type Check = Result<(), String>;
pub type Property = (&'static str, fn(u64) -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    }};
}

pub fn small_system(rng: &mut impl Rng) -> LinearSystem {
    let nx: usize = rng.gen_range(2..=5);
    let nu = rng.gen_range(nx.div_ceil(2)..=nx.min(4));
    let t = rng.gen_range(3..=5);
    sparse_system(rng, nx, nu, t, true)
}

/// Matrix of prescribed rank with singular values in a moderate range.
fn low_rank(rng: &mut impl Rng, rows: usize, cols: usize, rank: usize) -> Mat {
    uniform_mat(rng, rows, rank) * uniform_mat(rng, rank, cols)
}

pub fn penrose(seed: u64) -> Check {
    let mut rng = rng(seed);
    let rows = rng.gen_range(1..=9);
    let cols = rng.gen_range(1..=9);
    let rank = rng.gen_range(0..=rows.min(cols));
    let m = low_rank(&mut rng, rows, cols, rank);
    let p = pinv(&m, &tol());
    let scale = 1.0 + m.norm() * p.norm();
    let close = |a: Mat, b: &Mat| (a - b).norm() <= 1e-9 * scale * (1.0 + b.norm());
    ensure!(close(&m * &p * &m, &m), "M M+ M != M");
    ensure!(close(&p * &m * &p, &p), "M+ M M+ != M+");
    let mp = &m * &p;
    ensure!(close(mp.transpose(), &mp), "M M+ not symmetric");
    let pm = &p * &m;
    ensure!(close(pm.transpose(), &pm), "M+ M not symmetric");

    let r = rank_of(&m, &tol());
    ensure!(r == rank, "rank {r}, constructed {rank}");
    let kernel = nullspace_basis(&m, &tol());
    ensure!(r + kernel.ncols() == cols, "rank {r} + nullity {} != {cols}", kernel.ncols());
    ensure!((&m * &kernel).norm() <= 1e-9 * (1.0 + m.norm()), "kernel not annihilated");
    let range = range_basis(&m, &tol());
    ensure!(range.ncols() == r, "range basis has {} columns, rank {r}", range.ncols());
    let gram = range.tr_mul(&range);
    ensure!((gram - Mat::identity(r, r)).norm() <= 1e-10, "range basis not orthonormal");
    Ok(())
}

/// `log det(M^T M)` against a direct determinant.
pub fn logdet(seed: u64) -> Check {
    let mut rng = rng(seed);
    let n = rng.gen_range(1..=6);
    let rows = n + rng.gen_range(0..=3);
    let m = uniform_mat(&mut rng, rows, n);
    let g = m.tr_mul(&m);
    let det = g.determinant();
    match logdet_gram(&m, &tol()).finite() {
        Some(l) => ensure!((l - det.ln()).abs() <= 1e-8 * (1.0 + det.ln().abs()), "logdet {l} vs {}", det.ln()),
        None => ensure!(det.abs() < 1e-12, "reported singular, det {det}"),
    }
    Ok(())
}

/// `Z_h` is the orthogonal projector onto `ker Z_AB0`; each `H_i` is the
/// orthogonal projector onto `ker Z_h[R_i]`.
pub fn projectors(seed: u64) -> Check {
    let mut rng = rng(seed);
    let sys = small_system(&mut rng);
    let p = random_pattern(&mut rng, &sys);
    let z = build_z(&sys, &tol());
    let zh = &z.z_h;
    let n = zh.nrows();
    ensure!((zh * zh - zh).norm() <= 1e-9, "Z_h not idempotent");
    ensure!((zh.transpose() - zh).norm() <= 1e-12, "Z_h not symmetric");
    ensure!((&z.z_ab0 * zh).norm() <= 1e-9 * (1.0 + z.z_ab0.norm()), "Z_AB0 Z_h != 0");
    let rank = rank_of(zh, &tol());
    let nullity = n - rank_of(&z.z_ab0, &tol());
    ensure!(rank == nullity, "rank Z_h {rank}, nullity of Z_AB0 {nullity}");

    let zr = zero_indices(&p);
    let h = h_blocks(&z, &zr).map_err(|e| e.to_string())?;
    for (i, hi) in h.iter().enumerate() {
        ensure!((hi * hi - hi).norm() <= 1e-9, "H_{i} not idempotent");
        ensure!((hi.transpose() - hi).norm() <= 1e-9, "H_{i} not symmetric");
        let rows = z.z_h_rows(&zr.per_column[i]);
        ensure!((&rows * hi).norm() <= 1e-9, "Z_h[R_{i}] H_{i} != 0");
    }

    // the coordinate route of the certifier agrees with the explicit blocks
    let report = RankCertifier::from_z(z.clone()).check(&p).map_err(|e| e.to_string())?;
    let (rank_zh, rank_zhh) = dense_ranks(&z, &zr).map_err(|e| e.to_string())?;
    ensure!(report.rank_zh == rank_zh, "rank Z_h {} vs dense {rank_zh}", report.rank_zh);
    if let Some(r) = report.rank_zhh {
        ensure!(r == rank_zhh, "rank Z_h H {r} vs dense {rank_zhh}");
    }
    Ok(())
}

/// The constraints over all columns, assembled globally with Kronecker
/// products: unknowns `vec(phi_u)` ordered column by column.
pub fn global_constraints(sys: &LinearSystem, p: &SupportPattern) -> (Mat, Vector, Vec<usize>) {
    let (nx, nu, t) = (sys.nx(), sys.nu(), sys.horizon());
    let width = nu * t;
    let eye = Mat::identity(nx, nx);
    // x(s) = A^s x0 + D_s Phi with D_s = [A^{s-1} B ... B 0 ... 0]
    let d_at = |s: usize| {
        let mut d = Mat::zeros(nx, width);
        let mut block = sys.b().clone();
        for k in (0..s).rev() {
            d.columns_mut(k * nu, nu).copy_from(&block);
            block = sys.a() * block;
        }
        d
    };
    let a_pow = |s: usize| (0..s).fold(Mat::identity(nx, nx), |acc, _| sys.a() * acc);

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut column: Vec<usize> = Vec::new();
    let mut push = |big: &Mat, c: &Mat, block: usize, keep: &dyn Fn(usize) -> bool| {
        for r in 0..big.nrows() {
            if keep(r) {
                rows.push(big.row(r).iter().copied().collect());
                rhs.push(c[(r, 0)]);
                column.push(r / block);
            }
        }
    };

    let vec_of = |m: &Mat| Mat::from_column_slice(m.len(), 1, m.as_slice());
    // (I kron D_s) vec(Phi_u) = -vec(A^s) on masked state entries, all of them at s = T
    for s in 1..=t {
        let big = eye.kronecker(&d_at(s));
        let c = -vec_of(&a_pow(s));
        if s == t {
            push(&big, &c, nx, &|_| true);
        } else {
            push(&big, &c, nx, &|r| !p.allows_x(s, r % nx, r / nx));
        }
    }
    // masked input entries select coordinates of vec(phi_u)
    let sel = Mat::identity(nx * width, nx * width);
    let zero = Mat::zeros(nx * width, 1);
    push(&sel, &zero, width, &|r| {
        let (i, w) = (r / width, r % width);
        !p.allows_u(w / nu, w % nu, i)
    });

    let m = Mat::from_fn(rows.len(), nx * width, |r, c| rows[r][c]);
    (m, Vector::from_vec(rhs), column)
}

/// Every global constraint row touches only the column block it was built
/// for, and the rows of block `i` describe the same affine set as the
/// per-column system.
pub fn column_separation(seed: u64) -> Check {
    let mut rng = rng(seed);
    let sys = small_system(&mut rng);
    let p = random_pattern(&mut rng, &sys);
    let (nx, width) = (sys.nx(), sys.nu() * sys.horizon());
    let (global, rhs, column) = global_constraints(&sys, &p);
    for (r, &own) in column.iter().enumerate() {
        let outside = (0..nx).filter(|&i| i != own).any(|i| global.view((r, i * width), (1, width)).norm() > 0.0);
        ensure!(!outside, "row {r} of column {own} reaches other blocks");
    }
    let t = tol();
    for i in 0..nx {
        let mine: Vec<usize> = (0..global.nrows()).filter(|&r| column[r] == i).collect();
        let g = global.select_rows(&mine).columns(i * width, width).into_owned();
        let gc = rhs.select_rows(&mine);
        let cc = column_constraints(&sys, &p, i);
        let aug = |s: &Mat, c: &Vector| {
            let mut m = s.clone().insert_column(s.ncols(), 0.0);
            m.set_column(s.ncols(), c);
            m
        };
        let (ga, la) = (aug(&g, &gc), aug(&cc.s, &(-&cc.c)));
        let stacked = Mat::from_fn(ga.nrows() + la.nrows(), width + 1, |r, c| {
            if r < ga.nrows() {
                ga[(r, c)]
            } else {
                la[(r - ga.nrows(), c)]
            }
        });
        let (rg, rl, rs) = (rank_of(&ga, &t), rank_of(&la, &t), rank_of(&stacked, &t));
        ensure!(rg == rs && rl == rs, "column {i}: augmented ranks {rg}, {rl}, stacked {rs}");
        let (rg, rl) = (rank_of(&g, &t), rank_of(&cc.s, &t));
        ensure!(rg == rl, "column {i}: coefficient ranks {rg} vs {rl}");
    }
    Ok(())
}

/// Any solution of a column's constraints, pushed through the dynamics,
/// reaches the origin at `T` and respects the masked state entries.
pub fn rollout(seed: u64) -> Check {
    let mut rng = rng(seed);
    let sys = small_system(&mut rng);
    let p = random_pattern(&mut rng, &sys);
    let solver = ctrlvol::volume::VolumeSolver::new(&sys, &tol());
    let roll = Rollout::new(&sys);
    let (nx, nu, t) = (sys.nx(), sys.nu(), sys.horizon());
    for i in 0..nx {
        let col = solver.solve_column(&p, i);
        if !col.feasible {
            continue;
        }
        let lambda = Vector::from_fn(col.kernel.ncols(), |_, _| rng.gen_range(-1.0..1.0));
        let phi = &col.omega + &col.kernel * lambda;
        for s in 0..t {
            for k in 0..nu {
                if !p.allows_u(s, k, i) {
                    ensure!(phi[s * nu + k].abs() <= 1e-9, "column {i}: masked input ({s}, {k}) is {}", phi[s * nu + k]);
                }
            }
        }
        let traj = roll.simulate_column(sys.a(), sys.b(), i, &phi);
        ensure!(traj[t].norm() <= 1e-8, "column {i}: x(T) = {}", traj[t].norm());
        for (s, x) in traj.iter().enumerate().take(t) {
            for j in 0..nx {
                if !p.allows_x(s, j, i) {
                    ensure!(x[j].abs() <= 1e-8, "column {i}: masked state ({s}, {j}) is {}", x[j]);
                }
            }
        }
    }
    Ok(())
}

/// Removing allowed entries never lowers the energy or raises the volume.
pub fn monotone(seed: u64) -> Check {
    let mut rng = rng(seed);
    let sys = small_system(&mut rng);
    let coarse = random_pattern(&mut rng, &sys);
    let fine = coarse.intersect(&random_masks(&mut rng, &sys, 0.85)).map_err(|e| e.to_string())?;
    ensure!(fine.is_refinement_of(&coarse), "intersection is not a refinement");
    let a = constrained_controllability(&sys, &coarse, &tol()).map_err(|e| e.to_string())?;
    let b = constrained_controllability(&sys, &fine, &tol()).map_err(|e| e.to_string())?;
    if a.status == VolumeStatus::Infeasible {
        ensure!(b.status == VolumeStatus::Infeasible, "refinement of an infeasible pattern is {:?}", b.status);
        return Ok(());
    }
    if let (Some(la), Some(lb)) = (a.log_yc, b.log_yc) {
        ensure!(lb <= la + 1e-7 * (1.0 + la.abs()), "log Y_c rose from {la} to {lb}");
    }
    if let (Some(_), Some(_)) = (&a.q, &b.q) {
        for _ in 0..5 {
            let x0 = nonzero_vector(&mut rng, sys.nx());
            let (ea, eb) = (a.energy(&x0).unwrap(), b.energy(&x0).unwrap());
            ensure!(eb >= ea - 1e-7 * (1.0 + ea), "energy fell from {ea} to {eb}");
        }
    }
    Ok(())
}

/// The observability volume equals the controllability volume of `(A^T, C^T)`,
/// and the classical Gramian matches `sum (A^T)^t C^T C A^t`.
pub fn duality(seed: u64) -> Check {
    let mut rng = rng(seed);
    let sys = small_system(&mut rng);
    let spec = random_spec(&mut rng, sys.horizon());
    let p = pattern_from(&sys, spec).map_err(|e| e.to_string())?;
    let obs = constrained_observability(&sys, &p, &tol()).map_err(|e| e.to_string())?;
    let dual = LinearSystem::new(sys.a().transpose(), sys.c().transpose(), None, sys.horizon()).unwrap();
    let ctrb = constrained_controllability(&dual, &pattern_from(&dual, spec).unwrap(), &tol()).map_err(|e| e.to_string())?;
    ensure!(obs.status == ctrb.status, "status {:?} vs {:?}", obs.status, ctrb.status);
    match (obs.log_yc, ctrb.log_yc) {
        (Some(a), Some(b)) => ensure!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "log Y_o {a} vs {b}"),
        (a, b) => ensure!(a.is_none() && b.is_none(), "log Y_o {a:?} vs {b:?}"),
    }

    let mut w = Mat::zeros(sys.nx(), sys.nx());
    let mut ca = sys.c().clone();
    for _ in 0..sys.horizon() {
        w += ca.tr_mul(&ca);
        ca = &ca * sys.a();
    }
    let wo = classical_observability(&sys, &tol()).w;
    ensure!((&wo - &w).norm() <= 1e-10 * (1.0 + w.norm()), "W_o differs by {}", (&wo - &w).norm());
    Ok(())
}

/// Relabelling states permutes `Q` and leaves every scalar unchanged.
pub fn permutation(seed: u64) -> Check {
    let mut rng = rng(seed);
    let sys = small_system(&mut rng);
    let p = random_pattern(&mut rng, &sys);
    let nx = sys.nx();
    let mut perm: Vec<usize> = (0..nx).collect();
    for k in (1..nx).rev() {
        perm.swap(k, rng.gen_range(0..=k));
    }
    let sys2 = sys.permute_states(&perm).unwrap();
    let p2 = p.permute_states(&perm).unwrap();
    let a = constrained_controllability(&sys, &p, &tol()).map_err(|e| e.to_string())?;
    let b = constrained_controllability(&sys2, &p2, &tol()).map_err(|e| e.to_string())?;
    ensure!(a.status == b.status, "status {:?} vs {:?}", a.status, b.status);
    match (a.classical.log_det.finite(), b.classical.log_det.finite()) {
        (Some(x), Some(y)) => ensure!((x - y).abs() <= 1e-9 * (1.0 + x.abs()), "log V_c {x} vs {y}"),
        (x, y) => ensure!(x.is_none() && y.is_none(), "log V_c {x:?} vs {y:?}"),
    }
    if let (Some(x), Some(y)) = (a.log_yc, b.log_yc) {
        ensure!((x - y).abs() <= 1e-8 * (1.0 + x.abs()), "log Y_c {x} vs {y}");
    }
    if let (Some(qa), Some(qb)) = (&a.q, &b.q) {
        let moved = Mat::from_fn(nx, nx, |i, j| qa[(perm[i], perm[j])]);
        ensure!((&moved - qb).norm() <= 1e-8 * (1.0 + qa.norm()), "Q is not permuted");
    }
    let ra = RankCertifier::new(&sys, &tol()).check(&p).map_err(|e| e.to_string())?;
    let rb = RankCertifier::new(&sys2, &tol()).check(&p2).map_err(|e| e.to_string())?;
    ensure!(ra.holds == rb.holds && ra.feasible == rb.feasible, "certificate changed under relabelling");
    Ok(())
}

pub const ALL: &[Property] = &[
    ("penrose", penrose),
    ("logdet", logdet),
    ("projectors", projectors),
    ("column_separation", column_separation),
    ("rollout", rollout),
    ("monotone", monotone),
    ("duality", duality),
    ("permutation", permutation),
];
