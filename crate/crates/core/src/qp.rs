//! Dense convex quadratic programming.
//!
//! Solves
//!
//! ```text
//! minimize    ½ xᵀ P x + qᵀ x
//! subject to  G x ≤ h
//!             A x = b
//! ```
//!
//! with a primal-dual interior point method (Mehrotra predictor-corrector).
//! Each iteration reduces the Newton system to the normal matrix
//! `P + Gᵀ W G`. Variables whose block of that matrix is diagonal for every
//! `W` (typically SVM slack variables, which appear in `P` only on the
//! diagonal and in at most one constraint row each) are eliminated with a
//! Schur complement, so only the remaining "dense" variables are factored.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::error::{AwarError, Result};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;

/// Ridge added to the diagonal of a positive semidefinite but singular `P`,
/// relative to its largest diagonal entry.
pub const PSD_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct QpProblem {
    p: DMatrix<f64>,
    q: DVector<f64>,
    g: DMatrix<f64>,
    h: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl QpProblem {
    /// Unconstrained problem; `p` is symmetrized as `(P + Pᵀ) / 2`.
    pub fn new(p: DMatrix<f64>, q: DVector<f64>) -> Result<Self> {
        let n = q.len();
        if p.nrows() != n || p.ncols() != n {
            return Err(AwarError::DimensionMismatch {
                expected: n,
                found: p.nrows().max(p.ncols()),
                context: "quadratic term size",
            });
        }
        let p = (&p + p.transpose()) * 0.5;
        Ok(QpProblem {
            p,
            q,
            g: DMatrix::zeros(0, n),
            h: DVector::zeros(0),
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
        })
    }

    /// Adds `G x ≤ h`.
    pub fn with_inequalities(mut self, g: DMatrix<f64>, h: DVector<f64>) -> Result<Self> {
        check_constraint_dims(&g, &h, self.n(), "inequality")?;
        self.g = g;
        self.h = h;
        Ok(self)
    }

    /// Adds `A x = b`.
    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        check_constraint_dims(&a, &b, self.n(), "equality")?;
        self.a = a;
        self.b = b;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn h(&self) -> &DVector<f64> {
        &self.h
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x)
    }

    /// Largest violation of the inequality and equality constraints.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let ineq = (&self.g * x - &self.h).iter().fold(0.0f64, |m, &v| m.max(v));
        let eq = (&self.a * x - &self.b).amax();
        ineq.max(eq)
    }
}

fn check_constraint_dims(m: &DMatrix<f64>, rhs: &DVector<f64>, n: usize, what: &'static str) -> Result<()> {
    if m.ncols() != n {
        return Err(AwarError::DimensionMismatch {
            expected: n,
            found: m.ncols(),
            context: what,
        });
    }
    if m.nrows() != rhs.len() {
        return Err(AwarError::DimensionMismatch {
            expected: m.nrows(),
            found: rhs.len(),
            context: what,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers of `G x ≤ h`.
    pub z: DVector<f64>,
    /// Multipliers of `A x = b`, with stationarity `P x + q + Gᵀ z + Aᵀ ν = 0`.
    pub nu: DVector<f64>,
    pub objective: f64,
    /// Max of relative primal infeasibility, dual infeasibility and duality gap.
    pub kkt_residual: f64,
    pub status: QpStatus,
    pub iterations: usize,
    /// Diagonal ridge added to `P` (zero when `P` was positive definite).
    pub ridge: f64,
}

/// Residual above which a `MaxIter` solution is rejected rather than used.
pub const USABLE_RESIDUAL: f64 = 1e-4;

impl QpSolution {
    /// Turn unusable outcomes into errors. A `MaxIter` solution that is still
    /// close to optimal is accepted with a warning.
    pub fn ensure_usable(&self) -> Result<()> {
        match self.status {
            QpStatus::Optimal => Ok(()),
            QpStatus::MaxIter if self.kkt_residual <= USABLE_RESIDUAL => {
                log::warn!(
                    "qp stopped after {} iterations with kkt residual {:.2e}; using the iterate",
                    self.iterations,
                    self.kkt_residual
                );
                Ok(())
            }
            status => Err(AwarError::QpFailed {
                status,
                residual: self.kkt_residual,
            }),
        }
    }
}

/// Solve `prob` to relative KKT tolerance `tol`.
///
/// Deterministic for fixed inputs. When the tolerance is not met within
/// `max_iter` iterations the best iterate is returned with status `MaxIter`.
pub fn solve_qp(prob: &QpProblem, tol: f64, max_iter: usize) -> Result<QpSolution> {
    let ridge = psd_ridge(&prob.p)?;
    let mut p = prob.p.clone();
    for i in 0..p.nrows() {
        p[(i, i)] += ridge;
    }
    let mut sol = Ipm::new(prob, &p, tol, max_iter).run()?;
    sol.ridge = ridge;
    sol.objective = prob.objective(&sol.x);
    Ok(sol)
}

/// Ridge needed to make `p` numerically PSD-definite, or an error when it is
/// clearly indefinite.
fn psd_ridge(p: &DMatrix<f64>) -> Result<f64> {
    let n = p.nrows();
    let scale = (0..n).map(|i| p[(i, i)].abs()).fold(1.0f64, f64::max);
    let neg_tol = -1e-8 * scale;
    // Only rows with some nonzero entry matter.
    let support: Vec<usize> = (0..n).filter(|&i| p.row(i).iter().any(|&v| v != 0.0)).collect();
    let singular = support.len() < n;
    let is_diag = support
        .iter()
        .all(|&i| support.iter().all(|&j| i == j || p[(i, j)] == 0.0));
    if is_diag {
        let min = support.iter().map(|&i| p[(i, i)]).fold(f64::INFINITY, f64::min);
        if min < neg_tol {
            return Err(AwarError::NotConvex(min));
        }
        return Ok(if singular || min <= 0.0 { PSD_RIDGE * scale + min.min(0.0).abs() } else { 0.0 });
    }
    let sub = p.select_rows(&support).select_columns(&support);
    match pivoted_cholesky_defect(sub, 1e-12 * scale) {
        Defect::Definite if !singular => Ok(0.0),
        Defect::Definite | Defect::Semidefinite => Ok(PSD_RIDGE * scale),
        Defect::Marginal(min) if min >= neg_tol => Ok(PSD_RIDGE * scale + min.abs()),
        Defect::Marginal(min) => Err(AwarError::NotConvex(min)),
    }
}

enum Defect {
    Definite,
    Semidefinite,
    /// Indefinite, with an estimate of the most negative eigenvalue.
    Marginal(f64),
}

/// Diagonally pivoted Cholesky; classifies `m` once the remaining Schur
/// complement is negligible.
fn pivoted_cholesky_defect(mut m: DMatrix<f64>, tiny: f64) -> Defect {
    let n = m.nrows();
    let mut active: Vec<usize> = (0..n).collect();
    while !active.is_empty() {
        let (pos, &piv) = active
            .iter()
            .enumerate()
            .max_by(|a, b| m[(*a.1, *a.1)].total_cmp(&m[(*b.1, *b.1)]))
            .unwrap();
        let d = m[(piv, piv)];
        if d <= tiny {
            // Remaining block should be ~0 if the matrix is PSD.
            let mut worst = 0.0f64;
            let mut min_diag = f64::INFINITY;
            for &i in &active {
                min_diag = min_diag.min(m[(i, i)]);
                for &j in &active {
                    worst = worst.max(m[(i, j)].abs());
                }
            }
            return if worst <= tiny.max(1e-14) * 1e4 && min_diag >= -tiny * 1e4 {
                Defect::Semidefinite
            } else {
                Defect::Marginal(min_diag.min(-worst))
            };
        }
        active.swap_remove(pos);
        let col: Vec<f64> = active.iter().map(|&i| m[(i, piv)]).collect();
        for (a, &i) in active.iter().enumerate() {
            for (b, &j) in active.iter().enumerate() {
                m[(i, j)] -= col[a] * col[b] / d;
            }
        }
    }
    Defect::Definite
}

/// Row-compressed constraint matrix split by variable class.
struct RowEntries {
    /// Per row: (local dense index, value), sorted by index.
    dense: Vec<Vec<(usize, f64)>>,
    /// Per row: at most one (local eliminated index, value).
    elim: Vec<Option<(usize, f64)>>,
    /// Per row: (global index, value) for matrix-vector products.
    all: Vec<Vec<(usize, f64)>>,
}

struct Partition {
    dense: Vec<usize>,
    elim: Vec<usize>,
}

/// Choose variables whose normal-matrix block stays diagonal: `P` is
/// diagonal on them and no constraint row touches two of them.
fn partition(p: &DMatrix<f64>, g: &DMatrix<f64>) -> Partition {
    let n = p.nrows();
    let p_diag_only: Vec<bool> = (0..n)
        .map(|j| (0..n).all(|k| k == j || p[(j, k)] == 0.0))
        .collect();
    let col_nnz: Vec<usize> = (0..n)
        .map(|j| g.column(j).iter().filter(|v| **v != 0.0).count())
        .collect();
    let mut order: Vec<usize> = (0..n).filter(|&j| p_diag_only[j]).collect();
    order.sort_by_key(|&j| (col_nnz[j], j));

    let mut row_taken = vec![false; g.nrows()];
    let mut is_elim = vec![false; n];
    for j in order {
        let rows: Vec<usize> = (0..g.nrows()).filter(|&r| g[(r, j)] != 0.0).collect();
        if rows.iter().any(|&r| row_taken[r]) {
            continue;
        }
        for r in rows {
            row_taken[r] = true;
        }
        is_elim[j] = true;
    }
    Partition {
        dense: (0..n).filter(|&j| !is_elim[j]).collect(),
        elim: (0..n).filter(|&j| is_elim[j]).collect(),
    }
}

fn row_entries(g: &DMatrix<f64>, part: &Partition) -> RowEntries {
    let n = g.ncols();
    let mut slot = vec![(false, 0usize); n];
    for (k, &j) in part.dense.iter().enumerate() {
        slot[j] = (false, k);
    }
    for (k, &j) in part.elim.iter().enumerate() {
        slot[j] = (true, k);
    }
    let m = g.nrows();
    let mut dense = vec![Vec::new(); m];
    let mut elim = vec![None; m];
    let mut all = vec![Vec::new(); m];
    for j in 0..n {
        for r in 0..m {
            let v = g[(r, j)];
            if v == 0.0 {
                continue;
            }
            all[r].push((j, v));
            match slot[j] {
                (false, k) => dense[r].push((k, v)),
                (true, k) => elim[r] = Some((k, v)),
            }
        }
    }
    RowEntries { dense, elim, all }
}

/// Factorization of the reduced Newton system for one weight vector.
struct Normal<'a> {
    part: &'a Partition,
    chol: Cholesky<f64, Dyn>,
    elim_diag: Vec<f64>,
    /// Coupling between dense (rows) and eliminated (columns) variables.
    coupling: DMatrix<f64>,
    eq: Option<(DMatrix<f64>, LU<f64, Dyn, Dyn>)>,
}

impl<'a> Normal<'a> {
    fn factor(
        p: &DMatrix<f64>,
        rows: &RowEntries,
        part: &'a Partition,
        w: &[f64],
        a: &DMatrix<f64>,
    ) -> Result<Self> {
        let nd = part.dense.len();
        let ne = part.elim.len();
        let m = w.len();

        // Diagonal of the eliminated block, split into contributions from rows
        // that also touch dense variables and from everything else.
        let mut uncoupled: Vec<f64> = part.elim.iter().map(|&j| p[(j, j)].max(0.0)).collect();
        let mut elim_diag = uncoupled.clone();
        let mut coupling = DMatrix::zeros(nd, ne);
        let mut coupled_rows: Vec<Vec<usize>> = vec![Vec::new(); ne];
        for (r, e) in rows.elim.iter().enumerate() {
            if let Some((k, v)) = *e {
                elim_diag[k] += w[r] * v * v;
                if rows.dense[r].is_empty() {
                    uncoupled[k] += w[r] * v * v;
                } else {
                    coupled_rows[k].push(r);
                }
                for &(kd, vd) in &rows.dense[r] {
                    coupling[(kd, k)] += w[r] * v * vd;
                }
            }
        }
        let max_p = (0..nd).map(|k| p[(part.dense[k], part.dense[k])]).fold(0.0f64, f64::max);
        let max_w = w.iter().copied().fold(0.0f64, f64::max);
        let reg = 1e-14 * max_p.max(max_w).max(elim_diag.iter().copied().fold(1.0, f64::max));
        for k in 0..ne {
            elim_diag[k] += reg;
            uncoupled[k] += reg;
        }

        // An eliminated variable tied to the dense block through a single row
        // r folds into that row's weight: w_r (D_k − w_r v_r²) / D_k, where the
        // bracket is exactly the uncoupled part of D_k. This avoids
        // subtracting two nearly equal large terms late in the iteration.
        let mut w_eff = w.to_vec();
        let mut folded = vec![false; ne];
        for k in 0..ne {
            if let [r] = coupled_rows[k][..] {
                w_eff[r] = w[r] * uncoupled[k] / elim_diag[k];
                folded[k] = true;
            }
        }

        let mut ndd = DMatrix::zeros(nd, nd);
        for (ka, &ja) in part.dense.iter().enumerate() {
            for (kb, &jb) in part.dense.iter().enumerate() {
                ndd[(ka, kb)] = p[(ja, jb)];
            }
        }
        let nnz: usize = rows.dense.iter().map(|r| r.len()).sum();
        if nd > 0 && m > 0 && nnz * 3 > m * nd {
            let mut gd = DMatrix::zeros(m, nd);
            for (r, entries) in rows.dense.iter().enumerate() {
                let sw = w_eff[r].sqrt();
                for &(k, v) in entries {
                    gd[(r, k)] = sw * v;
                }
            }
            ndd.gemm_tr(1.0, &gd, &gd, 1.0);
        } else {
            for (r, entries) in rows.dense.iter().enumerate() {
                for (i, &(ka, va)) in entries.iter().enumerate() {
                    let wa = w_eff[r] * va;
                    for &(kb, vb) in &entries[i..] {
                        ndd[(ka, kb)] += wa * vb;
                    }
                }
            }
            for kb in 0..nd {
                for ka in 0..kb {
                    ndd[(kb, ka)] = ndd[(ka, kb)];
                }
            }
        }
        let unfolded: Vec<usize> = (0..ne).filter(|&k| !folded[k]).collect();
        if !unfolded.is_empty() && nd > 0 {
            let mut scaled_t = DMatrix::zeros(unfolded.len(), nd);
            for (row, &k) in unfolded.iter().enumerate() {
                let inv = 1.0 / elim_diag[k].sqrt();
                for kd in 0..nd {
                    scaled_t[(row, kd)] = coupling[(kd, k)] * inv;
                }
            }
            ndd.gemm_tr(-1.0, &scaled_t, &scaled_t, 1.0);
        }

        let chol = factor_spd(ndd, reg)?;
        let mut normal = Normal {
            part,
            chol,
            elim_diag,
            coupling,
            eq: None,
        };
        if a.nrows() > 0 {
            let n = a.ncols();
            let mut y = DMatrix::zeros(n, a.nrows());
            for i in 0..a.nrows() {
                let col = normal.solve(&a.row(i).transpose());
                y.set_column(i, &col);
            }
            let mut schur = a * &y;
            let sreg = 1e-14 * (0..schur.nrows()).map(|i| schur[(i, i)].abs()).fold(1.0, f64::max);
            for i in 0..schur.nrows() {
                schur[(i, i)] += sreg;
            }
            normal.eq = Some((y, schur.lu()));
        }
        Ok(normal)
    }

    /// Solve the reduced normal system `N v = r`.
    fn solve(&self, r: &DVector<f64>) -> DVector<f64> {
        let part = self.part;
        let r_e = DVector::from_iterator(part.elim.len(), part.elim.iter().map(|&j| r[j]));
        let mut t = DVector::from_iterator(part.dense.len(), part.dense.iter().map(|&j| r[j]));
        let scaled = DVector::from_iterator(
            r_e.len(),
            r_e.iter().zip(&self.elim_diag).map(|(v, d)| v / d),
        );
        if !part.dense.is_empty() && !part.elim.is_empty() {
            t.gemv(-1.0, &self.coupling, &scaled, 1.0);
        }
        let v_d = self.chol.solve(&t);
        let mut out = DVector::zeros(r.len());
        for (k, &j) in part.dense.iter().enumerate() {
            out[j] = v_d[k];
        }
        for (k, &j) in part.elim.iter().enumerate() {
            let c = if part.dense.is_empty() {
                0.0
            } else {
                self.coupling.column(k).dot(&v_d)
            };
            out[j] = (r_e[k] - c) / self.elim_diag[k];
        }
        out
    }

    /// Solve `[N Aᵀ; A 0] [dx; dν] = [r1; r2]`.
    fn solve_kkt(&self, a: &DMatrix<f64>, r1: &DVector<f64>, r2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let u = self.solve(r1);
        match &self.eq {
            None => (u, DVector::zeros(0)),
            Some((y, lu)) => {
                let rhs = a * &u - r2;
                let dnu = lu.solve(&rhs).unwrap_or_else(|| DVector::zeros(rhs.len()));
                let dx = u - y * &dnu;
                (dx, dnu)
            }
        }
    }
}

fn factor_spd(mut m: DMatrix<f64>, reg: f64) -> Result<Cholesky<f64, Dyn>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Cholesky::new(m).expect("empty matrix is trivially SPD"));
    }
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(1e-300f64, f64::max);
    let mut bump = reg.max(1e-14 * scale);
    for i in 0..n {
        m[(i, i)] += bump;
    }
    for _ in 0..8 {
        if let Some(c) = Cholesky::new(m.clone()) {
            return Ok(c);
        }
        for i in 0..n {
            m[(i, i)] += 99.0 * bump;
        }
        bump *= 100.0;
    }
    Err(AwarError::Singular("interior-point normal matrix".into()))
}

struct Ipm<'a> {
    prob: &'a QpProblem,
    p: &'a DMatrix<f64>,
    /// Nonzeros of `p` per row; SVM-style problems leave most of it empty.
    p_rows: Vec<Vec<(usize, f64)>>,
    gscale: f64,
    tol: f64,
    max_iter: usize,
    part: Partition,
    rows: RowEntries,
}

impl<'a> Ipm<'a> {
    fn new(prob: &'a QpProblem, p: &'a DMatrix<f64>, tol: f64, max_iter: usize) -> Self {
        let part = partition(p, &prob.g);
        let rows = row_entries(&prob.g, &part);
        let p_rows = (0..p.nrows())
            .map(|i| (0..p.ncols()).filter(|&j| p[(i, j)] != 0.0).map(|j| (j, p[(i, j)])).collect())
            .collect();
        Ipm {
            prob,
            p,
            p_rows,
            gscale: prob.g.amax().max(prob.a.amax()).max(1.0),
            tol,
            max_iter,
            part,
            rows,
        }
    }

    fn g_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.all.len(),
            self.rows.all.iter().map(|r| r.iter().map(|&(j, v)| v * x[j]).sum()),
        )
    }

    fn p_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.p_rows.len(),
            self.p_rows.iter().map(|r| r.iter().map(|&(j, v)| v * x[j]).sum()),
        )
    }

    fn gt_mul(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.prob.n());
        for (r, entries) in self.rows.all.iter().enumerate() {
            let zr = z[r];
            if zr != 0.0 {
                for &(j, v) in entries {
                    out[j] += v * zr;
                }
            }
        }
        out
    }

    fn run(&self) -> Result<QpSolution> {
        let prob = self.prob;
        let m = prob.g.nrows();
        let a = &prob.a;

        if m == 0 {
            let normal = Normal::factor(self.p, &self.rows, &self.part, &[], a)?;
            let (x, nu) = normal.solve_kkt(a, &-&prob.q, &prob.b);
            let mut sol = self.solution(x, DVector::zeros(0), DVector::zeros(0), nu, 1);
            sol.status = if sol.kkt_residual <= self.tol {
                QpStatus::Optimal
            } else {
                QpStatus::MaxIter
            };
            return Ok(sol);
        }

        // Starting point from the least-squares KKT system with unit scaling.
        let ones = vec![1.0; m];
        let normal = Normal::factor(self.p, &self.rows, &self.part, &ones, a)?;
        let rhs = -&prob.q + self.gt_mul(&prob.h);
        let (mut x, mut nu) = normal.solve_kkt(a, &rhs, &prob.b);
        let s0 = &prob.h - self.g_mul(&x);
        let shift = |v: DVector<f64>| {
            let lo = -v.min();
            if lo < 0.0 {
                v
            } else {
                v.add_scalar(1.0 + lo)
            }
        };
        let mut z = shift(-&s0);
        let mut s = shift(s0);

        let mut best: Option<QpSolution> = None;
        for iter in 0..self.max_iter {
            let gx = self.g_mul(&x);
            let r_d = self.p_mul(&x) + &prob.q + self.gt_mul(&z) + a.tr_mul(&nu);
            let r_p = a * &x - &prob.b;
            let r_i = &gx + &s - &prob.h;
            let mu = s.dot(&z) / m as f64;

            let current = self.solution(x.clone(), z.clone(), s.clone(), nu.clone(), iter);
            if current.kkt_residual <= self.tol {
                return Ok(QpSolution {
                    status: QpStatus::Optimal,
                    ..current
                });
            }
            if self.certifies_infeasible(&z, &nu, &r_i) {
                return Ok(QpSolution {
                    status: QpStatus::Infeasible,
                    ..current
                });
            }
            if best.as_ref().is_none_or(|b| current.kkt_residual < b.kkt_residual) {
                best = Some(current);
            }

            let w: Vec<f64> = s.iter().zip(z.iter()).map(|(s, z)| z / s).collect();
            let normal = match Normal::factor(self.p, &self.rows, &self.part, &w, a) {
                Ok(nm) => nm,
                Err(_) => break,
            };
            let step_dirs = |r_c: &DVector<f64>| {
                // dz = W G dx + S⁻¹ (Z r_i − r_c),  ds = −r_i − G dx
                let corr = DVector::from_iterator(
                    m,
                    (0..m).map(|k| (z[k] * r_i[k] - r_c[k]) / s[k]),
                );
                let rhs1 = -&r_d - self.gt_mul(&corr);
                let (dx, dnu) = normal.solve_kkt(a, &rhs1, &-&r_p);
                let gdx = self.g_mul(&dx);
                let dz = DVector::from_iterator(m, (0..m).map(|k| w[k] * gdx[k] + corr[k]));
                let ds = -&r_i - gdx;
                (dx, dnu, dz, ds)
            };

            let rc_aff = s.component_mul(&z);
            let (_, _, dz_a, ds_a) = step_dirs(&rc_aff);
            let alpha_aff = max_step(&s, &ds_a).min(max_step(&z, &dz_a)).min(1.0);
            let mu_aff = (&s + alpha_aff * &ds_a).dot(&(&z + alpha_aff * &dz_a)) / m as f64;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            let rc = DVector::from_iterator(
                m,
                (0..m).map(|k| s[k] * z[k] + ds_a[k] * dz_a[k] - sigma * mu),
            );
            let (dx, dnu, dz, ds) = step_dirs(&rc);
            let alpha = (0.99 * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);
            if !(alpha > 1e-14) || !dx.iter().all(|v| v.is_finite()) {
                break;
            }
            x.axpy(alpha, &dx, 1.0);
            nu.axpy(alpha, &dnu, 1.0);
            z.axpy(alpha, &dz, 1.0);
            s.axpy(alpha, &ds, 1.0);
        }

        let last = self.solution(x, z, s, nu, self.max_iter);
        let mut out = match best {
            Some(b) if b.kkt_residual <= last.kkt_residual => b,
            _ => last,
        };
        out.status = if out.kkt_residual <= self.tol {
            QpStatus::Optimal
        } else {
            QpStatus::MaxIter
        };
        Ok(out)
    }

    /// Farkas certificate check: `z ≥ 0`, `Gᵀz + Aᵀν ≈ 0`, `hᵀz + bᵀν < 0`.
    fn certifies_infeasible(&self, z: &DVector<f64>, nu: &DVector<f64>, r_i: &DVector<f64>) -> bool {
        let prob = self.prob;
        let pres = r_i.amax() / (1.0 + prob.h.amax());
        if pres <= self.tol {
            return false;
        }
        let t = -(prob.h.dot(z) + prob.b.dot(nu));
        if !(t > 0.0) {
            return false;
        }
        let dual = self.gt_mul(z) + prob.a.tr_mul(nu);
        dual.amax() <= self.tol * self.gscale * t && z.amax() > 1e6 * (1.0 + prob.q.amax())
    }

    fn solution(
        &self,
        x: DVector<f64>,
        z: DVector<f64>,
        s: DVector<f64>,
        nu: DVector<f64>,
        iterations: usize,
    ) -> QpSolution {
        let prob = self.prob;
        let m = prob.g.nrows();
        let px = self.p_mul(&x);
        let pobj = 0.5 * x.dot(&px) + prob.q.dot(&x);
        let mut r_d = px + &prob.q + prob.a.tr_mul(&nu);
        if m > 0 {
            r_d += self.gt_mul(&z);
        }
        let dres = r_d.amax() / (1.0 + prob.q.amax());
        let eq = (&prob.a * &x - &prob.b).amax() / (1.0 + prob.b.amax());
        let (ineq, gap) = if m > 0 {
            let viol = (self.g_mul(&x) - &prob.h).iter().fold(0.0f64, |acc, &v| acc.max(v));
            (viol / (1.0 + prob.h.amax()), s.dot(&z).abs() / (1.0 + pobj.abs()))
        } else {
            (0.0, 0.0)
        };
        QpSolution {
            objective: pobj,
            kkt_residual: dres.max(eq).max(ineq).max(gap),
            x,
            z,
            nu,
            status: QpStatus::MaxIter,
            iterations,
            ridge: 0.0,
        }
    }
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn solve(p: &QpProblem) -> QpSolution {
        solve_qp(p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap()
    }

    #[test]
    fn active_lower_bound() {
        // min x² s.t. x ≥ 1
        let prob = QpProblem::new(DMatrix::from_element(1, 1, 2.0), DVector::zeros(1))
            .unwrap()
            .with_inequalities(DMatrix::from_element(1, 1, -1.0), DVector::from_element(1, -1.0))
            .unwrap();
        let sol = solve(&prob);
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-7);
        assert_relative_eq!(sol.objective, 1.0, epsilon = 1e-7);
        assert!(sol.kkt_residual <= DEFAULT_TOL);
    }

    #[test]
    fn unconstrained_identity() {
        let prob = QpProblem::new(DMatrix::identity(2, 2), DVector::from_vec(vec![-1.0, -2.0])).unwrap();
        let sol = solve(&prob);
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(sol.x[1], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn equality_constrained() {
        // min ½|x|² s.t. x0 + x1 = 2, x ≥ 0 → (1, 1)
        let prob = QpProblem::new(DMatrix::identity(2, 2), DVector::zeros(2))
            .unwrap()
            .with_inequalities(-DMatrix::identity(2, 2), DVector::zeros(2))
            .unwrap()
            .with_equalities(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_element(1, 2.0))
            .unwrap();
        let sol = solve(&prob);
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-7);
        assert_relative_eq!(sol.x[1], 1.0, epsilon = 1e-7);
        // Stationarity: x + ν·1 − z = 0 with z = 0 → ν = −1.
        assert_relative_eq!(sol.nu[0], -1.0, epsilon = 1e-6);
    }

    #[test]
    fn infeasible_is_reported() {
        // x ≥ 1 and x ≤ 0
        let prob = QpProblem::new(DMatrix::from_element(1, 1, 1.0), DVector::zeros(1))
            .unwrap()
            .with_inequalities(
                DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]),
                DVector::from_vec(vec![-1.0, 0.0]),
            )
            .unwrap();
        let sol = solve(&prob);
        assert_eq!(sol.status, QpStatus::Infeasible);
    }

    #[test]
    fn indefinite_is_rejected() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let prob = QpProblem::new(p, DVector::zeros(2)).unwrap();
        assert!(matches!(solve_qp(&prob, 1e-8, 50), Err(AwarError::NotConvex(_))));
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let prob = QpProblem::new(p, DVector::zeros(2)).unwrap();
        assert!(matches!(solve_qp(&prob, 1e-8, 50), Err(AwarError::NotConvex(_))));
    }

    #[test]
    fn semidefinite_gets_ridge() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let prob = QpProblem::new(p, DVector::zeros(2))
            .unwrap()
            .with_inequalities(-DMatrix::identity(2, 2), -DVector::from_element(2, 0.5))
            .unwrap();
        let sol = solve(&prob);
        assert!(sol.ridge > 0.0);
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_relative_eq!(sol.objective, 0.5, epsilon = 1e-6);
    }

    fn random_box_qp(rng: &mut ChaCha8Rng, n: usize) -> QpProblem {
        let r = DMatrix::from_fn(n, n - 1, |_, _| rng.random_range(-1.0..1.0));
        let p = &r * r.transpose();
        let q = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let mut g = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            g[(i, i)] = 1.0;
            g[(n + i, i)] = -1.0;
        }
        QpProblem::new(p, q)
            .unwrap()
            .with_inequalities(g, DVector::from_element(2 * n, 1.0))
            .unwrap()
    }

    /// Projected gradient on the box [-1, 1]^n from several starts.
    fn projected_gradient_oracle(prob: &QpProblem, rng: &mut ChaCha8Rng) -> f64 {
        let n = prob.n();
        let lipschitz = prob.p().symmetric_eigenvalues().max().max(1e-12);
        let mut best = f64::INFINITY;
        for _ in 0..20 {
            let mut x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            for _ in 0..200_000 {
                let grad = prob.p() * &x + prob.q();
                let next = (&x - grad / lipschitz).map(|v| v.clamp(-1.0, 1.0));
                let moved = (&next - &x).amax();
                x = next;
                if moved < 1e-13 {
                    break;
                }
            }
            best = best.min(prob.objective(&x));
        }
        best
    }

    #[test]
    fn box_qp_matches_projected_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let prob = random_box_qp(&mut rng, 5);
            let sol = solve(&prob);
            assert_eq!(sol.status, QpStatus::Optimal);
            let oracle = projected_gradient_oracle(&prob, &mut rng);
            assert!(
                (sol.objective - oracle).abs() <= 1e-6,
                "ipm {} vs oracle {}",
                sol.objective,
                oracle
            );
            assert!(prob.max_violation(&sol.x) <= 1e-8);
        }
    }

    #[test]
    fn objective_scaling_keeps_argmin() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let prob = random_box_qp(&mut rng, 5);
        let scaled = QpProblem::new(prob.p() * 7.5, prob.q() * 7.5)
            .unwrap()
            .with_inequalities(prob.g().clone(), prob.h().clone())
            .unwrap();
        let a = solve(&prob);
        let b = solve(&scaled);
        assert!((a.x - b.x).amax() < 1e-6);
    }

    #[test]
    fn slack_block_is_eliminated() {
        // Linear SVM primal: x = (w, b, ξ); slacks are eliminated.
        let n = 6;
        let mut p = DMatrix::zeros(n + 2, n + 2);
        p[(0, 0)] = 1.0;
        let g = DMatrix::from_fn(2 * n, n + 2, |r, c| {
            if r < n {
                let y = if r % 2 == 0 { 1.0 } else { -1.0 };
                match c {
                    0 => -y * (r as f64 - 2.5),
                    1 => -y,
                    c if c == r + 2 => -1.0,
                    _ => 0.0,
                }
            } else if c == r - n + 2 {
                -1.0
            } else {
                0.0
            }
        });
        let part = partition(&p, &g);
        assert_eq!(part.dense, vec![0, 1]);
        assert_eq!(part.elim.len(), n);
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let prob = random_box_qp(&mut rng, 5);
        let a = solve(&prob);
        let b = solve(&prob);
        assert_eq!(a.x, b.x);
        assert_eq!(a.iterations, b.iterations);
    }
}
