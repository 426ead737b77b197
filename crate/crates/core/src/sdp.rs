//! Dense semidefinite programming in real symmetric standard form, the
//! complex-to-real embedding used to pose Hermitian problems, and rank-one
//! recovery from a relaxed solution.
//!
//! The solver is a primal-dual interior point method with Nesterov–Todd
//! scaling and Mehrotra predictor–corrector steps. Constraint matrices may
//! be given as a dense part plus weighted rank-one terms; the rank-one form
//! makes the Schur complement cheap for the embedded channel matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, CMatrix, CVector, C64, HERMITIAN_TOL};

/// Symmetric matrix `D + Σ c_r u_r u_rᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    dense: Option<DMatrix<f64>>,
    factors: Vec<(f64, DVector<f64>)>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            dense: None,
            factors: Vec::new(),
        }
    }

    pub fn dense(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch("SDP data matrix must be square".into()));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("SDP data matrix"));
        }
        let scale = m.norm().max(1.0);
        if (&m - m.transpose()).norm() > HERMITIAN_TOL * scale {
            return Err(Error::NonHermitian((&m - m.transpose()).norm() / scale));
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(Self {
            dim: sym.nrows(),
            dense: Some(sym),
            factors: Vec::new(),
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            dense: Some(DMatrix::identity(dim, dim)),
            factors: Vec::new(),
        }
    }

    /// Adds `c·u uᵀ`.
    pub fn add_rank_one(&mut self, c: f64, u: DVector<f64>) -> Result<()> {
        if u.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "rank-one factor of length {} for dimension {}",
                u.len(),
                self.dim
            )));
        }
        if !c.is_finite() || u.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("SDP rank-one factor"));
        }
        if c != 0.0 {
            self.factors.push((c, u));
        }
        Ok(())
    }

    /// Adds the embedding of `c·h hᴴ` scaled by one half, so that the trace
    /// pairing with an embedded `F` equals `c·hᴴFh`.
    pub fn add_hermitian_rank_one(&mut self, c: f64, h: &CVector) -> Result<()> {
        let n = h.len();
        if 2 * n != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "complex vector of length {n} for embedded dimension {}",
                self.dim
            )));
        }
        let u = DVector::from_fn(2 * n, |i, _| if i < n { h[i].re } else { h[i - n].im });
        let w = DVector::from_fn(2 * n, |i, _| if i < n { -h[i].im } else { h[i - n].re });
        self.add_rank_one(0.5 * c, u)?;
        self.add_rank_one(0.5 * c, w)
    }

    /// Adds `c·e_i e_iᵀ`.
    pub fn add_diagonal_unit(&mut self, c: f64, i: usize) -> Result<()> {
        let mut e = DVector::zeros(self.dim);
        e[i] = 1.0;
        self.add_rank_one(c, e)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = self.dense.clone().unwrap_or_else(|| DMatrix::zeros(self.dim, self.dim));
        for (c, u) in &self.factors {
            out.ger(*c, u, u, 1.0);
        }
        out
    }

    fn scaled(&self, k: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            dense: self.dense.as_ref().map(|d| d * k),
            factors: self.factors.iter().map(|(c, u)| (c * k, u.clone())).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintKind {
    Equal,
    GreaterEqual,
}

/// `⟨A, X⟩ + Σ g_j·s_j (= or ≥) b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub a: SymMatrix,
    pub scalars: Vec<(usize, f64)>,
    pub b: f64,
    pub kind: ConstraintKind,
}

/// Real symmetric conic program over `X ⪰ 0` and nonnegative scalars `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub dim: usize,
    pub sense: Sense,
    pub objective: SymMatrix,
    /// Linear objective weights on the auxiliary scalars.
    pub objective_scalars: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl SdpProblem {
    pub fn new(dim: usize, sense: Sense, objective: SymMatrix) -> Self {
        Self {
            dim,
            sense,
            objective,
            objective_scalars: Vec::new(),
            constraints: Vec::new(),
        }
    }

    /// Adds a nonnegative scalar with objective weight `weight`; returns its index.
    pub fn add_scalar(&mut self, weight: f64) -> usize {
        self.objective_scalars.push(weight);
        self.objective_scalars.len() - 1
    }

    pub fn num_scalars(&self) -> usize {
        self.objective_scalars.len()
    }

    pub fn add_eq(&mut self, a: SymMatrix, b: f64) {
        self.add_constraint(a, Vec::new(), b, ConstraintKind::Equal);
    }

    pub fn add_geq(&mut self, a: SymMatrix, b: f64) {
        self.add_constraint(a, Vec::new(), b, ConstraintKind::GreaterEqual);
    }

    pub fn add_constraint(&mut self, a: SymMatrix, scalars: Vec<(usize, f64)>, b: f64, kind: ConstraintKind) {
        self.constraints.push(Constraint { a, scalars, b, kind });
    }

    fn validate(&self, max_dim: usize) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::DimensionMismatch("SDP dimension must be positive".into()));
        }
        if self.dim > max_dim {
            return Err(Error::DimensionMismatch(format!(
                "SDP dimension {} exceeds the cap {max_dim}",
                self.dim
            )));
        }
        if self.objective.dim != self.dim {
            return Err(Error::DimensionMismatch("objective matrix dimension".into()));
        }
        if self.objective_scalars.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("objective scalar weights"));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.a.dim != self.dim {
                return Err(Error::DimensionMismatch(format!("constraint {i} matrix dimension")));
            }
            if !c.b.is_finite() {
                return Err(Error::NonFinite("constraint right-hand side"));
            }
            for &(j, g) in &c.scalars {
                if j >= self.num_scalars() {
                    return Err(Error::DimensionMismatch(format!("constraint {i} references scalar {j}")));
                }
                if !g.is_finite() {
                    return Err(Error::NonFinite("constraint scalar coefficient"));
                }
            }
        }
        Ok(())
    }

    /// `⟨A_i, X⟩ + g_iᵀs` for every constraint.
    pub fn constraint_values(&self, x: &DMatrix<f64>, scalars: &[f64]) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|c| {
                let ax = c.a.to_dense().dot(x);
                ax + c.scalars.iter().map(|&(j, g)| g * scalars[j]).sum::<f64>()
            })
            .collect()
    }

    pub fn objective_value(&self, x: &DMatrix<f64>, scalars: &[f64]) -> f64 {
        self.objective.to_dense().dot(x)
            + self
                .objective_scalars
                .iter()
                .zip(scalars)
                .map(|(w, s)| w * s)
                .sum::<f64>()
    }

    /// Residual report for a candidate point.
    pub fn residuals(&self, x: &DMatrix<f64>, scalars: &[f64]) -> Residuals {
        let values = self.constraint_values(x, scalars);
        let mut eq: f64 = 0.0;
        let mut ineq: f64 = 0.0;
        for (c, v) in self.constraints.iter().zip(values) {
            let scale = 1.0 + c.b.abs();
            match c.kind {
                ConstraintKind::Equal => eq = eq.max((v - c.b).abs() / scale),
                ConstraintKind::GreaterEqual => ineq = ineq.max((c.b - v).max(0.0) / scale),
            }
        }
        let min_eig = SymmetricEigen::new(x.clone()).eigenvalues.min();
        let min_scalar = scalars.iter().copied().fold(f64::INFINITY, f64::min);
        Residuals {
            max_eq_residual: eq,
            max_ineq_violation: ineq.max((-min_scalar).max(0.0)),
            min_eigenvalue: min_eig,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `max |⟨A_i,X⟩ − b_i| / (1+|b_i|)` over equalities.
    pub max_eq_residual: f64,
    /// `max (b_j − ⟨A_j,X⟩)₊ / (1+|b_j|)` over inequalities.
    pub max_ineq_violation: f64,
    pub min_eigenvalue: f64,
}

impl Residuals {
    pub const EQ_TOL: f64 = 1e-6;
    pub const PSD_TOL: f64 = -1e-7;

    pub fn clean(&self) -> bool {
        self.max_eq_residual <= Self::EQ_TOL
            && self.max_ineq_violation <= Self::EQ_TOL
            && self.min_eigenvalue >= Self::PSD_TOL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub x: DMatrix<f64>,
    pub scalars: Vec<f64>,
    pub objective_value: f64,
    pub status: SdpStatus,
    pub residuals: Residuals,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_dim: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 200,
            max_dim: 256,
        }
    }
}

/// Boundary for swapping in another conic solver.
pub trait SdpBackend: Send + Sync {
    fn solve(&self, problem: &SdpProblem, options: &SolverOptions) -> Result<SdpSolution>;
}

/// The built-in dense interior point method.
#[derive(Debug, Clone, Copy, Default)]
pub struct InteriorPoint;

impl SdpBackend for InteriorPoint {
    fn solve(&self, problem: &SdpProblem, options: &SolverOptions) -> Result<SdpSolution> {
        solve(problem, options)
    }
}

/// Internal minimization form: `min ⟨C,X⟩ + cᵀs` s.t. `A(X) + G s = b`.
struct Standard {
    n: usize,
    p: usize,
    c: DMatrix<f64>,
    cs: DVector<f64>,
    a_full: Vec<DMatrix<f64>>,
    a_dense: Vec<Option<DMatrix<f64>>>,
    /// Per constraint: (weight, column of `u`).
    a_factors: Vec<Vec<(f64, usize)>>,
    u: DMatrix<f64>,
    g: DMatrix<f64>,
    b: DVector<f64>,
}

impl Standard {
    fn m(&self) -> usize {
        self.b.len()
    }

    fn apply(&self, x: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.m(), self.a_full.iter().map(|a| a.dot(x)))
    }

    fn adjoint(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for (a, &yi) in self.a_full.iter().zip(y.iter()) {
            if yi != 0.0 {
                out += a * yi;
            }
        }
        out
    }

    /// `M_ij = ⟨A_i, W A_j W⟩ + g_iᵀ diag(d) g_j`.
    fn schur(&self, w: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
        let m = self.m();
        let mut out = DMatrix::zeros(m, m);
        if self.u.ncols() > 0 {
            let wu = w * &self.u;
            let gram = self.u.transpose() * &wu;
            for i in 0..m {
                for j in i..m {
                    let mut acc = 0.0;
                    for &(ci, r) in &self.a_factors[i] {
                        for &(cj, s) in &self.a_factors[j] {
                            let p = gram[(r, s)];
                            acc += ci * cj * p * p;
                        }
                    }
                    out[(i, j)] += acc;
                    if i != j {
                        out[(j, i)] += acc;
                    }
                }
            }
            for i in 0..m {
                if let Some(di) = &self.a_dense[i] {
                    for j in 0..m {
                        let mut acc = 0.0;
                        for &(cj, s) in &self.a_factors[j] {
                            let v = wu.column(s);
                            acc += cj * (v.transpose() * di * v)[(0, 0)];
                        }
                        out[(i, j)] += acc;
                    }
                }
            }
        }
        for j in 0..m {
            if let Some(dj) = &self.a_dense[j] {
                let b = w * dj * w;
                for i in 0..m {
                    out[(i, j)] += self.a_full[i].dot(&b);
                }
            }
        }
        let sym = (&out + out.transpose()) * 0.5;
        let gd = DMatrix::from_fn(self.g.nrows(), self.g.ncols(), |i, j| self.g[(i, j)] * d[j]);
        sym + gd * self.g.transpose()
    }
}

/// Outcome of the row presolve.
enum Presolve {
    Keep(Vec<usize>),
    Inconsistent,
}

fn svec(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    let r2 = std::f64::consts::SQRT_2;
    for j in 0..n {
        out.push(a[(j, j)]);
        for i in j + 1..n {
            out.push(r2 * a[(i, j)]);
        }
    }
    out
}

/// Greedy Gram–Schmidt over the constraint rows, carrying `b` along, to drop
/// redundant rows and spot contradictory ones.
fn presolve(rows: &[Vec<f64>], b: &[f64]) -> Presolve {
    let mut basis: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut keep = Vec::new();
    for (idx, (row, &bi)) in rows.iter().zip(b).enumerate() {
        let norm0 = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut r = row.clone();
        let mut rb = bi;
        for _ in 0..2 {
            for (q, qb) in &basis {
                let dot: f64 = r.iter().zip(q).map(|(x, y)| x * y).sum();
                for (x, y) in r.iter_mut().zip(q) {
                    *x -= dot * y;
                }
                rb -= dot * qb;
            }
        }
        let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 1e-10 * norm0.max(1e-300) || norm0 == 0.0 {
            if rb.abs() > 1e-8 * (1.0 + bi.abs()) {
                return Presolve::Inconsistent;
            }
            continue;
        }
        for x in r.iter_mut() {
            *x /= norm;
        }
        basis.push((r, rb / norm));
        keep.push(idx);
    }
    Presolve::Keep(keep)
}

struct Scaling {
    g: DMatrix<f64>,
    g_inv: DMatrix<f64>,
    w: DMatrix<f64>,
    lambda: DVector<f64>,
}

fn nt_scaling(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<Scaling> {
    let lx = x.clone().cholesky()?.unpack();
    let lz = z.clone().cholesky()?.unpack();
    let svd = (lz.transpose() * &lx).svd(true, true);
    let v = svd.v_t.as_ref()?.transpose();
    let sigma = svd.singular_values.clone();
    if sigma.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return None;
    }
    let n = x.nrows();
    let inv_sqrt = DVector::from_iterator(n, sigma.iter().map(|s| 1.0 / s.sqrt()));
    let sqrt = DVector::from_iterator(n, sigma.iter().map(|s| s.sqrt()));
    let g = &lx * &v * DMatrix::from_diagonal(&inv_sqrt);
    let lx_inv = lx.solve_lower_triangular(&DMatrix::identity(n, n))?;
    let g_inv = DMatrix::from_diagonal(&sqrt) * v.transpose() * lx_inv;
    let w = &g * g.transpose();
    Some(Scaling {
        g,
        g_inv,
        w,
        lambda: sigma,
    })
}

/// Largest step in `[0, ∞)` keeping `x + α·dx ⪰ 0`.
fn max_step_psd(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let Some(ch) = x.clone().cholesky() else {
        return 0.0;
    };
    let l = ch.unpack();
    let Some(t) = l.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(m) = l.solve_lower_triangular(&t.transpose()) else {
        return 0.0;
    };
    let sym = (&m + m.transpose()) * 0.5;
    let lmin = SymmetricEigen::new(sym).eigenvalues.min();
    if lmin < 0.0 {
        -1.0 / lmin
    } else {
        f64::INFINITY
    }
}

fn max_step_pos(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&v, &d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

struct Direction {
    dx: DMatrix<f64>,
    dy: DVector<f64>,
    dz: DMatrix<f64>,
    ds: DVector<f64>,
    dzs: DVector<f64>,
}

#[allow(clippy::too_many_arguments)]
fn newton_direction(
    std: &Standard,
    schur: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
    sc: &Scaling,
    rp: &DVector<f64>,
    rd_mat: &DMatrix<f64>,
    rd_vec: &DVector<f64>,
    rx: &DMatrix<f64>,
    s: &DVector<f64>,
    zs: &DVector<f64>,
    r_cs: &DVector<f64>,
) -> Direction {
    let wrw = &sc.w * rd_mat * &sc.w;
    let tmp = DVector::from_iterator(s.len(), (0..s.len()).map(|j| (r_cs[j] - s[j] * rd_vec[j]) / zs[j]));
    let rhs = rp - std.apply(&(rx - &wrw)) - &std.g * &tmp;
    let dy = schur.solve(&rhs);
    let dz = rd_mat - std.adjoint(&dy);
    let dx_raw = rx - &sc.w * &dz * &sc.w;
    let dx = (&dx_raw + dx_raw.transpose()) * 0.5;
    let dzs = rd_vec - std.g.transpose() * &dy;
    let ds = DVector::from_iterator(s.len(), (0..s.len()).map(|j| (r_cs[j] - s[j] * dzs[j]) / zs[j]));
    Direction { dx, dy, dz, ds, dzs }
}

/// Solves `problem` with the built-in interior point method.
pub fn solve(problem: &SdpProblem, options: &SolverOptions) -> Result<SdpSolution> {
    problem.validate(options.max_dim)?;
    let n = problem.dim;
    let sign = match problem.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let q = problem.num_scalars();
    let n_surplus = problem
        .constraints
        .iter()
        .filter(|c| c.kind == ConstraintKind::GreaterEqual)
        .count();
    let p = q + n_surplus;
    let m_all = problem.constraints.len();

    // Raw rows with surplus columns.
    let mut g_all = DMatrix::zeros(m_all, p);
    let mut surplus = q;
    for (i, c) in problem.constraints.iter().enumerate() {
        for &(j, gj) in &c.scalars {
            g_all[(i, j)] += gj;
        }
        if c.kind == ConstraintKind::GreaterEqual {
            g_all[(i, surplus)] = -1.0;
            surplus += 1;
        }
    }
    let dense_all: Vec<DMatrix<f64>> = problem.constraints.iter().map(|c| c.a.to_dense()).collect();
    let b_all: Vec<f64> = problem.constraints.iter().map(|c| c.b).collect();

    // Row equilibration.
    let row_norm: Vec<f64> = (0..m_all)
        .map(|i| {
            let nrm = (dense_all[i].norm_squared() + g_all.row(i).norm_squared()).sqrt();
            if nrm > 0.0 {
                nrm
            } else {
                1.0
            }
        })
        .collect();
    let rows: Vec<Vec<f64>> = (0..m_all)
        .map(|i| {
            let mut r = svec(&dense_all[i]);
            r.extend(g_all.row(i).iter());
            r.iter().map(|x| x / row_norm[i]).collect()
        })
        .collect();
    let b_scaled: Vec<f64> = (0..m_all).map(|i| b_all[i] / row_norm[i]).collect();
    let keep = match presolve(&rows, &b_scaled) {
        Presolve::Keep(k) => k,
        Presolve::Inconsistent => {
            return Ok(infeasible_report(problem, n, q));
        }
    };

    let c_dense = problem.objective.to_dense() * sign;
    let cs_raw = DVector::from_fn(p, |j, _| if j < q { sign * problem.objective_scalars[j] } else { 0.0 });
    let obj_norm = (c_dense.norm_squared() + cs_raw.norm_squared()).sqrt();
    let obj_scale = if obj_norm > 0.0 { obj_norm } else { 1.0 };

    let mut a_full = Vec::new();
    let mut a_dense = Vec::new();
    let mut a_factors = Vec::new();
    let mut u_cols: Vec<DVector<f64>> = Vec::new();
    for &i in &keep {
        let k = 1.0 / row_norm[i];
        let a = problem.constraints[i].a.scaled(k);
        a_full.push(&dense_all[i] * k);
        a_dense.push(a.dense.clone());
        let mut f = Vec::new();
        for (c, u) in a.factors {
            f.push((c, u_cols.len()));
            u_cols.push(u);
        }
        a_factors.push(f);
    }
    let u = if u_cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&u_cols)
    };
    let m = keep.len();
    let g = DMatrix::from_fn(m, p, |r, j| g_all[(keep[r], j)] / row_norm[keep[r]]);
    let b = DVector::from_iterator(m, keep.iter().map(|&i| b_all[i] / row_norm[i]));
    let std = Standard {
        n,
        p,
        c: c_dense / obj_scale,
        cs: cs_raw / obj_scale,
        a_full,
        a_dense,
        a_factors,
        u,
        g,
        b,
    };

    let outcome = interior_point(&std, options);
    let (x, s_all, iterations, status) = outcome;
    let scalars: Vec<f64> = s_all.iter().take(q).copied().collect();
    let residuals = problem.residuals(&x, &scalars);
    let status = match status {
        SdpStatus::Optimal if residuals.clean() => SdpStatus::Optimal,
        SdpStatus::Optimal => SdpStatus::NumericalFailure,
        other => other,
    };
    Ok(SdpSolution {
        objective_value: problem.objective_value(&x, &scalars),
        x,
        scalars,
        status,
        residuals,
        iterations,
    })
}

fn infeasible_report(problem: &SdpProblem, n: usize, q: usize) -> SdpSolution {
    let x = DMatrix::zeros(n, n);
    let scalars = vec![0.0; q];
    SdpSolution {
        objective_value: problem.objective_value(&x, &scalars),
        residuals: problem.residuals(&x, &scalars),
        x,
        scalars,
        status: SdpStatus::Infeasible,
        iterations: 0,
    }
}

fn interior_point(std: &Standard, options: &SolverOptions) -> (DMatrix<f64>, DVector<f64>, usize, SdpStatus) {
    let n = std.n;
    let m = std.m();
    let p = std.p;
    let nf = n as f64;
    let tol = options.tolerance;

    let a_norm_max = std.a_full.iter().map(|a| a.norm()).fold(0.0, f64::max);
    let mut xi: f64 = 10f64.max(nf.sqrt());
    for i in 0..m {
        let an = std.a_full[i].norm() + std.g.row(i).norm();
        xi = xi.max(nf * (1.0 + std.b[i].abs()) / (1.0 + an));
    }
    let eta = 10f64.max(nf.sqrt()).max(std.c.norm()).max(a_norm_max).max(std.cs.amax());
    let mut x = DMatrix::identity(n, n) * xi;
    let mut z = DMatrix::identity(n, n) * eta;
    let mut s = DVector::from_element(p, xi);
    let mut zs = DVector::from_element(p, eta);
    let mut y = DVector::zeros(m);

    let b_norm = std.b.norm();
    let c_norm = (std.c.norm_squared() + std.cs.norm_squared()).sqrt();
    let dof = (n + p) as f64;

    let mut best: Option<(f64, DMatrix<f64>, DVector<f64>)> = None;
    for it in 0..options.max_iterations {
        let rp = &std.b - std.apply(&x) - &std.g * &s;
        let aty = std.adjoint(&y);
        let rd_mat = &std.c - &aty - &z;
        let rd_vec = &std.cs - std.g.transpose() * &y - &zs;
        let pobj = std.c.dot(&x) + std.cs.dot(&s);
        let dobj = std.b.dot(&y);
        let mu = (x.dot(&z) + s.dot(&zs)) / dof;
        let pinf = rp.norm() / (1.0 + b_norm);
        let dinf = (rd_mat.norm() + rd_vec.norm()) / (1.0 + c_norm);
        let gap = (pobj - dobj).abs().max(dof * mu) / (1.0 + pobj.abs() + dobj.abs());

        let merit = pinf.max(dinf).max(gap);
        if best.as_ref().is_none_or(|(b, _, _)| merit < *b) {
            best = Some((merit, x.clone(), s.clone()));
        }
        if pinf <= tol && dinf <= tol && gap <= tol {
            return (x, s, it, SdpStatus::Optimal);
        }
        // Farkas certificate for primal infeasibility.
        if dobj > 0.0 {
            let drift = ((&std.c - &rd_mat).norm() + (&std.cs - &rd_vec).norm()) / dobj;
            if drift <= tol.max(1e-8) && pinf > tol {
                return (x, s, it, SdpStatus::Infeasible);
            }
        }

        let Some(sc) = nt_scaling(&x, &z) else {
            break;
        };
        let d = DVector::from_iterator(p, (0..p).map(|j| s[j] / zs[j]));
        let schur_m = std.schur(&sc.w, &d);
        let trace = schur_m.trace().abs().max(1e-300);
        let schur = match schur_m.clone().cholesky() {
            Some(c) => c,
            None => {
                let mut reg = schur_m.clone();
                for i in 0..m {
                    reg[(i, i)] += 1e-14 * trace;
                }
                match reg.cholesky() {
                    Some(c) => c,
                    None => break,
                }
            }
        };

        // Predictor.
        let rx_aff = -&x;
        let rcs_aff = -s.component_mul(&zs);
        let aff = newton_direction(std, &schur, &sc, &rp, &rd_mat, &rd_vec, &rx_aff, &s, &zs, &rcs_aff);
        let ap_aff = max_step_psd(&x, &aff.dx).min(max_step_pos(&s, &aff.ds)).min(1.0);
        let ad_aff = max_step_psd(&z, &aff.dz).min(max_step_pos(&zs, &aff.dzs)).min(1.0);
        let x_aff = &x + &aff.dx * ap_aff;
        let z_aff = &z + &aff.dz * ad_aff;
        let s_aff = &s + &aff.ds * ap_aff;
        let zs_aff = &zs + &aff.dzs * ad_aff;
        let mu_aff = (x_aff.dot(&z_aff) + s_aff.dot(&zs_aff)) / dof;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let dx_t = &sc.g_inv * &aff.dx * sc.g_inv.transpose();
        let dz_t = sc.g.transpose() * &aff.dz * &sc.g;
        let prod = &dx_t * &dz_t;
        let lam = &sc.lambda;
        let mut dt = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut r = -0.5 * (prod[(i, j)] + prod[(j, i)]);
                if i == j {
                    r += sigma * mu - lam[i] * lam[i];
                }
                dt[(i, j)] = 2.0 * r / (lam[i] + lam[j]);
            }
        }
        let rx = &sc.g * dt * sc.g.transpose();
        let rx = (&rx + rx.transpose()) * 0.5;
        let rcs = DVector::from_iterator(
            p,
            (0..p).map(|j| sigma * mu - s[j] * zs[j] - aff.ds[j] * aff.dzs[j]),
        );
        let dir = newton_direction(std, &schur, &sc, &rp, &rd_mat, &rd_vec, &rx, &s, &zs, &rcs);

        let gamma = 0.98;
        let ap = (gamma * max_step_psd(&x, &dir.dx).min(max_step_pos(&s, &dir.ds))).min(1.0);
        let ad = (gamma * max_step_psd(&z, &dir.dz).min(max_step_pos(&zs, &dir.dzs))).min(1.0);
        if !(ap > 0.0 && ad > 0.0) || !ap.is_finite() || !ad.is_finite() {
            break;
        }
        x += &dir.dx * ap;
        x = (&x + x.transpose()) * 0.5;
        s += &dir.ds * ap;
        y += &dir.dy * ad;
        z += &dir.dz * ad;
        z = (&z + z.transpose()) * 0.5;
        zs += &dir.dzs * ad;
        if x.iter().chain(z.iter()).any(|v| !v.is_finite()) {
            break;
        }
    }
    let (_, bx, bs) = best.expect("at least one iterate");
    (bx, bs, options.max_iterations, SdpStatus::NumericalFailure)
}

/// `[[Re H, −Im H], [Im H, Re H]]`.
pub fn embed_complex(h: &CMatrix) -> Result<DMatrix<f64>> {
    let h = h.symmetrized()?;
    let n = h.rows();
    Ok(DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let (bi, ii) = (i / n, i % n);
        let (bj, jj) = (j / n, j % n);
        let v = h.get(ii, jj);
        match (bi, bj) {
            (0, 0) | (1, 1) => v.re,
            (0, 1) => -v.im,
            _ => v.im,
        }
    }))
}

/// Inverse of [`embed_complex`], averaging the two copies of each block so
/// that any real symmetric PSD input yields a Hermitian PSD output.
pub fn de_embed(x: &DMatrix<f64>) -> Result<CMatrix> {
    let size = x.nrows();
    if size % 2 != 0 || x.ncols() != size {
        return Err(Error::DimensionMismatch("embedded matrix must be square of even size".into()));
    }
    let n = size / 2;
    Ok(CMatrix::from_fn(n, n, |i, j| {
        let re = 0.5 * (x[(i, j)] + x[(i + n, j + n)]);
        let im = 0.5 * (x[(i + n, j)] - x[(i, j + n)]);
        C64::new(re, im)
    }))
}

/// Structural constraint enforced on recovered vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    /// `‖f‖ = 1`.
    UnitNorm,
    /// `|v_m| = 1`.
    UnitModulus,
}

impl Projection {
    pub fn apply(self, x: &CVector) -> CVector {
        match self {
            Projection::UnitNorm => x.normalized().unwrap_or_else(|| {
                let mut e = vec![C64::new(0.0, 0.0); x.len()];
                if let Some(first) = e.first_mut() {
                    *first = C64::new(1.0, 0.0);
                }
                CVector::from_vec(e)
            }),
            Projection::UnitModulus => x.unit_modulus(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RecoveryMode {
    /// Principal eigenvector when its mass clears the threshold, otherwise
    /// Gaussian randomization with `draws` samples.
    Eigen { threshold: f64, draws: usize },
    /// Always randomize.
    Randomize(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recovered {
    pub vector: CVector,
    /// Score returned by the feasibility callback for `vector`.
    pub score: f64,
    pub from_eigenvector: bool,
    /// `λ₁/Σλ` of the relaxed solution.
    pub eigen_mass: f64,
    pub candidates: usize,
}

/// Extracts a structured vector from a relaxed Hermitian PSD solution.
///
/// `check` returns `Some(score)` for a feasible candidate (larger is better)
/// and `None` otherwise.
pub fn rank_one_recover<R, F>(
    x: &CMatrix,
    mode: RecoveryMode,
    projection: Projection,
    rng: &mut R,
    mut check: F,
) -> Result<Recovered>
where
    R: Rng + ?Sized,
    F: FnMut(&CVector) -> Option<f64>,
{
    let eig = hermitian_eig(x)?;
    let n = x.rows();
    let clipped: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let mass = if total > 0.0 { clipped[0] / total } else { 0.0 };
    let principal = eig.eigenvectors.column(0).scale(C64::new(clipped[0].sqrt(), 0.0));

    let (threshold, draws) = match mode {
        RecoveryMode::Eigen { threshold, draws } => (threshold, draws),
        RecoveryMode::Randomize(l) => (f64::INFINITY, l),
    };
    let mut best: Option<(f64, CVector, bool)> = None;
    let mut tried = 0;
    let mut consider = |cand: CVector, eigen: bool, best: &mut Option<(f64, CVector, bool)>| {
        if let Some(score) = check(&cand) {
            if score.is_finite() && best.as_ref().is_none_or(|(b, _, _)| score > *b) {
                *best = Some((score, cand, eigen));
            }
        }
    };
    let eigen_cand = projection.apply(&principal);
    tried += 1;
    consider(eigen_cand, true, &mut best);
    if mass >= threshold && best.is_some() {
        let (score, vector, _) = best.expect("checked");
        return Ok(Recovered {
            vector,
            score,
            from_eigenvector: true,
            eigen_mass: mass,
            candidates: tried,
        });
    }

    // Samples ξ = U Λ^{1/2} z with z ~ CN(0, I).
    let factors: Vec<CVector> = (0..n)
        .filter(|&i| clipped[i] > 0.0)
        .map(|i| eig.eigenvectors.column(i).scale(C64::new(clipped[i].sqrt(), 0.0)))
        .collect();
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    for _ in 0..draws {
        let mut acc = vec![C64::new(0.0, 0.0); n];
        for f in &factors {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let zc = C64::new(re * inv_sqrt2, im * inv_sqrt2);
            for (a, v) in acc.iter_mut().zip(f.iter()) {
                *a += v * zc;
            }
        }
        let cand = projection.apply(&CVector::from_vec(acc));
        tried += 1;
        consider(cand, false, &mut best);
    }
    match best {
        Some((score, vector, eigen)) => Ok(Recovered {
            vector,
            score,
            from_eigenvector: eigen,
            eigen_mass: mass,
            candidates: tried,
        }),
        None => Err(Error::RecoveryFailed { candidates: tried }),
    }
}
