//! Damped Newton for the ε-regularized Neumann problem
//!
//! ```text
//! G(D²u, x) = α_{k-1}(x)   in Ω,
//! u_ν = −ε u + φ(x)         on ∂Ω,
//! ```
//!
//! and the ε → 0 continuation that recovers the constant `c` and the
//! zero-mean solution `v` of `u_ν = c + φ`.
//!
//! The unknowns are kept split as `u = v − c/ε` with `mean(v) = 0`, so `c` is
//! `−ε·mean(u)` by construction. The split keeps every stored value O(1) as ε
//! shrinks; difference quotients of `u` itself would lose digits to the
//! `c/ε` offset.

use std::sync::Arc;

use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};
use serde::Serialize;
use thiserror::Error;

use crate::exprs::{EvalError, ScalarField};
use crate::grid::{Grid, GridError, Role};
use crate::hessop::{g_lambda, spectral, CoefficientSample, HessopError, SymmetricMatrix};
use crate::symfun::{binomial, in_cone_tol, ConeLevel};
use crate::verify::{self, AuditReport};

/// Spatial dimension of the discretized problem.
pub const DIM: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid problem: {0}")]
    BadProblem(String),
    #[error("ε must be positive, got {0}")]
    BadEps(f64),
    #[error("starting point is not {k}-admissible at ({x:.4}, {y:.4})")]
    InadmissibleStart { x: f64, y: f64, k: usize },
    #[error("ε = {eps:e}: line search stalled at iteration {iteration} with ‖F‖∞ = {residual:e}")]
    LineSearchStall { eps: f64, iteration: usize, residual: f64 },
    #[error("ε = {eps:e}: no convergence in {iterations} iterations, ‖F‖∞ = {residual:e}")]
    MaxIters { eps: f64, iterations: usize, residual: f64 },
    #[error("ε = {eps:e}: linear solve failed: {message}")]
    LinearSolve { eps: f64, message: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("evaluating data at ({x:.4}, {y:.4}): {source}")]
    Data { x: f64, y: f64, source: EvalError },
    #[error(transparent)]
    Operator(#[from] HessopError),
}

/// Coefficients `α_0 … α_{k-1}` and boundary data `φ` as fields.
#[derive(Clone)]
pub struct CoefficientField {
    pub alpha: Vec<Arc<dyn ScalarField>>,
    pub phi: Arc<dyn ScalarField>,
}

impl CoefficientField {
    pub fn constant(alpha: &[f64], phi: f64) -> Self {
        Self {
            alpha: alpha.iter().map(|&a| Arc::new(a) as Arc<dyn ScalarField>).collect(),
            phi: Arc::new(phi),
        }
    }
}

/// The discrete problem: a grid plus data sampled on it.
pub struct Problem<'g> {
    grid: &'g Grid,
    k: usize,
    /// per interior node
    alpha: Vec<CoefficientSample>,
    /// per boundary node, at its projection point
    phi: Vec<f64>,
    alpha_sup: Vec<f64>,
    alpha_inf: Vec<f64>,
    phi_abs_max: f64,
}

impl<'g> Problem<'g> {
    /// Samples the data and rejects it unless `2 ≤ k ≤ 2`, there are exactly
    /// `k` coefficients and each is strictly positive at every unknown node and
    /// every boundary projection point.
    pub fn new(grid: &'g Grid, k: usize, field: &CoefficientField) -> Result<Self, SolverError> {
        if !(2..=DIM).contains(&k) {
            return Err(SolverError::BadProblem(format!("k = {k} must satisfy 2 ≤ k ≤ {DIM}")));
        }
        if field.alpha.len() != k {
            return Err(SolverError::BadProblem(format!(
                "expected {k} coefficients α_0..α_{}, got {}",
                k - 1,
                field.alpha.len()
            )));
        }
        let eval = |f: &dyn ScalarField, p: [f64; 2]| {
            f.value(p).map_err(|source| SolverError::Data { x: p[0], y: p[1], source })
        };
        let mut alpha_sup = vec![f64::NEG_INFINITY; k];
        let mut alpha_inf = vec![f64::INFINITY; k];
        let boundary_points = grid.boundary().iter().map(|b| b.point);
        for p in grid.unknown_points().chain(boundary_points) {
            for (l, f) in field.alpha.iter().enumerate() {
                let a = eval(f.as_ref(), p)?;
                if !(a > 0.0) {
                    return Err(SolverError::BadProblem(format!(
                        "α_{l} = {a} is not positive at ({:.4}, {:.4})",
                        p[0], p[1]
                    )));
                }
                alpha_sup[l] = alpha_sup[l].max(a);
                alpha_inf[l] = alpha_inf[l].min(a);
            }
        }
        let mut alpha = Vec::with_capacity(grid.interior().len());
        for node in grid.interior() {
            let p = grid.point_of_unknown(node.unknown);
            let a: Vec<f64> = field.alpha.iter().map(|f| eval(f.as_ref(), p)).collect::<Result<_, _>>()?;
            alpha.push(CoefficientSample::new(&a)?);
        }
        let phi: Vec<f64> =
            grid.boundary().iter().map(|b| eval(field.phi.as_ref(), b.point)).collect::<Result<_, _>>()?;
        let phi_abs_max = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Self { grid, k, alpha, phi, alpha_sup, alpha_inf, phi_abs_max })
    }

    pub fn grid(&self) -> &'g Grid {
        self.grid
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn alpha_at(&self, interior: usize) -> &CoefficientSample {
        &self.alpha[interior]
    }

    pub fn phi_at(&self, boundary: usize) -> f64 {
        self.phi[boundary]
    }

    pub fn alpha_sup(&self) -> &[f64] {
        &self.alpha_sup
    }

    pub fn alpha_inf(&self) -> &[f64] {
        &self.alpha_inf
    }

    pub fn phi_abs_max(&self) -> f64 {
        self.phi_abs_max
    }

    /// Same problem with `φ` replaced by `φ + shift`.
    pub fn with_phi_shift(&self, shift: f64) -> Problem<'g> {
        Problem {
            grid: self.grid,
            k: self.k,
            alpha: self.alpha.clone(),
            phi: self.phi.iter().map(|p| p + shift).collect(),
            alpha_sup: self.alpha_sup.clone(),
            alpha_inf: self.alpha_inf.clone(),
            phi_abs_max: self.phi.iter().fold(0.0f64, |m, v| m.max((v + shift).abs())),
        }
    }
}

/// A grid function `u = v − c/ε` with `mean(v) = 0`, plus per-interior-node
/// Hessians, admissibility flags and equation residuals.
#[derive(Debug, Clone, Serialize)]
pub struct DiscreteState {
    /// ε of the problem this state belongs to; 0 for a bare starting point
    pub eps: f64,
    /// `−ε·mean(u)`
    pub c: f64,
    /// `u − mean(u)`, one value per unknown
    pub v: Vec<f64>,
    pub hessians: Vec<SymmetricMatrix>,
    pub admissible: Vec<bool>,
    /// `G(D²u) − α_{k-1}` per interior node, `D_ν u + εu − φ` per boundary node
    pub residual: Vec<f64>,
}

impl DiscreteState {
    /// The grid function `u` itself.
    pub fn u(&self) -> Vec<f64> {
        let offset = if self.eps > 0.0 { self.c / self.eps } else { 0.0 };
        self.v.iter().map(|v| v - offset).collect()
    }

    /// `sup |ε u|`.
    pub fn sup_eps_u(&self) -> f64 {
        self.v.iter().fold(0.0f64, |m, v| m.max((self.eps * v - self.c).abs()))
    }

    pub fn residual_inf(&self) -> f64 {
        self.residual.iter().fold(0.0f64, |m, r| m.max(r.abs()))
    }
}

/// `A` with `G(D²(A|x|²)) ≥ sup α_{k-1}` for coefficients bounded by
/// `sup_alpha`: the root of
/// `2A C_n^k/C_n^{k-1} − Σ_{l≤k-2} sup α_l (2A)^{-(k-1-l)} C_n^l/C_n^{k-1} = sup α_{k-1}`.
/// The left side is increasing in `A`, so the root is unique.
pub fn comparison_coefficient(n: usize, k: usize, sup_alpha: &[f64]) -> f64 {
    let c = |m: usize| binomial(n as u64, m as u64) as f64;
    let target = sup_alpha[k - 1];
    let f = |a: f64| {
        let mut v = 2.0 * a * c(k) / c(k - 1);
        for (l, al) in sup_alpha.iter().enumerate().take(k - 1) {
            v -= al * (2.0 * a).powi(-((k - 1 - l) as i32)) * c(l) / c(k - 1);
        }
        v
    };
    let mut hi = 1.0;
    while f(hi) < target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // `hi` always satisfies f(hi) ≥ target
    hi
}

/// The admissible quadratic `A|x − x_c|²` about the domain center, with `A`
/// from [`comparison_coefficient`] using the sampled sup-norms of the data.
pub fn initial_guess(problem: &Problem<'_>) -> DiscreteState {
    let a = comparison_coefficient(DIM, problem.k, &problem.alpha_sup);
    quadratic_start(problem, a)
}

/// `A|x − x_c|²` as a bare starting point.
pub fn quadratic_start(problem: &Problem<'_>, a: f64) -> DiscreteState {
    let grid = problem.grid;
    let xc = grid.spec().center;
    let u: Vec<f64> =
        grid.unknown_points().map(|p| a * ((p[0] - xc[0]).powi(2) + (p[1] - xc[1]).powi(2))).collect();
    let mean = grid.mean(&u);
    DiscreteState {
        eps: 0.0,
        c: 0.0,
        v: u.iter().map(|x| x - mean).collect(),
        hessians: Vec::new(),
        admissible: Vec::new(),
        residual: Vec::new(),
    }
}

/// `G(W, α) − α_{k-1}`.
pub fn pointwise_residual(w: &SymmetricMatrix, alpha: &CoefficientSample) -> Result<f64, HessopError> {
    Ok(g_lambda(&spectral(w).eigenvalues, alpha)?.g - alpha.rhs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NewtonSettings {
    pub max_iter: usize,
    /// `‖F‖∞` target
    pub tol_res: f64,
    /// stop when a full step changes no unknown by more than this
    pub tol_step: f64,
    /// admissibility margin enforced on accepted iterates
    pub tau_safety: f64,
    /// smallest damping factor tried by the line search
    pub min_damping: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self { max_iter: 50, tol_res: 1e-9, tol_step: 1e-14, tau_safety: 1e-12, min_damping: 2f64.powi(-20) }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct NewtonStats {
    pub iterations: usize,
    /// `‖F‖∞` at the start and after each accepted step
    pub residual_history: Vec<f64>,
    /// damping factor of each accepted step
    pub damping: Vec<f64>,
    /// worst relative residual of the linear solves
    pub linear_residual: f64,
}

impl NewtonStats {
    /// Ratios `‖F_{j+1}‖/‖F_j‖` over the last (up to) three accepted steps.
    pub fn tail_ratios(&self) -> Vec<f64> {
        let h = &self.residual_history;
        let start = h.len().saturating_sub(4);
        h[start..].windows(2).map(|w| w[1] / w[0]).collect()
    }
}

const GAUGE_NODE: usize = 0;

/// Linear solves must reach this relative residual.
pub const LINEAR_TOL: f64 = 1e-12;

struct Evaluation {
    /// interior and boundary rows in unknown order, then the gauge row (always 0)
    residual: Vec<f64>,
    hessians: Vec<SymmetricMatrix>,
    /// `G^{ij}` per interior node, when requested
    gradients: Vec<SymmetricMatrix>,
}

fn evaluate(
    problem: &Problem<'_>,
    eps: f64,
    c: f64,
    v: &[f64],
    tau: f64,
    with_gradients: bool,
) -> Result<Evaluation, usize> {
    let grid = problem.grid;
    let n = grid.num_unknowns();
    let level = ConeLevel::new(problem.k, DIM).expect("k validated");
    let mut residual = vec![0.0; n + 1];
    let mut hessians = Vec::with_capacity(grid.interior().len());
    let mut gradients = Vec::with_capacity(if with_gradients { grid.interior().len() } else { 0 });
    for (i, node) in grid.interior().iter().enumerate() {
        let w = grid.hessian_at(v, node);
        let dec = spectral(&w);
        if !in_cone_tol(&dec.eigenvalues, level, tau) {
            return Err(i);
        }
        let alpha = &problem.alpha[i];
        let d = g_lambda(&dec.eigenvalues, alpha).map_err(|_| i)?;
        residual[node.unknown] = d.g - alpha.rhs();
        hessians.push(w);
        if with_gradients {
            gradients.push(dec.reassemble(&d.dg[..DIM]));
        }
    }
    for (b, node) in grid.boundary().iter().enumerate() {
        residual[node.unknown] = node.normal_derivative(v) + eps * node.boundary_value(v) - c - problem.phi[b];
    }
    Ok(Evaluation { residual, hessians, gradients })
}

fn inf_norm(r: &[f64]) -> f64 {
    r.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn two_norm(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Row-major sparse Jacobian in the `(v, c)` unknowns, rows already scaled.
struct Jacobian {
    rows: Vec<Vec<(usize, f64)>>,
    scale: Vec<f64>,
}

fn assemble(problem: &Problem<'_>, eps: f64, eval: &Evaluation) -> Jacobian {
    let grid = problem.grid;
    let n = grid.num_unknowns();
    let h2 = grid.h() * grid.h();
    let mut rows = vec![Vec::new(); n + 1];
    let mut scale = vec![1.0; n + 1];
    for (node, g) in grid.interior().iter().zip(&eval.gradients) {
        let (gxx, gxy, gyy) = (g.get(0, 0), g.get(0, 1), g.get(1, 1));
        let s = 1.0 / (gxx + gyy);
        let nb = node.neighbours;
        let cross = 2.0 * gxy / (4.0 * h2);
        let mut row = vec![
            (node.unknown, -2.0 * (gxx + gyy) / h2),
            (nb[0], gxx / h2),
            (nb[1], gxx / h2),
            (nb[2], gyy / h2),
            (nb[3], gyy / h2),
            (nb[4], cross),
            (nb[5], -cross),
            (nb[6], -cross),
            (nb[7], cross),
        ];
        for e in &mut row {
            e.1 *= s;
        }
        scale[node.unknown] = s;
        rows[node.unknown] = row;
    }
    for b in grid.boundary() {
        let mut row: Vec<(usize, f64)> = b.deriv_weights.clone();
        for &(m, w) in &b.value_weights {
            match row.binary_search_by_key(&m, |e| e.0) {
                Ok(pos) => row[pos].1 += eps * w,
                Err(pos) => row.insert(pos, (m, eps * w)),
            }
        }
        row.push((n, -1.0));
        rows[b.unknown] = row;
    }
    // (v + s, c + εs) is the same u; pinning one value fixes s during the
    // iteration and keeps the matrix sparse
    rows[n] = vec![(GAUGE_NODE, 1.0)];
    Jacobian { rows, scale }
}

impl Jacobian {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().map(|&(m, w)| w * x[m]).sum()).collect()
    }

    /// Solves `J x = rhs` (unscaled right-hand side) by sparse LU with up to
    /// three rounds of iterative refinement. Returns `(x, relative residual)`.
    fn solve(&self, rhs: &[f64]) -> Result<(Vec<f64>, f64), String> {
        let dim = self.rows.len();
        let mut triplets = Vec::with_capacity(self.rows.iter().map(Vec::len).sum());
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, w) in row {
                triplets.push(Triplet::new(r, c, w));
            }
        }
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(dim, dim, &triplets)
            .map_err(|e| format!("assembly: {e:?}"))?;
        let lu = mat.sp_lu().map_err(|e| format!("factorization: {e:?}"))?;
        let b: Vec<f64> = rhs.iter().zip(&self.scale).map(|(r, s)| r * s).collect();
        let bnorm = two_norm(&b);
        if bnorm == 0.0 {
            return Ok((vec![0.0; dim], 0.0));
        }
        let solve = |r: &[f64]| {
            let col = faer::Col::<f64>::from_fn(dim, |i| r[i]);
            let x = lu.solve(&col);
            (0..dim).map(|i| x[i]).collect::<Vec<f64>>()
        };
        let mut x = solve(&b);
        let mut rel = f64::INFINITY;
        for _ in 0..4 {
            let ax = self.apply(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
            rel = two_norm(&r) / bnorm;
            if rel <= LINEAR_TOL {
                break;
            }
            let dx = solve(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }
        if !rel.is_finite() || rel > LINEAR_TOL {
            return Err(format!("relative residual {rel:e} above {LINEAR_TOL:e}"));
        }
        Ok((x, rel))
    }
}

/// Damped Newton for the ε-problem from an admissible starting point. Steps
/// are halved until every interior node stays in `Γ_k` with margin
/// `tau_safety` and the residual 2-norm decreases.
pub fn newton_solve(
    problem: &Problem<'_>,
    eps: f64,
    start: &DiscreteState,
    settings: &NewtonSettings,
) -> Result<(DiscreteState, NewtonStats), SolverError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(SolverError::BadEps(eps));
    }
    let grid = problem.grid;
    let n = grid.num_unknowns();
    if start.v.len() != n {
        return Err(SolverError::BadProblem(format!(
            "starting point has {} values, grid has {n} unknowns",
            start.v.len()
        )));
    }
    let mut v = start.v.clone();
    let mut c = start.c;
    let mut eval = evaluate(problem, eps, c, &v, settings.tau_safety, true).map_err(|i| {
        let p = grid.point_of_unknown(grid.interior()[i].unknown);
        SolverError::InadmissibleStart { x: p[0], y: p[1], k: problem.k }
    })?;
    let mut stats = NewtonStats::default();
    let mut res_inf = inf_norm(&eval.residual);
    stats.residual_history.push(res_inf);
    loop {
        if res_inf <= settings.tol_res {
            break;
        }
        if stats.iterations >= settings.max_iter {
            return Err(SolverError::MaxIters { eps, iterations: stats.iterations, residual: res_inf });
        }
        let jac = assemble(problem, eps, &eval);
        let rhs: Vec<f64> = eval.residual.iter().map(|r| -r).collect();
        let (delta, rel) = jac.solve(&rhs).map_err(|message| SolverError::LinearSolve { eps, message })?;
        stats.linear_residual = stats.linear_residual.max(rel);
        let res_two = two_norm(&eval.residual);
        let mut theta = 1.0;
        let accepted = loop {
            let trial_v: Vec<f64> = v.iter().zip(&delta).map(|(x, d)| x + theta * d).collect();
            let trial_c = c + theta * delta[n];
            if let Ok(trial) = evaluate(problem, eps, trial_c, &trial_v, settings.tau_safety, true) {
                if two_norm(&trial.residual) < res_two {
                    break Some((trial_v, trial_c, trial));
                }
            }
            theta *= 0.5;
            if theta < settings.min_damping {
                break None;
            }
        };
        let Some((new_v, new_c, new_eval)) = accepted else {
            return Err(SolverError::LineSearchStall { eps, iteration: stats.iterations, residual: res_inf });
        };
        let step = theta * inf_norm(&delta);
        v = new_v;
        c = new_c;
        eval = new_eval;
        res_inf = inf_norm(&eval.residual);
        stats.iterations += 1;
        stats.residual_history.push(res_inf);
        stats.damping.push(theta);
        if step <= settings.tol_step && res_inf <= 10.0 * settings.tol_res {
            break;
        }
    }
    let shift = grid.mean(&v);
    for x in &mut v {
        *x -= shift;
    }
    let state = DiscreteState {
        eps,
        c: c - eps * shift,
        admissible: vec![true; eval.hessians.len()],
        hessians: eval.hessians,
        residual: eval.residual[..n].to_vec(),
        v,
    };
    Ok((state, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsSchedule {
    pub eps0: f64,
    pub ratio: f64,
    pub eps_min: f64,
    pub newton: NewtonSettings,
}

impl Default for EpsSchedule {
    fn default() -> Self {
        Self { eps0: 0.1, ratio: 0.5, eps_min: 1e-4, newton: NewtonSettings::default() }
    }
}

impl EpsSchedule {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.eps0 > self.eps_min && self.eps_min > 0.0 && self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(SolverError::BadProblem(format!(
                "schedule needs ε_0 > ε_min > 0 and ratio in (0, 1), got ε_0 = {}, ε_min = {}, ratio = {}",
                self.eps0, self.eps_min, self.ratio
            )));
        }
        Ok(())
    }

    /// `ε_0, ε_0 r, ε_0 r², …` down to `ε_min`, which is always the last level.
    pub fn levels(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut e = self.eps0;
        while e > self.eps_min * (1.0 + 1e-9) {
            out.push(e);
            e *= self.ratio;
        }
        out.push(self.eps_min);
        out
    }
}

/// Outcome of one ε level.
#[derive(Debug, Clone, Serialize)]
pub struct EpsPathRecord {
    pub eps: f64,
    pub state: DiscreteState,
    pub c_est: f64,
    pub stats: NewtonStats,
    pub sup_eps_u: f64,
    /// `sup |Du^ε|` over interior nodes
    pub sup_grad: f64,
    /// `sup ‖D²u^ε‖₂` over interior nodes
    pub sup_hessian: f64,
    pub audit: Option<AuditReport>,
}

/// `c` and the zero-mean solution `v` of the limit problem.
#[derive(Debug, Clone, Serialize)]
pub struct LimitSolution {
    pub c: f64,
    pub v: Vec<f64>,
    /// `c_est` at the last level, before extrapolation
    pub c_last: f64,
    /// `max |G(D²v) − α_{k-1}|` over interior nodes
    pub interior_residual: f64,
    /// `max |D_ν v − c − φ|` over boundary nodes
    pub boundary_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuationResult {
    pub records: Vec<EpsPathRecord>,
    pub limit: LimitSolution,
    /// `max_j |c_est(ε_j) − c_est(ε_{j+1})|`
    pub cauchy: f64,
    /// successive differences `|c_est(ε_j) − c_est(ε_{j+1})|`
    pub cauchy_steps: Vec<f64>,
    /// `max_j sup |Du^{ε_j}|`
    pub sup_grad: f64,
}

pub fn sup_gradient(grid: &Grid, v: &[f64]) -> f64 {
    grid.interior().iter().fold(0.0f64, |m, n| {
        let g = grid.gradient_at(v, n);
        m.max(g[0].hypot(g[1]))
    })
}

/// Largest spectral norm of the interior Hessians.
pub fn sup_hessian(hessians: &[SymmetricMatrix]) -> f64 {
    hessians.iter().fold(0.0f64, |m, w| {
        let e = spectral(w).eigenvalues;
        m.max(e.as_slice().iter().fold(0.0f64, |a, x| a.max(x.abs())))
    })
}

/// Solves the ε-problem along the schedule, warm-starting each level from the
/// previous one, and extrapolates `c` and `v` to ε = 0 from the last two
/// levels assuming an `O(ε)` error. With `audit` set every record carries its
/// C⁰ and lemma audits.
pub fn continuation(
    problem: &Problem<'_>,
    schedule: &EpsSchedule,
    start: &DiscreteState,
    audit: bool,
) -> Result<ContinuationResult, SolverError> {
    schedule.validate()?;
    let grid = problem.grid;
    let mut records: Vec<EpsPathRecord> = Vec::new();
    let mut current = start.clone();
    for eps in schedule.levels() {
        // keep u fixed across the change of ε: c scales with ε
        if current.eps > 0.0 {
            current.c *= eps / current.eps;
        }
        let (state, stats) = newton_solve(problem, eps, &current, &schedule.newton)?;
        let audit = audit.then(|| {
            let mut rep = AuditReport::default();
            rep.entries.push(verify::c0_bound_audit(&state, problem));
            rep.entries.extend(verify::lemma_audits(&state, problem));
            rep
        });
        records.push(EpsPathRecord {
            eps,
            c_est: state.c,
            sup_eps_u: state.sup_eps_u(),
            sup_grad: sup_gradient(grid, &state.v),
            sup_hessian: sup_hessian(&state.hessians),
            stats,
            audit,
            state: state.clone(),
        });
        current = state;
    }
    let cauchy_steps: Vec<f64> = records.windows(2).map(|w| (w[0].c_est - w[1].c_est).abs()).collect();
    let cauchy = cauchy_steps.iter().fold(0.0f64, |m, d| m.max(*d));
    let sup_grad = records.iter().fold(0.0f64, |m, r| m.max(r.sup_grad));
    let limit = extrapolate(problem, &records);
    Ok(ContinuationResult { records, limit, cauchy, cauchy_steps, sup_grad })
}

fn extrapolate(problem: &Problem<'_>, records: &[EpsPathRecord]) -> LimitSolution {
    let grid = problem.grid;
    let last = records.last().expect("at least one level");
    let (c, mut v) = match records.len() {
        1 => (last.c_est, last.state.v.clone()),
        len => {
            let a = &records[len - 2];
            let (ea, eb) = (a.eps, last.eps);
            let wa = -eb / (ea - eb);
            let wb = ea / (ea - eb);
            let v = a.state.v.iter().zip(&last.state.v).map(|(va, vb)| wa * va + wb * vb).collect();
            (wa * a.c_est + wb * last.c_est, v)
        }
    };
    let mean = grid.mean(&v);
    for x in &mut v {
        *x -= mean;
    }
    let mut interior_residual = 0.0f64;
    for (i, node) in grid.interior().iter().enumerate() {
        let r = pointwise_residual(&grid.hessian_at(&v, node), problem.alpha_at(i)).unwrap_or(f64::INFINITY);
        interior_residual = interior_residual.max(r.abs());
    }
    let boundary_residual = grid
        .boundary()
        .iter()
        .enumerate()
        .fold(0.0f64, |m, (b, node)| m.max((node.normal_derivative(&v) - c - problem.phi_at(b)).abs()));
    LimitSolution { c, v, c_last: last.c_est, interior_residual, boundary_residual }
}

/// Which unknowns carry the interior equation.
pub fn interior_mask(grid: &Grid) -> Vec<bool> {
    (0..grid.num_unknowns()).map(|m| matches!(grid.role(m), Role::Interior(_))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DomainSpec;

    #[test]
    fn comparison_coefficient_examples() {
        let a = comparison_coefficient(2, 2, &[0.5, 0.25]);
        assert!((a - 0.5).abs() < 1e-14, "{a}");
        // α_0 → 0 leaves the linear term: A = sup α_1 C_2^1 / (2 C_2^2)
        let a = comparison_coefficient(2, 2, &[1e-14, 0.25]);
        assert!((a - 0.25).abs() < 1e-12, "{a}");
        let a = comparison_coefficient(3, 3, &[0.2, 0.1, 0.7]);
        let c = |m| binomial(3, m) as f64;
        let f = 2.0 * a * c(3) / c(2) - 0.2 * (2.0 * a).powi(-2) * c(0) / c(2) - 0.1 / (2.0 * a) * c(1) / c(2);
        assert!((f - 0.7).abs() < 1e-12);
    }

    #[test]
    fn initial_guess_is_admissible() {
        let grid = Grid::build(DomainSpec::disk(1.0), 1.0 / 16.0).unwrap();
        let field = CoefficientField::constant(&[0.5, 0.25], 1.0);
        let problem = Problem::new(&grid, 2, &field).unwrap();
        let start = initial_guess(&problem);
        assert!(grid.mean(&start.v).abs() < 1e-15);
        let level = ConeLevel::new(2, 2).unwrap();
        for n in grid.interior() {
            let w = grid.hessian_at(&start.v, n);
            assert!((w.get(0, 0) - 1.0).abs() < 1e-10 && (w.get(1, 1) - 1.0).abs() < 1e-10);
            assert!(crate::symfun::in_cone(&spectral(&w).eigenvalues, level));
        }
    }

    #[test]
    fn problem_ingestion_rejects_bad_data() {
        let grid = Grid::build(DomainSpec::disk(1.0), 1.0 / 16.0).unwrap();
        let f = CoefficientField::constant(&[0.5, 0.25], 1.0);
        assert!(matches!(Problem::new(&grid, 1, &f), Err(SolverError::BadProblem(_))));
        assert!(matches!(Problem::new(&grid, 3, &f), Err(SolverError::BadProblem(_))));
        let neg = CoefficientField::constant(&[0.0, 0.25], 1.0);
        assert!(matches!(Problem::new(&grid, 2, &neg), Err(SolverError::BadProblem(_))));
        let short = CoefficientField::constant(&[0.25], 1.0);
        assert!(matches!(Problem::new(&grid, 2, &short), Err(SolverError::BadProblem(_))));
    }

    #[test]
    fn rejects_zero_eps() {
        let grid = Grid::build(DomainSpec::disk(1.0), 1.0 / 16.0).unwrap();
        let field = CoefficientField::constant(&[0.5, 0.25], 1.0);
        let problem = Problem::new(&grid, 2, &field).unwrap();
        let start = initial_guess(&problem);
        let s = NewtonSettings::default();
        assert_eq!(newton_solve(&problem, 0.0, &start, &s).unwrap_err(), SolverError::BadEps(0.0));
        assert!(newton_solve(&problem, -1.0, &start, &s).is_err());
    }

    #[test]
    fn inadmissible_start_is_rejected() {
        let grid = Grid::build(DomainSpec::disk(1.0), 1.0 / 16.0).unwrap();
        let field = CoefficientField::constant(&[0.5, 0.25], 1.0);
        let problem = Problem::new(&grid, 2, &field).unwrap();
        let start = quadratic_start(&problem, -0.5);
        let err = newton_solve(&problem, 0.1, &start, &NewtonSettings::default()).unwrap_err();
        assert!(matches!(err, SolverError::InadmissibleStart { .. }));
    }

    #[test]
    fn schedule_levels() {
        let s = EpsSchedule::default();
        let l = s.levels();
        assert_eq!(l[0], 0.1);
        assert_eq!(*l.last().unwrap(), 1e-4);
        assert!(l.windows(2).all(|w| w[0] > w[1]));
        assert_eq!(l.len(), 11);
        assert!(EpsSchedule { eps_min: 0.2, ..s }.validate().is_err());
        assert!(EpsSchedule { ratio: 1.0, ..s }.validate().is_err());
    }

    #[test]
    fn tail_ratios_use_last_three_steps() {
        let stats = NewtonStats { residual_history: vec![1.0, 0.5, 0.1, 1e-3, 1e-7], ..Default::default() };
        let r = stats.tail_ratios();
        assert_eq!(r.len(), 3);
        assert!((r[0] - 0.2).abs() < 1e-15);
    }
}
