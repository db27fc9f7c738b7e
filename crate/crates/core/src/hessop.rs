//! The quotient operator
//! `G(W, x) = σ_k/σ_{k-1} − Σ_{l≤k-2} α_l σ_l/σ_{k-1}` on symmetric matrices,
//! its matrix derivative `G^{ij} = ∂G/∂W_{ij}`, and the pointwise inequalities
//! that the a priori estimates rest on.
//!
//! `G(D²u, x) = α_{k-1}(x)` is the mixed Hessian equation
//! `σ_k = Σ_{l<k} α_l σ_l` divided through by `σ_{k-1}`.

use serde::Serialize;
use thiserror::Error;

use crate::symfun::{
    binomial, in_cone, sigma_all, sigma_del1_table, ConeLevel, EigenTuple, SymError, MAX_DIM,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HessopError {
    #[error("eigenvalues {lambda:?} are not in Γ_{k}")]
    NotAdmissible { lambda: Vec<f64>, k: usize },
    #[error("matrix dimension {0} is not 2 or 3")]
    BadDimension(usize),
    #[error("coefficient sample: {0}")]
    BadCoefficients(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Sym(#[from] SymError),
}

/// Dense symmetric `n×n` matrix, `n ∈ {2, 3}`, stored as its upper triangle
/// row by row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymmetricMatrix {
    dim: usize,
    upper: [f64; 6],
}

#[inline]
fn tri_index(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // row offsets: dim 2 -> [0, 2], dim 3 -> [0, 3, 5]
    i * dim - i * (i.saturating_sub(1)) / 2 + (j - i)
}

impl SymmetricMatrix {
    pub fn zeros(dim: usize) -> Result<Self, HessopError> {
        if dim != 2 && dim != 3 {
            return Err(HessopError::BadDimension(dim));
        }
        Ok(Self { dim, upper: [0.0; 6] })
    }

    pub fn identity(dim: usize) -> Result<Self, HessopError> {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(d: &[f64]) -> Result<Self, HessopError> {
        let mut m = Self::zeros(d.len())?;
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        Ok(m)
    }

    /// Builds from full rows, symmetrising as `(A + Aᵀ)/2`.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, HessopError> {
        let mut m = Self::zeros(rows.len())?;
        for i in 0..m.dim {
            if rows[i].len() != m.dim {
                return Err(HessopError::BadDimension(rows[i].len()));
            }
            for j in i..m.dim {
                m.set(i, j, 0.5 * (rows[i][j] + rows[j][i]));
            }
        }
        Ok(m)
    }

    /// 2×2 matrix `[[xx, xy], [xy, yy]]`.
    pub fn planar(xx: f64, xy: f64, yy: f64) -> Self {
        Self { dim: 2, upper: [xx, xy, yy, 0.0, 0.0, 0.0] }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[tri_index(self.dim, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.upper[tri_index(self.dim, i, j)] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.upper.iter().all(|v| v.is_finite())
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Frobenius inner product `Σ_ij A_ij B_ij`.
    pub fn dot(&self, other: &Self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.get(i, j) * other.get(i, j);
            }
        }
        s
    }

    pub fn frobenius(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = *self;
        for v in &mut out.upper {
            *v *= a;
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = *self;
        for (v, w) in out.upper.iter_mut().zip(other.upper.iter()) {
            *v += w;
        }
        out
    }

    /// `Rᵀ W R` for a square `R` given as rows.
    pub fn congruence(&self, r: &[[f64; 3]; 3]) -> Self {
        let n = self.dim;
        let mut out = *self;
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        s += r[a][i] * self.get(a, b) * r[b][j];
                    }
                }
                out.set(i, j, s);
            }
        }
        out
    }

    fn to_full(self) -> [[f64; 3]; 3] {
        let mut a = [[0.0; 3]; 3];
        for (i, row) in a.iter_mut().enumerate().take(self.dim) {
            for (j, v) in row.iter_mut().enumerate().take(self.dim) {
                *v = self.get(i, j);
            }
        }
        a
    }
}

/// Eigenvalues sorted descending with orthonormal eigenvectors in the columns
/// of `vectors` (`vectors[row][col]`), each column oriented so its first
/// non-negligible component is positive.
#[derive(Debug, Clone, Copy)]
pub struct SpectralDecomp {
    pub eigenvalues: EigenTuple,
    pub vectors: [[f64; 3]; 3],
}

impl SpectralDecomp {
    /// `Q diag(d) Qᵀ`.
    pub fn reassemble(&self, d: &[f64]) -> SymmetricMatrix {
        let n = self.eigenvalues.len();
        let mut out = SymmetricMatrix::zeros(n).expect("dimension checked at construction");
        for i in 0..n {
            for j in i..n {
                let s = (0..n).map(|c| self.vectors[i][c] * d[c] * self.vectors[j][c]).sum();
                out.set(i, j, s);
            }
        }
        out
    }
}

const JACOBI_OFF_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 50;

/// Symmetric eigendecomposition: closed form for 2×2, cyclic Jacobi for 3×3.
pub fn spectral(w: &SymmetricMatrix) -> SpectralDecomp {
    let (mut vals, mut vecs) = match w.dim {
        2 => spectral2(w),
        _ => jacobi3(w),
    };
    let n = w.dim;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let sorted_vals: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
    let mut sorted_vecs = [[0.0; 3]; 3];
    for (c, &src) in order.iter().enumerate() {
        let first = (0..n).map(|r| vecs[r][src]).find(|v| v.abs() > 1e-12).unwrap_or(1.0);
        let sign = if first < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            sorted_vecs[r][c] = sign * vecs[r][src];
        }
    }
    vals[..n].copy_from_slice(&sorted_vals);
    vecs = sorted_vecs;
    SpectralDecomp {
        eigenvalues: EigenTuple::new(&vals[..n]).expect("eigenvalues of a finite matrix"),
        vectors: vecs,
    }
}

fn spectral2(w: &SymmetricMatrix) -> ([f64; 3], [[f64; 3]; 3]) {
    let (a, b, c) = (w.get(0, 0), w.get(0, 1), w.get(1, 1));
    let mid = 0.5 * (a + c);
    let rad = (0.5 * (a - c)).hypot(b);
    let det = a * c - b * b;
    // take the larger-magnitude root directly and the other from the determinant
    let (hi, lo) = if mid >= 0.0 {
        let hi = mid + rad;
        (hi, if hi != 0.0 { det / hi } else { mid - rad })
    } else {
        let lo = mid - rad;
        (if lo != 0.0 { det / lo } else { mid + rad }, lo)
    };
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    let (s, co) = theta.sin_cos();
    let vecs = [[co, -s, 0.0], [s, co, 0.0], [0.0, 0.0, 0.0]];
    ([hi, lo, 0.0], vecs)
}

fn jacobi3(w: &SymmetricMatrix) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut a = w.to_full();
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let scale = w.frobenius();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = (2.0 * (a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2))).sqrt();
        if off <= JACOBI_OFF_TOL * scale || off == 0.0 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for row in a.iter_mut() {
                let (akp, akq) = (row[p], row[q]);
                row[p] = c * akp - s * akq;
                row[q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let (apk, aqk) = (a[p][k], a[q][k]);
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let (vkp, vkq) = (row[p], row[q]);
                row[p] = c * vkp - s * vkq;
                row[q] = s * vkp + c * vkq;
            }
        }
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}

/// Coefficients `α_0 … α_{k-1}` at one point. All strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientSample {
    alpha: Vec<f64>,
}

impl CoefficientSample {
    pub fn new(alpha: &[f64]) -> Result<Self, HessopError> {
        if alpha.len() < 2 || alpha.len() > MAX_DIM {
            return Err(HessopError::BadCoefficients(format!(
                "need 2 ≤ k ≤ {MAX_DIM} coefficients, got {}",
                alpha.len()
            )));
        }
        if let Some((l, a)) = alpha.iter().enumerate().find(|(_, a)| !(**a > 0.0 && a.is_finite())) {
            return Err(HessopError::BadCoefficients(format!("alpha_{l} = {a} is not positive")));
        }
        Ok(Self { alpha: alpha.to_vec() })
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    #[inline]
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// `α_{k-1}`, the right-hand side of `G = α_{k-1}`.
    #[inline]
    pub fn rhs(&self) -> f64 {
        self.alpha[self.alpha.len() - 1]
    }
}

/// Value and eigenvalue-space derivatives of `G` at one tuple.
#[derive(Debug, Clone, Copy)]
pub struct LambdaDerivs {
    pub n: usize,
    pub k: usize,
    pub g: f64,
    /// `σ_k/σ_{k-1}`
    pub gk: f64,
    /// `σ_l/σ_{k-1}` for `0 ≤ l ≤ k-2`
    pub gl: [f64; MAX_DIM],
    /// `∂G/∂λ_i`
    pub dg: [f64; MAX_DIM],
    /// `σ_0 … σ_n`
    pub sigma: [f64; MAX_DIM + 1],
}

/// `G` and `∂G/∂λ_i` at `λ ∈ Γ_k`, `k = α.k()`.
pub fn g_lambda(lambda: &EigenTuple, alpha: &CoefficientSample) -> Result<LambdaDerivs, HessopError> {
    let n = lambda.len();
    let k = alpha.k();
    let level = ConeLevel::new(k, n)?;
    if !in_cone(lambda, level) {
        return Err(HessopError::NotAdmissible { lambda: lambda.as_slice().to_vec(), k });
    }
    let s = sigma_all(lambda);
    let del = sigma_del1_table(lambda);
    let sk1 = s[k - 1];
    let inv = 1.0 / sk1;
    let inv2 = inv * inv;
    let gk = s[k] * inv;
    let mut gl = [0.0; MAX_DIM];
    let mut g = gk;
    for l in 0..k - 1 {
        gl[l] = s[l] * inv;
        g -= alpha.alpha[l] * gl[l];
    }
    // σ_{m}(λ|i) with the σ_{-1} = 0 convention
    let d = |i: usize, m: isize| if m < 0 { 0.0 } else { del[i][m as usize] };
    let mut dg = [0.0; MAX_DIM];
    for (i, out) in dg.iter_mut().enumerate().take(n) {
        let mut v = (d(i, k as isize - 1) * sk1 - s[k] * d(i, k as isize - 2)) * inv2;
        for l in 0..k - 1 {
            let li = l as isize;
            v -= alpha.alpha[l] * (d(i, li - 1) * sk1 - s[l] * d(i, k as isize - 2)) * inv2;
        }
        *out = v;
    }
    Ok(LambdaDerivs { n, k, g, gk, gl, dg, sigma: s })
}

/// `G(W)`, `G^{ij}` and the quotient pieces at one matrix.
#[derive(Debug, Clone)]
pub struct OperatorValue {
    pub g: f64,
    pub grad: SymmetricMatrix,
    pub gk: f64,
    pub gl: Vec<f64>,
}

pub fn operator(w: &SymmetricMatrix, alpha: &CoefficientSample) -> Result<OperatorValue, HessopError> {
    let dec = spectral(w);
    let d = g_lambda(&dec.eigenvalues, alpha)?;
    Ok(OperatorValue {
        g: d.g,
        grad: dec.reassemble(&d.dg[..d.n]),
        gk: d.gk,
        gl: d.gl[..d.k - 1].to_vec(),
    })
}

pub fn g_value(w: &SymmetricMatrix, alpha: &CoefficientSample) -> Result<f64, HessopError> {
    Ok(g_lambda(&spectral(w).eigenvalues, alpha)?.g)
}

/// `G^{ij}`. A symmetric spectral function has gradient `Q diag(∂G/∂λ) Qᵀ`
/// for any eigenbasis `Q`, repeated eigenvalues included.
pub fn g_gradient(w: &SymmetricMatrix, alpha: &CoefficientSample) -> Result<SymmetricMatrix, HessopError> {
    Ok(operator(w, alpha)?.grad)
}

/// `gk + Σ_l (k-1-l) α_l gl[l]`, which equals `Σ G^{ij} W_{ij}` by homogeneity.
pub fn euler_weighted_trace(value: &OperatorValue, alpha: &CoefficientSample) -> f64 {
    let k = alpha.k();
    value.gk
        + value
            .gl
            .iter()
            .enumerate()
            .map(|(l, gl)| (k - 1 - l) as f64 * alpha.alpha[l] * gl)
            .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceBounds {
    pub trace: f64,
    pub lower: f64,
    pub upper: f64,
}

impl TraceBounds {
    pub fn holds(&self, tol: f64) -> bool {
        self.lower - tol <= self.trace && self.trace < self.upper + tol
    }
}

/// `Σ_i G^{ii}` against `[(n-k+1)/k, n-k+1)`. The lower bound holds on all of
/// `Γ_k`; the upper bound needs `G > 0`, which holds on solutions.
pub fn trace_bounds_check(w: &SymmetricMatrix, alpha: &CoefficientSample) -> Result<TraceBounds, HessopError> {
    let d = g_lambda(&spectral(w).eigenvalues, alpha)?;
    Ok(trace_bounds_lambda(&d))
}

pub fn trace_bounds_lambda(d: &LambdaDerivs) -> TraceBounds {
    let (n, k) = (d.n as f64, d.k as f64);
    TraceBounds {
        trace: d.dg[..d.n].iter().sum(),
        lower: (n - k + 1.0) / k,
        upper: n - k + 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MinEigMode {
    /// `λ_1 < 0`
    NegativeFirst,
    /// `λ_1 > 0 > λ_n`, `λ_2 ≥ … ≥ λ_n`, `λ_1 ≥ δ λ_2`, `−λ_n ≥ ε λ_1`
    Pinch { delta: f64, eps: f64 },
}

/// Constant `c_2 = (n/k) c_1² / (n-k+2)²` with
/// `c_1 = min{ε²δ²/(2(n-2)(n-1)), ε²δ/(4(n-1))}`. For `n = 2` the first
/// candidate is absent.
pub fn pinch_constant(n: usize, k: usize, delta: f64, eps: f64) -> f64 {
    let nf = n as f64;
    let first = if n > 2 {
        eps * eps * delta * delta / (2.0 * (nf - 2.0) * (nf - 1.0))
    } else {
        f64::INFINITY
    };
    let second = eps * eps * delta / (4.0 * (nf - 1.0));
    let c1 = first.min(second);
    nf / k as f64 * c1 * c1 / (nf - k as f64 + 2.0).powi(2)
}

/// Returns `(∂G/∂λ_1, bound · Σ_i ∂G/∂λ_i)`; the inequality asserts `lhs ≥ rhs`.
pub fn min_eig_derivative_check(
    lambda: &EigenTuple,
    alpha: &CoefficientSample,
    mode: MinEigMode,
) -> Result<(f64, f64), HessopError> {
    let n = lambda.len();
    let k = alpha.k();
    let v = lambda.as_slice();
    let bound = match mode {
        MinEigMode::NegativeFirst => {
            if v[0] >= 0.0 {
                return Err(HessopError::Precondition(format!("λ_1 = {} is not negative", v[0])));
            }
            n as f64 / k as f64 / ((n - k + 2) as f64).powi(2)
        }
        MinEigMode::Pinch { delta, eps } => {
            if n < 2 || !(delta > 0.0 && eps > 0.0) {
                return Err(HessopError::Precondition("pinch needs n ≥ 2 and δ, ε > 0".into()));
            }
            let sorted_tail = v[1..].windows(2).all(|p| p[0] >= p[1]);
            let last = v[n - 1];
            if !(sorted_tail && v[0] > 0.0 && last < 0.0 && v[0] >= delta * v[1] && -last >= eps * v[0]) {
                return Err(HessopError::Precondition(format!(
                    "{v:?} outside the pinch region for δ={delta}, ε={eps}"
                )));
            }
            pinch_constant(n, k, delta, eps)
        }
    };
    let d = g_lambda(lambda, alpha)?;
    let total: f64 = d.dg[..n].iter().sum();
    Ok((d.dg[0], bound * total))
}

/// `(G((W1+W2)/2), (G(W1)+G(W2))/2)`; concavity asserts `mid ≥ chord`.
pub fn concavity_probe(
    w1: &SymmetricMatrix,
    w2: &SymmetricMatrix,
    alpha: &CoefficientSample,
) -> Result<(f64, f64), HessopError> {
    let g1 = g_value(w1, alpha)?;
    let g2 = g_value(w2, alpha)?;
    let mid = g_value(&w1.add(w2).scaled(0.5), alpha)?;
    Ok((mid, 0.5 * (g1 + g2)))
}

/// `(C_n^k)^{k-1-l} C_n^l / (C_n^{k-1})^{k-l}`, the bound on `σ_l/σ_{k-1}`
/// when `σ_k/σ_{k-1} > 1`.
pub fn ratio_constant(n: usize, k: usize, l: usize) -> f64 {
    let c = |m: usize| binomial(n as u64, m as u64) as f64;
    c(k).powi((k - 1 - l) as i32) * c(l) / c(k - 1).powi((k - l) as i32)
}

/// `max_{0 ≤ l ≤ k-1}` of [`ratio_constant`].
pub fn ratio_constant_max(n: usize, k: usize) -> f64 {
    (0..k).map(|l| ratio_constant(n, k, l)).fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub label: String,
    pub value: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum RatioStatus {
    Checked,
    NotOnShell,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioReport {
    pub status: RatioStatus,
    /// `G(W) − α_{k-1}`
    pub shell_residual: f64,
    pub checks: Vec<BoundCheck>,
}

impl RatioReport {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }
}

/// Bounds on `σ_l/σ_{k-1}` and `σ_k/σ_{k-1}` that hold at points where the
/// equation `G(W) = α_{k-1}` is satisfied to within `shell_tol`. Off-shell the
/// report is returned with status `NotOnShell` and no checks.
pub fn ratio_bounds_check(
    w: &SymmetricMatrix,
    alpha: &CoefficientSample,
    shell_tol: f64,
) -> Result<RatioReport, HessopError> {
    let d = g_lambda(&spectral(w).eigenvalues, alpha)?;
    Ok(ratio_bounds_lambda(&d, alpha, shell_tol))
}

pub fn ratio_bounds_lambda(d: &LambdaDerivs, alpha: &CoefficientSample, shell_tol: f64) -> RatioReport {
    let (n, k) = (d.n, d.k);
    let shell_residual = d.g - alpha.rhs();
    if shell_residual.abs() > shell_tol {
        return RatioReport { status: RatioStatus::NotOnShell, shell_residual, checks: Vec::new() };
    }
    let a = alpha.alpha();
    let slack = shell_tol * (1.0 + d.gk.abs());
    let mut checks = Vec::with_capacity(k + 1);
    for l in 0..k - 1 {
        let check = if d.gk <= 1.0 {
            let value = a[l] * d.gl[l];
            BoundCheck {
                label: format!("alpha_{l}*sigma_{l}/sigma_{}", k - 1),
                value,
                bound: 1.0,
                holds: value <= 1.0 + slack,
            }
        } else {
            let bound = ratio_constant(n, k, l);
            BoundCheck {
                label: format!("sigma_{l}/sigma_{}", k - 1),
                value: d.gl[l],
                bound,
                holds: d.gl[l] <= bound * (1.0 + 1e-12) + slack,
            }
        };
        checks.push(check);
    }
    checks.push(BoundCheck {
        label: format!("alpha_{} <= sigma_{k}/sigma_{}", k - 1, k - 1),
        value: alpha.rhs(),
        bound: d.gk,
        holds: alpha.rhs() <= d.gk + slack,
    });
    let upper = if d.gk > 1.0 { ratio_constant_max(n, k) * a.iter().sum::<f64>() } else { 1.0 };
    checks.push(BoundCheck {
        label: format!("sigma_{k}/sigma_{}", k - 1),
        value: d.gk,
        bound: upper,
        holds: d.gk <= upper * (1.0 + 1e-12) + slack,
    });
    RatioReport { status: RatioStatus::Checked, shell_residual, checks }
}
