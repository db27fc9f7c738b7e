//! Elementary symmetric functions of eigenvalue tuples.
//!
//! Everything here is evaluated with the one-element-at-a-time recurrence
//! `e_m(λ_1..λ_j) = e_m(λ_1..λ_{j-1}) + λ_j e_{m-1}(λ_1..λ_{j-1})`, which costs
//! `O(n·m)` and is exact for small integer inputs. Orders are signed so that
//! `σ_{-1} = 0` falls out of the same call.

use std::fmt;

use thiserror::Error;

/// Largest tuple length supported by this module.
pub const MAX_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SymError {
    #[error("tuple length {0} outside 1..={MAX_DIM}")]
    BadLength(usize),
    #[error("non-finite entry {value} at position {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("index {index} out of range for a tuple of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("deleted pair needs two distinct indices, got {0} twice")]
    RepeatedIndex(usize),
    #[error("cone level {k} outside 1..={n}")]
    BadConeLevel { k: usize, n: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// An ordered tuple of eigenvalues `(λ_1, …, λ_n)`, `n ≤ 8`, all finite.
#[derive(Clone, Copy, PartialEq)]
pub struct EigenTuple {
    values: [f64; MAX_DIM],
    n: usize,
}

impl EigenTuple {
    pub fn new(values: &[f64]) -> Result<Self, SymError> {
        let n = values.len();
        if n == 0 || n > MAX_DIM {
            return Err(SymError::BadLength(n));
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(SymError::NonFinite { index, value });
        }
        let mut buf = [0.0; MAX_DIM];
        buf[..n].copy_from_slice(values);
        Ok(Self { values: buf, n })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.values[..self.n]
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.as_slice()[i]
    }

    /// Copy with entry `i` replaced by zero.
    pub fn with_zeroed(&self, i: usize) -> Result<Self, SymError> {
        self.check_index(i)?;
        let mut out = *self;
        out.values[i] = 0.0;
        Ok(out)
    }

    /// Copy sorted in descending order.
    pub fn sorted_desc(&self) -> Self {
        let mut out = *self;
        out.values[..self.n].sort_by(|a, b| b.total_cmp(a));
        out
    }

    /// Entrywise absolute values; `σ_m(|λ|)` is the natural magnitude scale
    /// for `σ_m(λ)` when the sum has cancellation.
    pub fn abs(&self) -> Self {
        let mut out = *self;
        for v in &mut out.values[..self.n] {
            *v = v.abs();
        }
        out
    }

    fn check_index(&self, i: usize) -> Result<(), SymError> {
        if i >= self.n {
            Err(SymError::IndexOutOfRange { index: i, len: self.n })
        } else {
            Ok(())
        }
    }
}

impl fmt::Debug for EigenTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("EigenTuple").field(&self.as_slice()).finish()
    }
}

/// Level `k` of the Gårding cone `Γ_k = {σ_1 > 0, …, σ_k > 0}` for tuples of
/// length `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConeLevel(usize);

impl ConeLevel {
    pub fn new(k: usize, n: usize) -> Result<Self, SymError> {
        if k == 0 || k > n || n > MAX_DIM {
            return Err(SymError::BadConeLevel { k, n });
        }
        Ok(Self(k))
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0
    }
}

/// All of `σ_0 … σ_n` at once. Entries past `n` are zero.
pub fn sigma_all(lambda: &EigenTuple) -> [f64; MAX_DIM + 1] {
    let mut e = [0.0; MAX_DIM + 1];
    e[0] = 1.0;
    for (j, &x) in lambda.as_slice().iter().enumerate() {
        for m in (1..=j + 1).rev() {
            e[m] += x * e[m - 1];
        }
    }
    e
}

/// `σ_m(λ)`. Negative orders and orders above `n` are empty sums (zero).
pub fn sigma(m: isize, lambda: &EigenTuple) -> f64 {
    if m < 0 || m as usize > lambda.len() {
        return 0.0;
    }
    sigma_all(lambda)[m as usize]
}

/// `σ_m(λ|i)`: `σ_m` with `λ_i` set to zero. Indices are 0-based.
pub fn sigma_del1(m: isize, lambda: &EigenTuple, i: usize) -> Result<f64, SymError> {
    Ok(sigma(m, &lambda.with_zeroed(i)?))
}

/// `σ_m(λ|ij)`: `σ_m` with `λ_i = λ_j = 0`.
pub fn sigma_del2(m: isize, lambda: &EigenTuple, i: usize, j: usize) -> Result<f64, SymError> {
    if i == j {
        return Err(SymError::RepeatedIndex(i));
    }
    Ok(sigma(m, &lambda.with_zeroed(i)?.with_zeroed(j)?))
}

/// Deleted functions for every index: row `i` holds `σ_0(λ|i) … σ_n(λ|i)`.
pub fn sigma_del1_table(lambda: &EigenTuple) -> [[f64; MAX_DIM + 1]; MAX_DIM] {
    let mut out = [[0.0; MAX_DIM + 1]; MAX_DIM];
    for (i, row) in out.iter_mut().enumerate().take(lambda.len()) {
        let mut del = *lambda;
        del.values[i] = 0.0;
        *row = sigma_all(&del);
    }
    out
}

/// Strict cone membership: `σ_i(λ) > 0` for all `1 ≤ i ≤ k`.
pub fn in_cone(lambda: &EigenTuple, k: ConeLevel) -> bool {
    in_cone_tol(lambda, k, 0.0)
}

/// Cone membership with a safety margin: `σ_i(λ) > tau` for all `1 ≤ i ≤ k`.
pub fn in_cone_tol(lambda: &EigenTuple, k: ConeLevel, tau: f64) -> bool {
    let s = sigma_all(lambda);
    (1..=k.get().min(lambda.len())).all(|i| s[i] > tau)
}

/// `C_n^m`, exact.
pub fn binomial(n: u64, m: u64) -> u64 {
    if m > n {
        return 0;
    }
    let m = m.min(n - m);
    (0..m).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// Both sides of the generalized Newton–MacLaurin inequality
/// `[(σ_m/C_n^m)/(σ_l/C_n^l)]^{1/(m-l)} ≤ [(σ_r/C_n^r)/(σ_s/C_n^s)]^{1/(r-s)}`,
/// valid for `λ ∈ Γ_m`, `m > l ≥ 0`, `r > s ≥ 0`, `m ≥ r`, `l ≥ s`.
pub fn newton_maclaurin_ratio(
    lambda: &EigenTuple,
    m: usize,
    l: usize,
    r: usize,
    s: usize,
) -> Result<(f64, f64), SymError> {
    let n = lambda.len();
    if !(m > l && r > s && m >= r && l >= s && m <= n) {
        return Err(SymError::Precondition(format!(
            "index tuple (m={m}, l={l}, r={r}, s={s}) not admissible for n={n}"
        )));
    }
    if !in_cone(lambda, ConeLevel::new(m, n)?) {
        return Err(SymError::Precondition(format!("{lambda:?} is not in Γ_{m}")));
    }
    let sig = sigma_all(lambda);
    let norm = |q: usize| sig[q] / binomial(n as u64, q as u64) as f64;
    let lhs = (norm(m) / norm(l)).powf(1.0 / (m - l) as f64);
    let rhs = (norm(r) / norm(s)).powf(1.0 / (r - s) as f64);
    Ok((lhs, rhs))
}
