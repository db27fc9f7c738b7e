//! Seeded random inputs for the property checks: tuples in `Γ_k`,
//! admissible matrices and coefficient vectors.

use rand::Rng;

use crate::hessop::{CoefficientSample, SymmetricMatrix};
use crate::symfun::{in_cone, ConeLevel, EigenTuple};

/// Entries uniform in `[-range, range]`.
pub fn random_tuple<R: Rng>(rng: &mut R, n: usize, range: f64) -> EigenTuple {
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-range..range)).collect();
    EigenTuple::new(&v).expect("finite entries")
}

/// Rejection-samples a tuple in `Γ_k`. Positive entries are favoured so that
/// the acceptance rate stays reasonable for `k` close to `n`.
pub fn random_in_cone<R: Rng>(rng: &mut R, n: usize, level: ConeLevel, range: f64) -> EigenTuple {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5 * range..range)).collect();
        let t = EigenTuple::new(&v).expect("finite entries");
        if in_cone(&t, level) && t.as_slice().iter().all(|x| x.abs() > 1e-3) {
            return t;
        }
    }
}

/// Uniform rotation of `R^n`, `n ∈ {2, 3}`, padded into a 3×3 array.
pub fn random_rotation<R: Rng>(rng: &mut R, n: usize) -> [[f64; 3]; 3] {
    if n == 2 {
        let t = rng.gen_range(0.0..std::f64::consts::TAU);
        let (s, c) = t.sin_cos();
        return [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
    }
    // unit quaternion by rejection from the 4-ball
    let q = loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.1 && norm <= 1.0 {
            break q.map(|x| x / norm);
        }
    };
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// `R diag(λ) Rᵀ` with `λ ∈ Γ_k` and a random rotation `R`.
pub fn random_admissible_matrix<R: Rng>(
    rng: &mut R,
    n: usize,
    level: ConeLevel,
    range: f64,
) -> (SymmetricMatrix, EigenTuple) {
    let lambda = random_in_cone(rng, n, level, range);
    let d = SymmetricMatrix::diagonal(lambda.as_slice()).expect("valid dimension");
    let r = random_rotation(rng, n);
    (d.congruence(&r), lambda)
}

/// `k` coefficients uniform in `[lo, hi]`, `0 < lo`.
pub fn random_alpha<R: Rng>(rng: &mut R, k: usize, lo: f64, hi: f64) -> CoefficientSample {
    let a: Vec<f64> = (0..k).map(|_| rng.gen_range(lo..hi)).collect();
    CoefficientSample::new(&a).expect("positive coefficients")
}
