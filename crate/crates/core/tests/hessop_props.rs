use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

use mixhess_core::hessop::{
    g_gradient, g_value, operator, ratio_bounds_check, ratio_constant, spectral, CoefficientSample, RatioStatus,
    SymmetricMatrix,
};
use mixhess_core::sampling::{random_admissible_matrix, random_alpha, random_rotation};
use mixhess_core::symfun::ConeLevel;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn operator_is_rotation_invariant(seed in any::<u64>(), n in 2usize..=3, kk in 0usize..2) {
        let mut rng = StdRng::seed_from_u64(seed);
        let k = 2 + kk % (n - 1);
        let (w, _) = random_admissible_matrix(&mut rng, n, ConeLevel::new(k, n).unwrap(), 3.0);
        let alpha = random_alpha(&mut rng, k, 0.1, 2.0);
        let r = random_rotation(&mut rng, n);
        let rw = w.congruence(&r);
        let (g, gr) = (g_value(&w, &alpha).unwrap(), g_value(&rw, &alpha).unwrap());
        prop_assert!((g - gr).abs() <= 1e-11 * (1.0 + g.abs()));
        // the gradient transforms the same way as the matrix
        let grad = g_gradient(&w, &alpha).unwrap().congruence(&r);
        let grad_r = g_gradient(&rw, &alpha).unwrap();
        let diff = grad.add(&grad_r.scaled(-1.0)).frobenius();
        prop_assert!(diff <= 1e-10 * (1.0 + grad.frobenius()));
    }

    #[test]
    fn spectral_reassembles(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0,
                           d in -5.0f64..5.0, e in -5.0f64..5.0, f in -5.0f64..5.0) {
        let w = SymmetricMatrix::from_rows(&[&[a, b, c], &[b, d, e], &[c, e, f]]).unwrap();
        let dec = spectral(&w);
        let lam = dec.eigenvalues.as_slice().to_vec();
        prop_assert!(lam.windows(2).all(|p| p[0] >= p[1]));
        let back = dec.reassemble(&lam);
        prop_assert!(back.add(&w.scaled(-1.0)).frobenius() <= 1e-12 * (1.0 + w.frobenius()));
    }

    #[test]
    fn operator_is_increasing_along_positive_directions(seed in any::<u64>(), t in 0.01f64..1.0) {
        // ellipticity: G(W + tP) > G(W) for P ≥ 0, P ≠ 0
        let mut rng = StdRng::seed_from_u64(seed);
        let (w, _) = random_admissible_matrix(&mut rng, 3, ConeLevel::new(2, 3).unwrap(), 3.0);
        let alpha = random_alpha(&mut rng, 2, 0.1, 2.0);
        let r = random_rotation(&mut rng, 3);
        let p = SymmetricMatrix::diagonal(&[1.0, 0.0, 0.0]).unwrap().congruence(&r);
        prop_assert!(g_value(&w.add(&p.scaled(t)), &alpha).unwrap() > g_value(&w, &alpha).unwrap());
    }
}

#[test]
fn ratio_bounds_on_shell_samples() {
    let mut rng = StdRng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 500 {
        let (w, _) = random_admissible_matrix(&mut rng, 3, ConeLevel::new(3, 3).unwrap(), 3.0);
        let mut a = random_alpha(&mut rng, 3, 0.05, 1.0).alpha().to_vec();
        let g = g_value(&w, &CoefficientSample::new(&a).unwrap()).unwrap();
        if g <= 0.0 {
            continue;
        }
        a[2] = g;
        let rep = ratio_bounds_check(&w, &CoefficientSample::new(&a).unwrap(), 1e-9).unwrap();
        assert_eq!(rep.status, RatioStatus::Checked);
        assert!(rep.all_hold(), "{rep:?}");
        checked += 1;
    }
    // off-shell points are reported, not checked
    let w = SymmetricMatrix::identity(3).unwrap();
    let rep = ratio_bounds_check(&w, &CoefficientSample::new(&[0.1, 0.1, 5.0]).unwrap(), 1e-9).unwrap();
    assert_eq!(rep.status, RatioStatus::NotOnShell);
}

#[test]
fn ratio_constant_small_case() {
    assert!((ratio_constant(2, 2, 0) - 0.25).abs() < 1e-15);
    // l = k - 1 gives 1
    assert!((ratio_constant(5, 3, 2) - 1.0).abs() < 1e-15);
}

#[test]
fn euler_identity_scales() {
    // G is homogeneous of degree one when α_l are rescaled by t^{k-l}
    let mut rng = StdRng::seed_from_u64(3);
    for _ in 0..200 {
        let (w, _) = random_admissible_matrix(&mut rng, 3, ConeLevel::new(3, 3).unwrap(), 3.0);
        let alpha = random_alpha(&mut rng, 3, 0.1, 2.0);
        let t = 1.7;
        let a = alpha.alpha();
        let scaled = CoefficientSample::new(&[a[0] * t * t * t, a[1] * t * t, a[2]]).unwrap();
        let g = operator(&w, &alpha).unwrap().g;
        let gt = operator(&w.scaled(t), &scaled).unwrap().g;
        assert!((gt - t * g).abs() <= 1e-11 * (1.0 + g.abs()));
    }
}
