use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rankmin::{shrink, thin_svd, DenseMatrix, WeightVector};

const GRID_STEP: f64 = 1e-5;

/// Minimizer of `½(x − s)² + t·x` over `x ≥ 0`, found by scanning a grid.
fn scalar_grid_minimizer(s: f64, t: f64) -> f64 {
    let steps = ((s.max(0.0) + 1.0) / GRID_STEP).ceil() as usize;
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..=steps {
        let x = k as f64 * GRID_STEP;
        let v = 0.5 * (x - s).powi(2) + t * x;
        if v < best.0 {
            best = (v, x);
        }
    }
    best.1
}

fn prox_objective(x: &DenseMatrix, m: &DenseMatrix, w: &WeightVector, mu: f64) -> f64 {
    let sv = thin_svd(x).unwrap().singular_values;
    let pen: f64 = w.as_slice().iter().zip(&sv).map(|(w, s)| w * s).sum();
    0.5 * (x - m).frobenius_norm_squared() + mu * pen
}

fn random_instance(rng: &mut ChaCha8Rng) -> (DenseMatrix, WeightVector, f64) {
    let rows = rng.random_range(1..=6);
    let cols = rng.random_range(1..=5);
    let m = DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-2.0..2.0));
    let k = rows.min(cols);
    let mut w: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.5)).collect();
    w.sort_by(f64::total_cmp);
    let mu = rng.random_range(0.05..1.0);
    (m, WeightVector::new(w).unwrap(), mu)
}

#[test]
fn singular_values_match_scalar_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..200 {
        let (m, w, mu) = random_instance(&mut rng);
        let input = thin_svd(&m).unwrap().singular_values;
        let out = shrink(&m, &w, mu).unwrap();
        let got = thin_svd(&out.x).unwrap().singular_values;
        for i in 0..input.len() {
            let expect = scalar_grid_minimizer(input[i], mu * w.as_slice()[i]);
            assert!(
                (got[i] - expect).abs() <= 1e-4,
                "case {case}, index {i}: shrink {} vs grid {expect}",
                got[i]
            );
        }
    }
}

#[test]
fn output_beats_random_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..200 {
        let (m, w, mu) = random_instance(&mut rng);
        let x = shrink(&m, &w, mu).unwrap().x;
        let best = prox_objective(&x, &m, &w, mu);
        for _ in 0..200 {
            let scale = 10f64.powf(rng.random_range(-4.0..0.0));
            let e = DenseMatrix::from_fn(m.rows(), m.cols(), |_, _| scale * rng.random_range(-1.0..1.0));
            let v = prox_objective(&(&x + &e), &m, &w, mu);
            assert!(v >= best - 1e-12, "case {case}: perturbation improves {best} to {v}");
        }
    }
}

#[test]
fn scalar_oracle_examples() {
    assert!((scalar_grid_minimizer(3.0, 1.0) - 2.0).abs() < 1e-9);
    assert_eq!(scalar_grid_minimizer(0.5, 1.0), 0.0);
}

fn small_matrix() -> impl Strategy<Value = DenseMatrix> {
    (1usize..=5, 1usize..=5).prop_flat_map(|(r, c)| {
        prop::collection::vec(-5.0f64..5.0, r * c)
            .prop_map(move |v| DenseMatrix::from_row_major(r, c, v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn shrink_never_increases_singular_values(m in small_matrix(), lambda in 0.0f64..3.0, mu in 0.01f64..2.0) {
        let k = m.rows().min(m.cols());
        let w = WeightVector::constant(k, lambda).unwrap();
        let before = thin_svd(&m).unwrap().singular_values;
        let after = shrink(&m, &w, mu).unwrap().factors.singular_values;
        for (a, b) in after.iter().zip(&before) {
            prop_assert!(*a <= *b + 1e-12);
            prop_assert!(*a >= 0.0);
        }
    }

    #[test]
    fn shrink_is_nonexpansive(a in small_matrix(), seed in any::<u64>(), lambda in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DenseMatrix::from_fn(a.rows(), a.cols(), |_, _| rng.random_range(-5.0..5.0));
        let w = WeightVector::constant(a.rows().min(a.cols()), lambda).unwrap();
        let pa = shrink(&a, &w, 0.7).unwrap().x;
        let pb = shrink(&b, &w, 0.7).unwrap().x;
        prop_assert!((&pa - &pb).frobenius_norm() <= (&a - &b).frobenius_norm() + 1e-9);
    }

    #[test]
    fn shrink_commutes_with_transpose(m in small_matrix(), lambda in 0.0f64..2.0) {
        let w = WeightVector::constant(m.rows().min(m.cols()), lambda).unwrap();
        let direct = shrink(&m, &w, 0.5).unwrap().x.transpose();
        let flipped = shrink(&m.transpose(), &w, 0.5).unwrap().x;
        prop_assert!(direct.max_abs_diff(&flipped) <= 1e-10);
    }
}
