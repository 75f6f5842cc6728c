mod common;

use common::{gaussian, jacobi_max_eigenvalue, rng, symmetric_with_norm, vector};
use gradgraph::tensor::{
    circ_convolve, circ_correlate, circ_correlate_naive, max_eigenvalue, Cholesky, DenseVector, SymmetricMatrix,
};
use proptest::prelude::*;

fn naive_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let d = a.len();
    (0..d).map(|k| (0..d).map(|i| a[i] * b[(k + d - i) % d]).sum()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fft_correlation_matches_naive(d in 1usize..70, seed in any::<u64>()) {
        let mut r = rng(seed);
        let (a, b) = (vector(&mut r, d), vector(&mut r, d));
        let fast = circ_correlate(&a, &b).unwrap();
        let slow = circ_correlate_naive(&a, &b).unwrap();
        let scale = 1.0 + a.norm() * b.norm();
        for (x, y) in fast.iter().zip(slow.iter()) {
            prop_assert!((x - y).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn fft_convolution_matches_naive(d in 1usize..70, seed in any::<u64>()) {
        let mut r = rng(seed);
        let (a, b) = (vector(&mut r, d), vector(&mut r, d));
        let fast = circ_convolve(&a, &b).unwrap();
        let slow = naive_convolve(a.as_slice(), b.as_slice());
        let scale = 1.0 + a.norm() * b.norm();
        for (x, y) in fast.iter().zip(&slow) {
            prop_assert!((x - y).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn correlation_of_reversal_is_convolution(d in 1usize..40, seed in any::<u64>()) {
        // (a * b)_k = (rev(a) conv b)_k with rev(a)_i = a_{-i}
        let mut r = rng(seed);
        let (a, b) = (gaussian(&mut r, d), gaussian(&mut r, d));
        let rev: Vec<f64> = (0..d).map(|i| a[(d - i) % d]).collect();
        let lhs = circ_correlate(&DenseVector::new(a).unwrap(), &DenseVector::new(b.clone()).unwrap()).unwrap();
        let rhs = naive_convolve(&rev, &b);
        for (x, y) in lhs.iter().zip(&rhs) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn cholesky_solve_round_trips(d in 1usize..16, seed in any::<u64>()) {
        let mut r = rng(seed);
        let bm = gaussian(&mut r, d * d);
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                a[i * d + j] = (0..d).map(|k| bm[i * d + k] * bm[j * d + k]).sum::<f64>() + if i == j { 1.0 } else { 0.0 };
            }
        }
        let a = SymmetricMatrix::symmetrize(d, &a).unwrap();
        let rhs = gaussian(&mut r, d);
        let sol = Cholesky::factor(&a).unwrap().solve(&rhs);
        let back = a.matvec(&sol).unwrap();
        for (x, y) in back.iter().zip(&rhs) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn power_iteration_matches_jacobi(d in 1usize..=8, norm in 0.1f64..10.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let w = symmetric_with_norm(&mut r, d, norm);
        let got = max_eigenvalue(&w, 1e-12, 100_000).unwrap();
        let want = jacobi_max_eigenvalue(&w);
        prop_assert!((got - want).abs() <= 1e-6 * (1.0 + norm), "{got} vs {want}");
        prop_assert!(got <= norm + 1e-9);
    }
}

#[test]
fn sign_alternating_matrix_finds_top_eigenvalue() {
    let w = SymmetricMatrix::from_row_major(2, vec![0.0, -1.0, -1.0, 0.0]).unwrap();
    let got = max_eigenvalue(&w, 1e-12, 10_000).unwrap();
    assert!((got - 1.0).abs() < 1e-6);
    assert!((jacobi_max_eigenvalue(&w) - 1.0).abs() < 1e-12);
}
