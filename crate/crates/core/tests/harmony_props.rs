mod common;

use common::{gaussian, random_params, rel_err, rng, symmetric_with_norm, vector};
use gradgraph::harmony::{
    constrain_params, evaluate, harmony, harmony_grad_h, harmony_type, integrate_dynamics, log_partition, mu, score,
    score_gradients, HarmonyParams, LambdaMode,
};
use gradgraph::tensor::{DenseVector, SymmetricMatrix};
use proptest::prelude::*;
use rand::Rng;

fn with(p: &HarmonyParams, w: SymmetricMatrix, b: DenseVector) -> HarmonyParams {
    HarmonyParams::new(w, b, p.lambda()).unwrap()
}

fn perturb(v: &DenseVector, i: usize, h: f64) -> DenseVector {
    let mut out = v.as_slice().to_vec();
    out[i] += h;
    DenseVector::new(out).unwrap()
}

fn perturb_sym(w: &SymmetricMatrix, i: usize, j: usize, h: f64) -> SymmetricMatrix {
    let d = w.dim();
    let mut data = w.as_slice().to_vec();
    data[i * d + j] += h;
    if i != j {
        data[j * d + i] += h;
    }
    SymmetricMatrix::from_row_major(d, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mu_is_the_strict_maximum(d in 1usize..=16, lambda in 0.2f64..5.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_params(&mut r, d, lambda, 0.95);
        let x = vector(&mut r, d);
        let m = mu(&x, &p).unwrap();
        let top = harmony(&m, &x, &p).unwrap();
        prop_assert!(harmony_grad_h(&m, &x, &p).unwrap().norm_inf() <= 1e-8 * (1.0 + top.abs()));
        for _ in 0..10 {
            let dir = vector(&mut r, d);
            let scale: f64 = r.random_range(0.0..1.0);
            let h: Vec<f64> = m.iter().zip(dir.iter()).map(|(a, b)| a + scale * b / dir.norm()).collect();
            prop_assert!(harmony(&DenseVector::new(h).unwrap(), &x, &p).unwrap() < top);
        }
    }

    #[test]
    fn closed_form_score_equals_harmony_at_mu(d in 1usize..=16, lambda in 0.2f64..5.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_params(&mut r, d, lambda, 0.95);
        let x = vector(&mut r, d);
        let a = score(&x, &p).unwrap();
        let b = harmony(&mu(&x, &p).unwrap(), &x, &p).unwrap();
        prop_assert!(rel_err(a, b, 1e-12) <= 1e-9, "{a} vs {b}");
    }

    #[test]
    fn optimization_never_loses_harmony(d in 1usize..=16, lambda in 0.2f64..5.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_params(&mut r, d, lambda, 0.95);
        let x = vector(&mut r, d);
        let gain = score(&x, &p).unwrap() - harmony_type(&x, &p).unwrap();
        prop_assert!(gain >= -1e-12);
        let inf = p.with_lambda(LambdaMode::Infinite).unwrap();
        prop_assert_eq!(score(&x, &inf).unwrap(), harmony_type(&x, &p).unwrap());
        prop_assert!(evaluate(&x, &inf).unwrap().mu.is_none());
    }

    #[test]
    fn score_gradients_match_finite_differences(
        d in 1usize..=8,
        lambda in 0.5f64..4.0,
        infinite in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let mut p = random_params(&mut r, d, lambda, 0.9);
        if infinite {
            p = p.with_lambda(LambdaMode::Infinite).unwrap();
        }
        let x = vector(&mut r, d);
        let g = score_gradients(&x, &p).unwrap();
        let h = 1e-6;
        for i in 0..d {
            let fd = (score(&perturb(&x, i, h), &p).unwrap() - score(&perturb(&x, i, -h), &p).unwrap()) / (2.0 * h);
            prop_assert!(rel_err(g.grad_x[i], fd, 1e-3) <= 1e-4, "x[{i}]: {} vs {fd}", g.grad_x[i]);
            let (bp, bm) = (perturb(p.b(), i, h), perturb(p.b(), i, -h));
            let fd = (score(&x, &with(&p, p.w().clone(), bp)).unwrap()
                - score(&x, &with(&p, p.w().clone(), bm)).unwrap()) / (2.0 * h);
            prop_assert!(rel_err(g.grad_b[i], fd, 1e-3) <= 1e-4);
            for j in i..d {
                let (wp, wm) = (perturb_sym(p.w(), i, j, h), perturb_sym(p.w(), i, j, -h));
                let fd = (score(&x, &with(&p, wp, p.b().clone())).unwrap()
                    - score(&x, &with(&p, wm, p.b().clone())).unwrap()) / (2.0 * h);
                let an = if i == j { g.grad_w.get(i, i) } else { g.grad_w.get(i, j) + g.grad_w.get(j, i) };
                prop_assert!(rel_err(an, fd, 1e-3) <= 1e-4, "W[{i},{j}]: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn dynamics_converge_to_mu(d in 1usize..=8, lambda in 0.5f64..4.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_params(&mut r, d, lambda, 0.6);
        let x = vector(&mut r, d);
        let step = 0.1 / (lambda + p.w().frobenius_norm());
        let (h, _) = integrate_dynamics(&x, &p, &x, step, 1e-10, 100_000).unwrap();
        let m = mu(&x, &p).unwrap();
        for (a, b) in h.iter().zip(m.iter()) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn correction_shrinks_as_lambda_grows(d in 1usize..=8, wnorm in 0.1f64..3.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let w = symmetric_with_norm(&mut r, d, wnorm);
        let x = vector(&mut r, d);
        let mut last = f64::INFINITY;
        let mut lambda = 1.1 * wnorm;
        while lambda <= 1e6 {
            let p = HarmonyParams::new(w.clone(), DenseVector::zeros(d), LambdaMode::Finite(lambda)).unwrap();
            let m = mu(&x, &p).unwrap();
            let gap: f64 = m.iter().zip(x.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            prop_assert!(gap <= last * (1.0 + 1e-12) + 1e-300);
            last = gap;
            lambda *= 3.0;
        }
    }

    #[test]
    fn constrain_projects_into_the_bound(d in 1usize..=8, lambda in 0.5f64..4.0, blowup in 0.5f64..4.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let w = symmetric_with_norm(&mut r, d, blowup * lambda);
        let p = HarmonyParams::new(w, vector(&mut r, d), LambdaMode::Finite(lambda)).unwrap();
        let c = constrain_params(&p);
        prop_assert!(c.within_bound());
        prop_assert!(c.w().frobenius_norm() <= lambda - c.epsilon());
        prop_assert_eq!(constrain_params(&c), c.clone());
        if p.within_bound() {
            prop_assert_eq!(c, p);
        }
    }
}

/// The Gaussian view: `exp(H(., x))` integrates to `Z(x)` and has mean `mu(x)`.
#[test]
fn partition_function_matches_quadrature() {
    let mut r = rng(11);
    for _ in 0..20 {
        let lambda = 0.5 + 3.0 * common::gaussian(&mut r, 1)[0].abs().min(1.0);
        let w = 0.9 * lambda * (2.0 * r.random_range(0.0..1.0) - 1.0);
        let b = gaussian(&mut r, 1)[0];
        let p = HarmonyParams::new(SymmetricMatrix::diagonal(&[w]).unwrap(), DenseVector::new(vec![b]).unwrap(), LambdaMode::Finite(lambda))
            .unwrap();
        let x = vector(&mut r, 1);
        let m = mu(&x, &p).unwrap()[0];
        let sd = 1.0 / (lambda - w).sqrt();
        let (lo, hi, n) = (m - 40.0 * sd, m + 40.0 * sd, 200_000);
        let dh = (hi - lo) / n as f64;
        let (mut z, mut first) = (0.0, 0.0);
        for k in 0..=n {
            let h = lo + k as f64 * dh;
            let wt = if k == 0 || k == n { 0.5 } else { 1.0 };
            let e = harmony(&DenseVector::new(vec![h]).unwrap(), &x, &p).unwrap().exp();
            z += wt * e * dh;
            first += wt * h * e * dh;
        }
        let log_z = log_partition(&x, &p).unwrap();
        assert!((z.ln() - log_z).abs() < 1e-8, "{} vs {log_z}", z.ln());
        assert!((first / z - m).abs() < 1e-8);
    }
}

#[test]
fn large_lambda_gradient_approaches_type_gradient() {
    let mut r = rng(5);
    for _ in 0..50 {
        let d = r.random_range(1..=8);
        let w = symmetric_with_norm(&mut r, d, 2.0);
        let b = vector(&mut r, d);
        let p = HarmonyParams::new(w.clone(), b.clone(), LambdaMode::Finite(1e6)).unwrap();
        let x = vector(&mut r, d);
        let g = score_gradients(&x, &p).unwrap().grad_x;
        let wx = w.matvec(x.as_slice()).unwrap();
        for i in 0..d {
            assert!((g[i] - (wx[i] + 0.5 * b[i])).abs() <= 1e-3 * (1.0 + x.norm()));
        }
    }
}
