//! Generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use gradgraph::composition::{CompositionKind, Dims};
use gradgraph::harmony::{HarmonyParams, LambdaMode};
use gradgraph::model::{EmbeddingTable, Model, ModelSpec};
use gradgraph::kb::Triplet;
use gradgraph::tensor::{DenseVector, SymmetricMatrix};
use gradgraph::training::{batch_loss, batch_loss_and_grads, LossKind, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const FD_STEP: f64 = 1e-6;
pub const FD_FLOOR: f64 = 1e-3;
pub const GRAD_TOL: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn vector(rng: &mut ChaCha8Rng, n: usize) -> DenseVector {
    DenseVector::new(gaussian(rng, n)).unwrap()
}

/// Random symmetric matrix with Frobenius norm exactly `target`.
pub fn symmetric_with_norm(rng: &mut ChaCha8Rng, d: usize, target: f64) -> SymmetricMatrix {
    let w = SymmetricMatrix::symmetrize(d, &gaussian(rng, d * d)).unwrap();
    let n = w.frobenius_norm();
    if n == 0.0 {
        return w;
    }
    w.scaled(target / n)
}

/// Within-bound parameters: `|W|_F = u * lambda` with `u` uniform in `[0, max_fraction]`.
pub fn random_params(rng: &mut ChaCha8Rng, d: usize, lambda: f64, max_fraction: f64) -> HarmonyParams {
    let u: f64 = rng.random_range(0.0..max_fraction);
    let w = symmetric_with_norm(rng, d, u * lambda);
    let b = vector(rng, d);
    let p = HarmonyParams::new(w, b, LambdaMode::Finite(lambda)).unwrap();
    assert!(p.within_bound());
    p
}

/// Largest eigenvalue by cyclic Jacobi rotations.
pub fn jacobi_max_eigenvalue(w: &SymmetricMatrix) -> f64 {
    let d = w.dim();
    let mut a = w.as_slice().to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * d + j].powi(2))
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..d).map(|i| a[i * d + i]).fold(f64::NEG_INFINITY, f64::max)
}

/// Position of the truth in a descending sort of the surviving candidates,
/// placed midway (rounding toward the front) through its block of ties.
pub fn brute_force_rank(true_score: f64, others: &[f64]) -> usize {
    let mut all: Vec<(f64, bool)> = others.iter().map(|&s| (s, false)).collect();
    all.push((true_score, true));
    all.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
    let first = all.iter().position(|&(s, _)| s == true_score).unwrap();
    let last = all.iter().rposition(|&(s, _)| s == true_score).unwrap();
    let block = last - first + 1;
    first + 1 + (block - 1) / 2
}

pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn dims_for(kind: CompositionKind, d: usize) -> Dims {
    match kind {
        CompositionKind::HTPR => Dims::tensor_product(2, 2),
        _ => Dims::square(d),
    }
}

/// A model with random embeddings and, for Harmonic kinds, random within-bound `W`, `b`.
pub fn random_model(
    rng: &mut ChaCha8Rng,
    kind: CompositionKind,
    d: usize,
    lambda: LambdaMode,
    n_entities: usize,
    n_relations: usize,
) -> Model {
    let dims = dims_for(kind, d);
    let spec = ModelSpec::new(kind, dims, lambda).unwrap();
    let seed: u64 = rng.random();
    let embeddings = EmbeddingTable::random_unit(n_entities, n_relations, dims, seed);
    let h = dims.hidden;
    let (w, b) = if kind.is_baseline() {
        (SymmetricMatrix::zeros(h), DenseVector::zeros(h))
    } else {
        let scale = lambda.finite().unwrap_or(2.0);
        let frac: f64 = rng.random_range(0.1..0.8);
        (symmetric_with_norm(rng, h, frac * scale), vector(rng, h))
    };
    Model::from_parts(&spec, embeddings, w, b).unwrap()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn random_batch(r: &mut rand_chacha::ChaCha8Rng, n_e: usize, n_r: usize) -> Vec<(Triplet, Vec<Triplet>)> {
    let mut t = || Triplet::new(r.random_range(0..n_e), r.random_range(0..n_r), r.random_range(0..n_e));
    (0..3).map(|_| (t(), (0..4).map(|_| t()).collect())).collect()
}

fn with_w(model: &Model, i: usize, j: usize, h: f64) -> Model {
    let mut m = model.clone();
    let d = m.dims.hidden;
    let mut w = m.harmony.w().as_slice().to_vec();
    w[i * d + j] += h;
    if i != j {
        w[j * d + i] += h;
    }
    m.harmony.set_weights(SymmetricMatrix::from_row_major(d, w).unwrap()).unwrap();
    m
}

fn with_b(model: &Model, i: usize, h: f64) -> Model {
    let mut m = model.clone();
    let mut b = m.harmony.b().as_slice().to_vec();
    b[i] += h;
    m.harmony.set_bias(DenseVector::new(b).unwrap()).unwrap();
    m
}

/// Compares every parameter's loss gradient of a random model against central differences; returns the worst error.
pub fn loss_gradient_error(kind: CompositionKind, lambda: LambdaMode, loss: LossKind, seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n_e, n_r) = (6, 2);
    let d = r.random_range(2..=8);
    let model = random_model(&mut r, kind, d, lambda, n_e, n_r);
    let batch = random_batch(&mut r, n_e, n_r);
    let cfg = TrainConfig {
        loss_kind: loss,
        margin: 1.0,
        ..TrainConfig::default()
    };
    let (_, g) = batch_loss_and_grads(&model, &batch, &cfg).unwrap();
    let l = |m: &Model| batch_loss(m, &batch, &cfg).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..g.entities.len() {
        let (mut p, mut m) = (model.clone(), model.clone());
        p.embeddings.entities.as_mut_slice()[i] += FD_STEP;
        m.embeddings.entities.as_mut_slice()[i] -= FD_STEP;
        worst = worst.max(rel_err(g.entities[i], (l(&p) - l(&m)) / (2.0 * FD_STEP), FD_FLOOR));
    }
    for i in 0..g.relations.len() {
        let (mut p, mut m) = (model.clone(), model.clone());
        p.embeddings.relations.as_mut_slice()[i] += FD_STEP;
        m.embeddings.relations.as_mut_slice()[i] -= FD_STEP;
        worst = worst.max(rel_err(g.relations[i], (l(&p) - l(&m)) / (2.0 * FD_STEP), FD_FLOOR));
    }
    let d = model.dims.hidden;
    if kind.is_baseline() {
        assert!(g.w.iter().chain(&g.b).all(|v| *v == 0.0));
        return worst;
    }
    for i in 0..d {
        let fd = (l(&with_b(&model, i, FD_STEP)) - l(&with_b(&model, i, -FD_STEP))) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(g.b[i], fd, FD_FLOOR));
        for j in i..d {
            let fd = (l(&with_w(&model, i, j, FD_STEP)) - l(&with_w(&model, i, j, -FD_STEP))) / (2.0 * FD_STEP);
            let an = if i == j { g.w[i * d + i] } else { g.w[i * d + j] + g.w[j * d + i] };
            worst = worst.max(rel_err(an, fd, FD_FLOOR));
        }
    }
    worst
}
