//! The quadratic Harmony function
//!
//! ```text
//! H(h, x) = 1/2 [ h^T W h + b^T h - lambda (h - x)^T (h - x) ]
//! ```
//!
//! and everything derived from it: the unique maximizer `mu(x)`, the triplet
//! score `H(mu(x), x)`, its parameter gradients, the gradient-flow dynamics
//! whose fixed point is `mu(x)`, and the Gaussian log-partition.
//!
//! With `V = W - lambda I` negative-definite the maximizer is
//! `mu(x) = -V^{-1} (b/2 + lambda x)` and the score has the closed form
//! `l(x) = 1/2 [ -lambda x^T x - 1/4 m^T V^{-1} m ]`, `m = b + 2 lambda x`.
//! Since `-1/2 V^{-1} m = mu(x)`, `l(x) = 1/2 [ -lambda x^T x + 1/2 m^T mu(x) ]`,
//! so a single linear solve yields both the token embedding and the score.

use std::f64::consts::PI;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::tensor::{dot, norm, norm_inf, Cholesky, DenseVector, SymmetricMatrix};

/// Faithfulness strength. `Infinite` pins the hidden state to `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LambdaMode {
    Finite(f64),
    Infinite,
}

impl LambdaMode {
    pub fn finite(self) -> Option<f64> {
        match self {
            LambdaMode::Finite(l) => Some(l),
            LambdaMode::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, LambdaMode::Infinite)
    }
}

impl fmt::Display for LambdaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaMode::Finite(l) => write!(f, "{l}"),
            LambdaMode::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for LambdaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if ["inf", "infinity", "∞"].iter().any(|k| t.eq_ignore_ascii_case(k)) {
            return Ok(LambdaMode::Infinite);
        }
        let v: f64 = t
            .parse()
            .map_err(|_| Error::Config(format!("invalid lambda {s:?}")))?;
        if v.is_infinite() && v > 0.0 {
            return Ok(LambdaMode::Infinite);
        }
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Config(format!("lambda must be positive, got {s:?}")));
        }
        Ok(LambdaMode::Finite(v))
    }
}

/// Default norm-bound slack as a fraction of lambda.
pub const DEFAULT_EPSILON_FRACTION: f64 = 0.01;

/// `W`, `b`, `lambda` and the norm-bound slack `epsilon`.
///
/// The Cholesky factor of `-V = lambda I - W` is computed on first use and
/// cached until the next mutation. Mutation needs `&mut self`, so shared
/// readers never observe a stale factor.
#[derive(Debug, Clone)]
pub struct HarmonyParams {
    w: SymmetricMatrix,
    b: DenseVector,
    lambda: LambdaMode,
    epsilon: f64,
    factor: OnceLock<std::result::Result<Cholesky, usize>>,
}

impl PartialEq for HarmonyParams {
    fn eq(&self, other: &Self) -> bool {
        self.w == other.w
            && self.b == other.b
            && self.lambda == other.lambda
            && self.epsilon == other.epsilon
    }
}

impl HarmonyParams {
    pub fn new(w: SymmetricMatrix, b: DenseVector, lambda: LambdaMode) -> Result<Self> {
        check_dim("harmony bias", w.dim(), b.dim())?;
        let epsilon = match lambda {
            LambdaMode::Finite(l) => {
                if !(l > 0.0) || !l.is_finite() {
                    return Err(Error::Config(format!("lambda must be positive and finite, got {l}")));
                }
                DEFAULT_EPSILON_FRACTION * l
            }
            LambdaMode::Infinite => 0.0,
        };
        Ok(HarmonyParams {
            w,
            b,
            lambda,
            epsilon,
            factor: OnceLock::new(),
        })
    }

    pub fn zeros(dim: usize, lambda: LambdaMode) -> Result<Self> {
        Self::new(SymmetricMatrix::zeros(dim), DenseVector::zeros(dim), lambda)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if let LambdaMode::Finite(l) = self.lambda {
            if !(epsilon > 0.0 && epsilon < l) {
                return Err(Error::Config(format!("epsilon must lie in (0, lambda), got {epsilon}")));
            }
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.w.dim()
    }

    pub fn w(&self) -> &SymmetricMatrix {
        &self.w
    }

    pub fn b(&self) -> &DenseVector {
        &self.b
    }

    pub fn lambda(&self) -> LambdaMode {
        self.lambda
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn set_weights(&mut self, w: SymmetricMatrix) -> Result<()> {
        check_dim("harmony weights", self.dim(), w.dim())?;
        self.w = w;
        self.factor = OnceLock::new();
        Ok(())
    }

    pub fn set_bias(&mut self, b: DenseVector) -> Result<()> {
        check_dim("harmony bias", self.dim(), b.dim())?;
        self.b = b;
        self.factor = OnceLock::new();
        Ok(())
    }

    /// Same `W` and `b` with a different faithfulness mode.
    pub fn with_lambda(&self, lambda: LambdaMode) -> Result<Self> {
        Self::new(self.w.clone(), self.b.clone(), lambda)
    }

    /// `|W|_F <= lambda - epsilon` (always true for infinite lambda).
    pub fn within_bound(&self) -> bool {
        match self.lambda {
            LambdaMode::Finite(l) => self.w.frobenius_norm() <= l - self.epsilon,
            LambdaMode::Infinite => true,
        }
    }

    fn finite_lambda(&self) -> Result<f64> {
        self.lambda.finite().ok_or(Error::InfiniteLambda)
    }

    /// Cholesky factor of `-V = lambda I - W`.
    pub fn neg_v_factor(&self) -> Result<&Cholesky> {
        let l = self.finite_lambda()?;
        self.factor
            .get_or_init(|| {
                Cholesky::factor(&self.w.scaled(-1.0).shifted(l)).map_err(|e| match e {
                    Error::LambdaBelowSpectralBound { pivot } => pivot,
                    _ => 0,
                })
            })
            .as_ref()
            .map_err(|&pivot| Error::LambdaBelowSpectralBound { pivot })
    }

    /// `W = (W + W^T)/2`, then rescale so that `|W|_F <= lambda - epsilon`.
    pub fn constrain(&mut self) {
        let sym = SymmetricMatrix::symmetrize(self.dim(), self.w.as_slice())
            .expect("weights are finite and square");
        let w = match self.lambda {
            LambdaMode::Finite(l) => {
                let bound = l - self.epsilon;
                let f = sym.frobenius_norm();
                if f > bound {
                    // shave an ulp-scale margin so the bound survives rounding
                    sym.scaled(bound / f * (1.0 - 1e-14))
                } else {
                    sym
                }
            }
            LambdaMode::Infinite => sym,
        };
        if w != self.w {
            self.w = w;
            self.factor = OnceLock::new();
        }
    }
}

/// Returns a constrained copy of `p`; see [`HarmonyParams::constrain`].
pub fn constrain_params(p: &HarmonyParams) -> HarmonyParams {
    let mut out = p.clone();
    out.constrain();
    out
}

fn check_x(x: &[f64], p: &HarmonyParams) -> Result<()> {
    check_dim("harmony input", p.dim(), x.len())
}

/// `H(h, x)` for finite lambda.
pub fn harmony(h: &DenseVector, x: &DenseVector, p: &HarmonyParams) -> Result<f64> {
    let l = p.finite_lambda()?;
    check_x(h, p)?;
    check_x(x, p)?;
    let core = p.w.quadratic_form(h)? + dot(p.b(), h);
    let diff: Vec<f64> = h.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
    Ok(0.5 * (core - l * dot(&diff, &diff)))
}

/// `H(x, x) = 1/2 (x^T W x + b^T x)`, the score of the infinite-lambda models.
pub fn harmony_type(x: &DenseVector, p: &HarmonyParams) -> Result<f64> {
    check_x(x, p)?;
    Ok(harmony_type_slice(x, p))
}

fn harmony_type_slice(x: &[f64], p: &HarmonyParams) -> f64 {
    let wx = p.w.matvec_unchecked(x);
    0.5 * (dot(&wx, x) + dot(p.b(), x))
}

/// Gradient of `H(., x)` at `h = x`: `g = W x + b/2`.
fn type_gradient(x: &[f64], p: &HarmonyParams) -> Vec<f64> {
    let wx = p.w.matvec_unchecked(x);
    wx.iter().zip(p.b().iter()).map(|(a, bi)| a + 0.5 * bi).collect()
}

/// `mu(x)` as `x + delta` with `(lambda I - W) delta = g`, plus `g`.
///
/// Equivalent to `(lambda I - W)^{-1}(b/2 + lambda x)` but solves only for
/// the correction, so `W = 0, b = 0` gives `mu = x` exactly.
fn mu_slice(x: &[f64], p: &HarmonyParams) -> Result<(Vec<f64>, Vec<f64>)> {
    p.finite_lambda()?;
    let g = type_gradient(x, p);
    let delta = p.neg_v_factor()?.solve(&g);
    let mu = x.iter().zip(&delta).map(|(a, d)| a + d).collect();
    Ok((mu, g))
}

/// The maximizer `mu(x) = -V^{-1}(b/2 + lambda x)`.
pub fn mu(x: &DenseVector, p: &HarmonyParams) -> Result<DenseVector> {
    check_x(x, p)?;
    let (m, _) = mu_slice(x, p)?;
    Ok(DenseVector::from_vec_unchecked(m))
}

/// A scored triplet embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTriplet {
    pub x: DenseVector,
    /// `mu(x)`; `None` for infinite lambda, where the token embedding is `x`.
    pub mu: Option<DenseVector>,
    pub score: f64,
}

impl ScoredTriplet {
    pub fn token(&self) -> &DenseVector {
        self.mu.as_ref().unwrap_or(&self.x)
    }
}

/// Score and the hidden state at which it is attained (`mu(x)` or `x`).
///
/// For finite lambda this is `l(x)`, evaluated as `H(x, x) + g^T (mu - x) / 2`,
/// the maximum of a concave quadratic expanded around `h = x`.
pub(crate) fn score_and_state(x: &[f64], p: &HarmonyParams) -> Result<(f64, Option<Vec<f64>>)> {
    let base = harmony_type_slice(x, p);
    match p.lambda() {
        LambdaMode::Infinite => Ok((base, None)),
        LambdaMode::Finite(_) => {
            let (mu, g) = mu_slice(x, p)?;
            let gain: f64 = g.iter().zip(&mu).zip(x).map(|((gi, m), xi)| gi * (m - xi)).sum();
            Ok((base + 0.5 * gain, Some(mu)))
        }
    }
}

pub fn evaluate(x: &DenseVector, p: &HarmonyParams) -> Result<ScoredTriplet> {
    check_x(x, p)?;
    let (score, mu) = score_and_state(x, p)?;
    Ok(ScoredTriplet {
        x: x.clone(),
        mu: mu.map(DenseVector::from_vec_unchecked),
        score,
    })
}

/// `H(mu(x), x)` via the closed form `l(x)`; `H(x, x)` for infinite lambda.
pub fn score(x: &DenseVector, p: &HarmonyParams) -> Result<f64> {
    check_x(x, p)?;
    score_and_state(x, p).map(|(s, _)| s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGradients {
    pub grad_x: DenseVector,
    pub grad_w: SymmetricMatrix,
    pub grad_b: DenseVector,
}

/// Gradient of the score w.r.t. `x` given the hidden state it was attained at.
///
/// Finite lambda (envelope property): `lambda (mu - x)`.
/// Infinite lambda: `W x + b/2`.
pub(crate) fn grad_x_from_state(x: &[f64], state: Option<&[f64]>, p: &HarmonyParams) -> Vec<f64> {
    match (p.lambda(), state) {
        (LambdaMode::Finite(l), Some(mu)) => mu.iter().zip(x).map(|(m, xi)| l * (m - xi)).collect(),
        _ => type_gradient(x, p),
    }
}

/// Analytic gradients of [`score`].
///
/// With `h` the maximizing hidden state (`mu(x)`, or `x` for infinite
/// lambda): `dW = h h^T / 2`, `db = h / 2`, and `dx` as in the envelope rule.
pub fn score_gradients(x: &DenseVector, p: &HarmonyParams) -> Result<ScoreGradients> {
    check_x(x, p)?;
    let (_, state) = score_and_state(x, p)?;
    let grad_x = grad_x_from_state(x, state.as_deref(), p);
    let h: &[f64] = state.as_deref().unwrap_or(x);
    Ok(ScoreGradients {
        grad_x: DenseVector::from_vec_unchecked(grad_x),
        grad_w: SymmetricMatrix::outer(h, 0.5),
        grad_b: DenseVector::from_vec_unchecked(h.iter().map(|v| 0.5 * v).collect()),
    })
}

/// `dH/dh = W h + b/2 + lambda x - lambda h`.
fn harmony_gradient(h: &[f64], x: &[f64], p: &HarmonyParams, l: f64) -> Vec<f64> {
    let wh = p.w.matvec_unchecked(h);
    wh.iter()
        .zip(p.b().iter())
        .zip(x)
        .zip(h)
        .map(|(((whi, bi), xi), hi)| whi + 0.5 * bi + l * (xi - hi))
        .collect()
}

/// Gradient of `H(., x)` w.r.t. the hidden state.
pub fn harmony_grad_h(h: &DenseVector, x: &DenseVector, p: &HarmonyParams) -> Result<DenseVector> {
    let l = p.finite_lambda()?;
    check_x(h, p)?;
    check_x(x, p)?;
    Ok(DenseVector::from_vec_unchecked(harmony_gradient(h, x, p, l)))
}

const DIVERGENCE_NORM: f64 = 1e12;

/// Explicit-Euler integration of `dh/dt = dH/dh`.
///
/// Stops as soon as the current state is provably within `tol` of the
/// fixed point: for `V` negative-definite, `|h - mu|_2 <= |dH/dh|_2 / (lambda - lambda_max)`
/// and `lambda - lambda_max >= lambda - |W|_F`. If that gap bound is not
/// positive, falls back to `|dh|_inf < tol`. Returns the final state and the
/// number of Euler updates applied.
pub fn integrate_dynamics(
    x: &DenseVector,
    p: &HarmonyParams,
    h0: &DenseVector,
    step: f64,
    tol: f64,
    max_steps: usize,
) -> Result<(DenseVector, usize)> {
    let l = p.finite_lambda()?;
    check_x(x, p)?;
    check_x(h0, p)?;
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Config(format!("step must be positive, got {step}")));
    }
    let gap = l - p.w().frobenius_norm();
    let mut h = h0.to_vec();
    for k in 0..max_steps {
        let g = harmony_gradient(&h, x, p, l);
        let done = if gap > 0.0 {
            norm(&g) / gap <= tol
        } else {
            step * norm_inf(&g) < tol
        };
        if done {
            return Ok((DenseVector::from_vec_unchecked(h), k));
        }
        for (hi, gi) in h.iter_mut().zip(&g) {
            *hi += step * gi;
        }
        if !(norm_inf(&h) <= DIVERGENCE_NORM) {
            return Err(Error::StepTooLarge { steps: k + 1 });
        }
    }
    Err(Error::DynamicsNotConverged {
        steps: max_steps,
        state: h,
    })
}

/// `log Z(x) = 1/2 log det(2 pi (-V)^{-1}) + l(x)`.
pub fn log_partition(x: &DenseVector, p: &HarmonyParams) -> Result<f64> {
    p.finite_lambda()?;
    let l_x = score(x, p)?;
    let chol = p.neg_v_factor()?;
    let d = p.dim() as f64;
    Ok(0.5 * (d * (2.0 * PI).ln() - chol.log_det()) + l_x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    fn zeros(d: usize, l: f64) -> HarmonyParams {
        HarmonyParams::zeros(d, LambdaMode::Finite(l)).unwrap()
    }

    #[test]
    fn harmony_examples() {
        let p = zeros(2, 1.0);
        let x = v(&[0.3, -1.2]);
        assert_eq!(harmony(&x, &x, &p).unwrap(), 0.0);
        assert_eq!(harmony(&DenseVector::zeros(2), &v(&[2.0, 0.0]), &p).unwrap(), -2.0);
    }

    #[test]
    fn harmony_type_examples() {
        let p = zeros(2, 1.0);
        assert_eq!(harmony_type(&v(&[4.0, 5.0]), &p).unwrap(), 0.0);
        let half = HarmonyParams::new(
            SymmetricMatrix::identity(2).scaled(0.5),
            DenseVector::zeros(2),
            LambdaMode::Infinite,
        )
        .unwrap();
        assert_eq!(harmony_type(&v(&[1.0, 1.0]), &half).unwrap(), 0.5);
    }

    #[test]
    fn mu_examples() {
        let x = v(&[0.25, -0.5]);
        for l in [0.5, 1.0, 7.0] {
            let m = mu(&x, &zeros(2, l)).unwrap();
            assert!((m[0] - 0.25).abs() < 1e-15 && (m[1] + 0.5).abs() < 1e-15);
        }
        let p = HarmonyParams::new(SymmetricMatrix::zeros(2), v(&[2.0, 4.0]), LambdaMode::Finite(1.0)).unwrap();
        let m = mu(&x, &p).unwrap();
        assert!((m[0] - 1.25).abs() < 1e-15 && (m[1] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn mu_reports_spectral_bound() {
        let p = HarmonyParams::new(
            SymmetricMatrix::diagonal(&[2.0, 0.0]).unwrap(),
            DenseVector::zeros(2),
            LambdaMode::Finite(1.0),
        )
        .unwrap();
        assert!(matches!(mu(&v(&[1.0, 1.0]), &p), Err(Error::LambdaBelowSpectralBound { .. })));
        assert!(matches!(score(&v(&[1.0, 1.0]), &p), Err(Error::LambdaBelowSpectralBound { .. })));
    }

    #[test]
    fn infinite_lambda_refuses_finite_only_ops() {
        let p = HarmonyParams::zeros(2, LambdaMode::Infinite).unwrap();
        let x = v(&[1.0, 2.0]);
        assert!(matches!(mu(&x, &p), Err(Error::InfiniteLambda)));
        assert!(matches!(harmony(&x, &x, &p), Err(Error::InfiniteLambda)));
        assert!(matches!(log_partition(&x, &p), Err(Error::InfiniteLambda)));
        assert_eq!(score(&x, &p).unwrap(), 0.0);
        let s = evaluate(&x, &p).unwrap();
        assert_eq!(s.token(), &x);
    }

    #[test]
    fn score_vanishes_without_weights() {
        let p = zeros(3, 1.0);
        assert!(score(&v(&[0.3, 2.0, -1.0]), &p).unwrap().abs() < 1e-15);
    }

    #[test]
    fn gradients_special_cases() {
        let p = zeros(2, 1.5);
        let g = score_gradients(&v(&[0.4, -0.1]), &p).unwrap();
        assert!(g.grad_x.norm_inf() < 1e-15);

        // x = -b / (2 lambda) gives mu(x) = 0 when W = 0
        let p = HarmonyParams::new(SymmetricMatrix::zeros(2), v(&[1.0, -2.0]), LambdaMode::Finite(2.0)).unwrap();
        let g = score_gradients(&v(&[-0.25, 0.5]), &p).unwrap();
        assert!(g.grad_w.frobenius_norm() < 1e-15);
        assert!(g.grad_b.norm_inf() < 1e-15);
    }

    #[test]
    fn dynamics_examples() {
        let p = zeros(2, 1.0);
        let x = v(&[0.7, -0.2]);
        let (h, _) = integrate_dynamics(&x, &p, &DenseVector::zeros(2), 0.1, 1e-12, 100_000).unwrap();
        assert!((h[0] - 0.7).abs() < 1e-11 && (h[1] + 0.2).abs() < 1e-11);

        let m = mu(&x, &p).unwrap();
        let (h, steps) = integrate_dynamics(&x, &p, &m, 0.1, 1e-10, 10).unwrap();
        assert_eq!(steps, 0);
        assert_eq!(h, m);
    }

    #[test]
    fn dynamics_failure_modes() {
        let p = zeros(2, 1.0);
        let x = v(&[1.0, 1.0]);
        assert!(matches!(
            integrate_dynamics(&x, &p, &DenseVector::zeros(2), 5.0, 1e-10, 10_000),
            Err(Error::StepTooLarge { .. })
        ));
        assert!(matches!(
            integrate_dynamics(&x, &p, &DenseVector::zeros(2), 1e-3, 1e-12, 5),
            Err(Error::DynamicsNotConverged { steps: 5, .. })
        ));
    }

    #[test]
    fn log_partition_examples() {
        let lz = log_partition(&v(&[0.0]), &zeros(1, 1.0)).unwrap();
        assert!((lz - 0.5 * (2.0 * PI).ln()).abs() < 1e-14);
        assert!((lz - 0.9189385332046727).abs() < 1e-12);

        // V = -2I from W = 0, lambda = 2
        let lz = log_partition(&v(&[0.0, 0.0]), &zeros(2, 2.0)).unwrap();
        assert!((lz - PI.ln()).abs() < 1e-14);
    }

    #[test]
    fn constrain_examples() {
        let w = SymmetricMatrix::diagonal(&[0.3, 0.4]).unwrap();
        let p = HarmonyParams::new(w.clone(), DenseVector::zeros(2), LambdaMode::Finite(1.0)).unwrap();
        assert!((w.frobenius_norm() - 0.5).abs() < 1e-12);
        assert_eq!(constrain_params(&p), p);

        let p = HarmonyParams::new(
            SymmetricMatrix::diagonal(&[3.0, 3.0]).unwrap(),
            DenseVector::zeros(2),
            LambdaMode::Finite(1.0),
        )
        .unwrap();
        let c = constrain_params(&p);
        assert!((c.w().frobenius_norm() - 0.99).abs() < 1e-12);
        assert!(c.within_bound());
    }

    #[test]
    fn factor_cache_is_invalidated() {
        let mut p = zeros(2, 1.0);
        let x = v(&[1.0, 0.0]);
        assert!((mu(&x, &p).unwrap()[0] - 1.0).abs() < 1e-15);
        p.set_weights(SymmetricMatrix::diagonal(&[0.5, 0.0]).unwrap()).unwrap();
        // (1 - 0.5)^{-1} * 1 = 2
        assert!((mu(&x, &p).unwrap()[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn lambda_parsing() {
        assert_eq!("inf".parse::<LambdaMode>().unwrap(), LambdaMode::Infinite);
        assert_eq!("2.5".parse::<LambdaMode>().unwrap(), LambdaMode::Finite(2.5));
        assert!("-1".parse::<LambdaMode>().is_err());
        assert!("0".parse::<LambdaMode>().is_err());
        assert!("abc".parse::<LambdaMode>().is_err());
    }
}
