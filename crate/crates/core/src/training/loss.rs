use rand::Rng;

use crate::error::{Error, Result};
use crate::kb::Triplet;

/// `n` corruptions of `t`: one entity, chosen uniformly by side, replaced by a different uniform entity.
pub fn sample_negatives(t: &Triplet, n_entities: usize, n: usize, rng: &mut impl Rng) -> Result<Vec<Triplet>> {
    if n_entities < 2 {
        return Err(Error::Invalid(format!(
            "negative sampling needs at least 2 entities, have {n_entities}"
        )));
    }
    Ok((0..n)
        .map(|_| {
            let mut neg = *t;
            let slot = if rng.random_bool(0.5) {
                &mut neg.left
            } else {
                &mut neg.right
            };
            let r = rng.random_range(0..n_entities - 1);
            *slot = if r >= *slot { r + 1 } else { r };
            neg
        })
        .collect())
}

/// Loss value and its derivatives with respect to each score.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub d_pos: f64,
    pub d_neg: Vec<f64>,
}

/// `-log softmax` of the positive among itself and its negatives.
pub fn loss_log_softmax(score_pos: f64, scores_neg: &[f64]) -> LossGrad {
    let m = scores_neg.iter().copied().fold(score_pos, f64::max);
    let e_pos = (score_pos - m).exp();
    let e_neg: Vec<f64> = scores_neg.iter().map(|s| (s - m).exp()).collect();
    let rest: f64 = e_neg.iter().sum();
    let total = e_pos + rest;
    // when the positive is the max, e_pos = 1 and ln_1p keeps tiny losses accurate
    let loss = if m == score_pos {
        rest.ln_1p()
    } else {
        (m - score_pos) + total.ln()
    };
    LossGrad {
        loss,
        d_pos: e_pos / total - 1.0,
        d_neg: e_neg.into_iter().map(|e| e / total).collect(),
    }
}

/// `max(0, margin - pos + neg)` with subgradient `(-1, 1)` when strictly active.
pub fn loss_linear_margin(score_pos: f64, score_neg: f64, margin: f64) -> (f64, f64, f64) {
    let v = margin - score_pos + score_neg;
    if v > 0.0 {
        (v, -1.0, 1.0)
    } else {
        (0.0, 0.0, 0.0)
    }
}

/// Margin loss averaged over independent (positive, negative) pairs.
pub fn loss_margin_mean(score_pos: f64, scores_neg: &[f64], margin: f64) -> LossGrad {
    let n = scores_neg.len().max(1) as f64;
    let mut out = LossGrad {
        loss: 0.0,
        d_pos: 0.0,
        d_neg: Vec::with_capacity(scores_neg.len()),
    };
    for &s in scores_neg {
        let (l, dp, dn) = loss_linear_margin(score_pos, s, margin);
        out.loss += l / n;
        out.d_pos += dp / n;
        out.d_neg.push(dn / n);
    }
    out
}
