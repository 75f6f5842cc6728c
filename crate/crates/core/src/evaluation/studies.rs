use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::evaluation::neighbors::{default_candidates, nearest, Space};
use crate::evaluation::ranking::{rank_query_with, Query, Side};
use crate::harmony::{self, LambdaMode};
use crate::kb::{KnownTripletIndex, Triplet};
use crate::model::Model;
use crate::rng::rng_for;
use crate::tensor::DenseVector;
use crate::training::sample_negatives;

/// Average (fractional) ranks, 1-based.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_dim("spearman inputs", xs.len(), ys.len())?;
    if xs.len() < 2 {
        return Err(Error::Invalid("spearman needs at least two points".into()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spearman input".into()));
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateRanking);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Label {
    Pos,
    Neg,
}

/// Up to `n_pos` split triplets labeled `Pos` and `n_neg` corruptions of split
/// triplets that are not known facts, labeled `Neg`.
pub fn labeled_from_split(
    split: &[Triplet],
    filter: &KnownTripletIndex,
    n_entities: usize,
    n_pos: usize,
    n_neg: usize,
    seed: u64,
) -> Result<Vec<(Triplet, Label)>> {
    if split.is_empty() {
        return Err(Error::Invalid("cannot label an empty split".into()));
    }
    let mut rng = rng_for(&[seed, 0x4c41_4245]);
    let mut pos = split.to_vec();
    pos.shuffle(&mut rng);
    pos.truncate(n_pos);
    let mut out: Vec<(Triplet, Label)> = pos.into_iter().map(|t| (t, Label::Pos)).collect();
    let mut seen = HashSet::new();
    let mut attempts = 0usize;
    while seen.len() < n_neg {
        attempts += 1;
        if attempts > 1000 * n_neg.max(1) {
            return Err(Error::Invalid("could not find enough unknown corruptions".into()));
        }
        let t = split[rng.random_range(0..split.len())];
        let neg = sample_negatives(&t, n_entities, 1, &mut rng)?[0];
        if !filter.contains(&neg) && seen.insert(neg) {
            out.push((neg, Label::Neg));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityRecord {
    pub triplet: Triplet,
    pub label: Label,
    pub side: Side,
    pub type_density: f64,
    pub token_density: f64,
}

impl DensityRecord {
    pub fn delta(&self) -> f64 {
        self.token_density - self.type_density
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelSummary {
    pub n_queries: usize,
    pub mean_delta: f64,
    /// Paired t statistic of token vs type density; `None` when the differences have zero variance.
    pub t_statistic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityStudy {
    pub k: usize,
    pub pos: LabelSummary,
    pub neg: LabelSummary,
    pub records: Vec<DensityRecord>,
}

fn summarize(deltas: &[f64]) -> LabelSummary {
    let n = deltas.len();
    let mean = deltas.iter().sum::<f64>() / n as f64;
    let t = if n >= 2 {
        let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var > 0.0).then(|| mean / (var / n as f64).sqrt())
    } else {
        None
    };
    LabelSummary {
        n_queries: n,
        mean_delta: mean,
        t_statistic: t,
    }
}

fn known_fraction(q: &Query, model: &Model, filter: &KnownTripletIndex, k: usize, space: Space) -> Result<f64> {
    let cands = default_candidates(q, model.n_entities());
    let near = nearest(q, &cands, model, k, space)?;
    let known = near.iter().filter(|(e, _)| filter.contains(&q.complete(*e))).count();
    Ok(known as f64 / near.len().max(1) as f64)
}

/// Change in the share of known facts among the `k` nearest completions, token minus type.
pub fn neighborhood_density_study(
    labeled: &[(Triplet, Label)],
    model: &Model,
    filter: &KnownTripletIndex,
    k: usize,
) -> Result<DensityStudy> {
    if !labeled.iter().any(|(_, l)| *l == Label::Pos) || !labeled.iter().any(|(_, l)| *l == Label::Neg) {
        return Err(Error::Invalid("density study needs both Pos and Neg triplets".into()));
    }
    let records: Vec<DensityRecord> = labeled
        .par_iter()
        .map(|&(t, label)| -> Result<Vec<DensityRecord>> {
            Query::both(t)
                .iter()
                .map(|q| {
                    Ok(DensityRecord {
                        triplet: t,
                        label,
                        side: q.missing_side,
                        type_density: known_fraction(q, model, filter, k, Space::Type)?,
                        token_density: known_fraction(q, model, filter, k, Space::Token)?,
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let deltas = |label| -> Vec<f64> {
        records.iter().filter(|r| r.label == label).map(DensityRecord::delta).collect()
    };
    Ok(DensityStudy {
        k,
        pos: summarize(&deltas(Label::Pos)),
        neg: summarize(&deltas(Label::Neg)),
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectRow {
    pub query_id: usize,
    pub triplet: Triplet,
    pub side: Side,
    /// `H(mu(x), x) - H(x, x)` for the true triplet.
    pub delta_harmony: f64,
    pub rank_token: usize,
    pub rank_type: usize,
}

impl EffectRow {
    pub fn delta_rank(&self) -> f64 {
        self.rank_token as f64 - self.rank_type as f64
    }

    pub fn delta_mrr(&self) -> f64 {
        1.0 / self.rank_token as f64 - 1.0 / self.rank_type as f64
    }
}

#[derive(Debug)]
pub struct OptimizationEffect {
    pub rows: Vec<EffectRow>,
    /// Global mean of `delta_harmony` over all queries.
    pub mean_delta_harmony: f64,
    pub rho_rank: Result<f64>,
    pub rho_mrr_all: Result<f64>,
    pub rho_mrr_changed: Result<f64>,
}

impl OptimizationEffect {
    /// `(delta_harmony - mean, delta_rank)` pairs.
    pub fn scatter(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .map(|r| (r.delta_harmony - self.mean_delta_harmony, r.delta_rank()))
            .collect()
    }
}

/// Correlates the Harmony gained by optimization with the change in rank it causes.
pub fn optimization_effect_study(
    split: &[Triplet],
    model: &Model,
    filter: &KnownTripletIndex,
) -> Result<OptimizationEffect> {
    if model.kind.is_baseline() {
        return Err(Error::Invalid("optimization effect needs a Harmonic model".into()));
    }
    if model.harmony.lambda().is_infinite() {
        return Err(Error::InfiniteLambda);
    }
    if split.is_empty() {
        return Err(Error::Invalid("cannot analyze an empty split".into()));
    }
    let type_params = model.harmony.with_lambda(LambdaMode::Infinite)?;
    let type_score = |t: &Triplet| -> Result<f64> {
        let x = model.compose_raw(t)?;
        harmony::harmony_type(&DenseVector::from_vec_unchecked(x), &type_params)
    };
    let n = model.n_entities();
    let rows: Vec<EffectRow> = split
        .par_iter()
        .enumerate()
        .map(|(i, t)| -> Result<Vec<EffectRow>> {
            let x = model.compose(t)?;
            let dh = harmony::score(&x, &model.harmony)? - harmony::harmony_type(&x, &model.harmony)?;
            Query::both(*t)
                .iter()
                .enumerate()
                .map(|(s, q)| {
                    Ok(EffectRow {
                        query_id: 2 * i + s,
                        triplet: *t,
                        side: q.missing_side,
                        delta_harmony: dh,
                        rank_token: rank_query_with(q, n, filter, |c| model.score(c))?,
                        rank_type: rank_query_with(q, n, filter, type_score)?,
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let dh: Vec<f64> = rows.iter().map(|r| r.delta_harmony).collect();
    let mean_delta_harmony = dh.iter().sum::<f64>() / dh.len() as f64;
    let d_rank: Vec<f64> = rows.iter().map(EffectRow::delta_rank).collect();
    let d_mrr: Vec<f64> = rows.iter().map(EffectRow::delta_mrr).collect();
    let (dh_changed, mrr_changed): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.rank_token != r.rank_type)
        .map(|r| (r.delta_harmony, r.delta_mrr()))
        .unzip();
    Ok(OptimizationEffect {
        mean_delta_harmony,
        rho_rank: spearman(&dh, &d_rank),
        rho_mrr_all: spearman(&dh, &d_mrr),
        rho_mrr_changed: spearman(&dh_changed, &mrr_changed),
        rows,
    })
}
