use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kb::{KnownTripletIndex, Triplet};
use crate::model::Model;

/// Which entity of a triplet a query asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

/// An Entity Reconstruction query: `known` with its `missing_side` entity deleted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Query {
    pub known: Triplet,
    pub missing_side: Side,
}

impl Query {
    pub fn new(known: Triplet, missing_side: Side) -> Self {
        Query { known, missing_side }
    }

    /// Left then right query for a triplet.
    pub fn both(t: Triplet) -> [Query; 2] {
        [Query::new(t, Side::Left), Query::new(t, Side::Right)]
    }

    pub fn true_entity(&self) -> usize {
        match self.missing_side {
            Side::Left => self.known.left,
            Side::Right => self.known.right,
        }
    }

    /// The triplet with `entity` substituted into the missing slot.
    pub fn complete(&self, entity: usize) -> Triplet {
        let mut t = self.known;
        match self.missing_side {
            Side::Left => t.left = entity,
            Side::Right => t.right = entity,
        }
        t
    }
}

/// Filtered rank of the true completion under an arbitrary scorer.
///
/// Candidates that are known facts (other than the true triplet) are
/// skipped. `rank = 1 + #greater + floor(#equal / 2)`, so ties are shared
/// out fractionally rather than won.
pub fn rank_query_with(
    q: &Query,
    n_entities: usize,
    filter: &KnownTripletIndex,
    mut scorer: impl FnMut(&Triplet) -> Result<f64>,
) -> Result<usize> {
    let truth = q.true_entity();
    if truth >= n_entities {
        return Err(Error::Invalid(format!(
            "true entity {truth} is not among the {n_entities} candidates"
        )));
    }
    let true_score = scorer(&q.known)?;
    let mut greater = 0usize;
    let mut equal = 0usize;
    for e in 0..n_entities {
        if e == truth {
            continue;
        }
        let cand = q.complete(e);
        if filter.contains(&cand) {
            continue;
        }
        let s = scorer(&cand)?;
        if s > true_score {
            greater += 1;
        } else if s == true_score {
            equal += 1;
        }
    }
    Ok(1 + greater + equal / 2)
}

pub fn rank_query(q: &Query, model: &Model, filter: &KnownTripletIndex) -> Result<usize> {
    rank_query_with(q, model.n_entities(), filter, |t| model.score(t))
}

/// MR, MRR and Hits@{1,3,10}.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingMetrics {
    pub mean_rank: f64,
    pub mrr: f64,
    pub hits: BTreeMap<usize, f64>,
    pub n_queries: usize,
}

pub const HITS_AT: [usize; 3] = [1, 3, 10];

impl RankingMetrics {
    pub fn from_ranks(ranks: &[usize]) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::Invalid("no queries to aggregate".into()));
        }
        if ranks.contains(&0) {
            return Err(Error::Invalid("ranks start at 1".into()));
        }
        let n = ranks.len() as f64;
        let mean_rank = ranks.iter().map(|&r| r as f64).sum::<f64>() / n;
        let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
        let hits = HITS_AT
            .iter()
            .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / n))
            .collect();
        Ok(RankingMetrics {
            mean_rank,
            mrr,
            hits,
            n_queries: ranks.len(),
        })
    }

    pub fn hits_at(&self, k: usize) -> Option<f64> {
        self.hits.get(&k).copied()
    }

    /// `MR  MRR  H@1  H@3  H@10`, tab-separated.
    pub fn tsv_row(&self) -> String {
        let h = |k| self.hits_at(k).unwrap_or(f64::NAN);
        format!(
            "{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            self.mean_rank,
            self.mrr,
            h(1),
            h(3),
            h(10)
        )
    }
}

/// One ranked query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryRecord {
    pub query_id: usize,
    pub triplet: Triplet,
    pub side: Side,
    pub rank: usize,
    /// `H(mu(x), x) - H(x, x)` of the true triplet, for finite-lambda Harmonic models.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_harmony: Option<f64>,
}

/// Ranks both queries of every triplet; queries are numbered `2i` (left) and `2i + 1` (right).
pub fn evaluate_split_detailed(
    split: &[Triplet],
    model: &Model,
    filter: &KnownTripletIndex,
) -> Result<(RankingMetrics, Vec<QueryRecord>)> {
    if split.is_empty() {
        return Err(Error::Invalid("cannot evaluate an empty split".into()));
    }
    let records: Vec<QueryRecord> = split
        .par_iter()
        .enumerate()
        .map(|(i, t)| -> Result<[QueryRecord; 2]> {
            let delta = delta_harmony(model, t)?;
            let [l, r] = Query::both(*t);
            let rec = |q: Query, id: usize| -> Result<QueryRecord> {
                Ok(QueryRecord {
                    query_id: id,
                    triplet: *t,
                    side: q.missing_side,
                    rank: rank_query(&q, model, filter)?,
                    delta_harmony: delta,
                })
            };
            Ok([rec(l, 2 * i)?, rec(r, 2 * i + 1)?])
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let ranks: Vec<usize> = records.iter().map(|r| r.rank).collect();
    Ok((RankingMetrics::from_ranks(&ranks)?, records))
}

pub fn evaluate_split(split: &[Triplet], model: &Model, filter: &KnownTripletIndex) -> Result<RankingMetrics> {
    evaluate_split_detailed(split, model, filter).map(|(m, _)| m)
}

fn delta_harmony(model: &Model, t: &Triplet) -> Result<Option<f64>> {
    if model.kind.is_baseline() || model.harmony.lambda().is_infinite() {
        return Ok(None);
    }
    let x = model.compose(t)?;
    let token = crate::harmony::score(&x, &model.harmony)?;
    let typ = crate::harmony::harmony_type(&x, &model.harmony)?;
    Ok(Some(token - typ))
}
