use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::ranking::Query;
use crate::harmony;
use crate::kb::{KnownTripletIndex, Triplet, Vocab};
use crate::model::Model;
use crate::tensor::DenseVector;

/// Embedding space for neighborhoods: compositional `x` or optimized `mu(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Space {
    Type,
    Token,
}

impl Space {
    pub fn name(self) -> &'static str {
        match self {
            Space::Type => "type",
            Space::Token => "token",
        }
    }
}

pub fn type_embedding(t: &Triplet, model: &Model) -> Result<DenseVector> {
    model.compose(t)
}

/// `mu(x)`; equals the type embedding for baselines and for infinite lambda.
pub fn token_embedding(t: &Triplet, model: &Model) -> Result<DenseVector> {
    let x = model.compose(t)?;
    if model.kind.is_baseline() || model.harmony.lambda().is_infinite() {
        return Ok(x);
    }
    harmony::mu(&x, &model.harmony)
}

pub fn embed(t: &Triplet, model: &Model, space: Space) -> Result<DenseVector> {
    match space {
        Space::Type => type_embedding(t, model),
        Space::Token => token_embedding(t, model),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbor {
    pub entity: usize,
    pub name: String,
    pub distance: f64,
    pub known: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeighborhoodReport {
    pub query: Query,
    pub space: Space,
    pub neighbors: Vec<Neighbor>,
    /// Fewer than `k` candidates were available.
    pub short: bool,
}

impl NeighborhoodReport {
    /// Fraction of listed neighbors that are known facts.
    pub fn density(&self) -> f64 {
        if self.neighbors.is_empty() {
            return 0.0;
        }
        self.neighbors.iter().filter(|n| n.known).count() as f64 / self.neighbors.len() as f64
    }
}

/// `(entity, distance)` of the `k` nearest completions, sorted by distance then id.
pub(crate) fn nearest(
    q: &Query,
    candidates: &[usize],
    model: &Model,
    k: usize,
    space: Space,
) -> Result<Vec<(usize, f64)>> {
    if k == 0 {
        return Err(Error::Invalid("k must be at least 1".into()));
    }
    let truth = q.true_entity();
    if candidates.contains(&truth) {
        return Err(Error::Invalid(format!(
            "candidate set contains the queried entity {truth}"
        )));
    }
    let anchor = embed(&q.known, model, space)?;
    let mut dists = candidates
        .iter()
        .map(|&e| {
            let v = embed(&q.complete(e), model, space)?;
            let d = anchor
                .iter()
                .zip(v.iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            Ok((e, d))
        })
        .collect::<Result<Vec<_>>>()?;
    dists.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    dists.dedup_by_key(|p| p.0);
    dists.truncate(k);
    Ok(dists)
}

/// Every entity except the one the query asks for.
pub fn default_candidates(q: &Query, n_entities: usize) -> Vec<usize> {
    let truth = q.true_entity();
    (0..n_entities).filter(|&e| e != truth).collect()
}

/// The `k` completions of `q` closest to the true triplet in `space`.
///
/// `candidates = None` uses [`default_candidates`].
pub fn neighbors(
    q: &Query,
    candidates: Option<&[usize]>,
    model: &Model,
    vocab: &Vocab,
    filter: &KnownTripletIndex,
    k: usize,
    space: Space,
) -> Result<NeighborhoodReport> {
    let owned;
    let cands = match candidates {
        Some(c) => c,
        None => {
            owned = default_candidates(q, model.n_entities());
            &owned
        }
    };
    let near = nearest(q, cands, model, k, space)?;
    let short = near.len() < k;
    let neighbors = near
        .into_iter()
        .map(|(e, distance)| Neighbor {
            entity: e,
            name: vocab.entity_name(e).map_or_else(|| format!("#{e}"), str::to_owned),
            distance,
            known: filter.contains(&q.complete(e)),
        })
        .collect();
    Ok(NeighborhoodReport {
        query: *q,
        space,
        neighbors,
        short,
    })
}
