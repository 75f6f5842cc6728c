use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::composition::{compose_backprop_slices, CompositionKind};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_split, RankingMetrics};
use crate::harmony::{grad_x_from_state, score_and_state};
use crate::kb::{build_filter_index, Checkpoint, DatasetSplits, KnownTripletIndex, Triplet, Vocab};
use crate::model::{Model, ModelSpec};
use crate::rng::rng_for;
use crate::training::adam::{adam_step, AdamConfig, AdamState, ModelGrads};
use crate::training::loss::{loss_log_softmax, loss_margin_mean, sample_negatives, LossGrad};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    LogSoftmax,
    LinearMargin,
}

impl LossKind {
    /// Margin loss for the HolE baseline, log-softmax for everything else.
    pub fn default_for(kind: CompositionKind) -> Self {
        match kind {
            CompositionKind::BaselineHolE => LossKind::LinearMargin,
            _ => LossKind::LogSoftmax,
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log-softmax" | "softmax" => Ok(LossKind::LogSoftmax),
            "linear-margin" | "margin" => Ok(LossKind::LinearMargin),
            _ => Err(Error::Config(format!("unknown loss {s:?}; expected log-softmax or linear-margin"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub margin: f64,
    pub loss_kind: LossKind,
    pub seed: u64,
    pub max_epochs: usize,
    /// Epochs without a validation MRR improvement before stopping.
    pub patience: usize,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
    /// Reduce per-example gradients in a fixed order.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 512,
            negatives_per_positive: 500,
            learning_rate: 0.001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            margin: 1.0,
            loss_kind: LossKind::LogSoftmax,
            seed: 0,
            max_epochs: 50,
            patience: 3,
            threads: 1,
            deterministic: true,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.negatives_per_positive == 0 {
            return bad("negatives_per_positive must be positive");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive");
        }
        if !self.margin.is_finite() {
            return bad("margin must be finite");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        Ok(())
    }
}

/// Per-example contribution before reduction into dense gradients.
struct ExampleGrad {
    loss: f64,
    entity_rows: Vec<(usize, Vec<f64>)>,
    relation_rows: Vec<(usize, Vec<f64>)>,
    /// `(dL/ds, h)`: adds `dL/ds * h h^T / 2` to dW and `dL/ds * h / 2` to db.
    hidden: Vec<(f64, Vec<f64>)>,
}

impl ExampleGrad {
    fn accumulate(&self, g: &mut ModelGrads, model: &Model) {
        let (de, dr, d) = (model.dims.entity, model.dims.relation, model.dims.hidden);
        for (i, row) in &self.entity_rows {
            g.entities[i * de..(i + 1) * de].iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        for (i, row) in &self.relation_rows {
            g.relations[i * dr..(i + 1) * dr].iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        for (c, h) in &self.hidden {
            let half = 0.5 * c;
            for i in 0..d {
                let hi = half * h[i];
                g.b[i] += hi;
                let row = &mut g.w[i * d..(i + 1) * d];
                row.iter_mut().zip(h).for_each(|(a, hj)| *a += hi * hj);
            }
        }
    }
}

fn loss_for(cfg: &TrainConfig, pos: f64, negs: &[f64]) -> LossGrad {
    match cfg.loss_kind {
        LossKind::LogSoftmax => loss_log_softmax(pos, negs),
        LossKind::LinearMargin => loss_margin_mean(pos, negs, cfg.margin),
    }
}

/// Loss of one positive against given negatives, with gradients scaled by `scale`.
fn example_grad(model: &Model, pos: &Triplet, negs: &[Triplet], cfg: &TrainConfig, scale: f64) -> Result<ExampleGrad> {
    let all: Vec<&Triplet> = std::iter::once(pos).chain(negs).collect();
    let mut xs = Vec::with_capacity(all.len());
    let mut scores = Vec::with_capacity(all.len());
    let mut states = Vec::with_capacity(all.len());
    for t in &all {
        let x = model.compose_raw(t)?;
        let (s, st) = if model.kind.is_baseline() {
            (x.iter().sum(), None)
        } else {
            score_and_state(&x, &model.harmony)?
        };
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("score of {t:?}")));
        }
        xs.push(x);
        scores.push(s);
        states.push(st);
    }
    let lg = loss_for(cfg, scores[0], &scores[1..]);
    let coefs = std::iter::once(lg.d_pos).chain(lg.d_neg.iter().copied());
    let mut out = ExampleGrad {
        loss: lg.loss,
        entity_rows: Vec::new(),
        relation_rows: Vec::new(),
        hidden: Vec::new(),
    };
    for (((t, x), st), c) in all.iter().zip(&xs).zip(&states).zip(coefs) {
        let c = c * scale;
        if c == 0.0 {
            continue;
        }
        let gx: Vec<f64> = if model.kind.is_baseline() {
            vec![c; x.len()]
        } else {
            grad_x_from_state(x, st.as_deref(), &model.harmony)
                .into_iter()
                .map(|v| v * c)
                .collect()
        };
        let cg = compose_backprop_slices(
            model.kind,
            model.entity(t.left),
            model.relation(t.rel),
            model.entity(t.right),
            &gx,
        )?;
        out.entity_rows.push((t.left, cg.left));
        out.entity_rows.push((t.right, cg.right));
        out.relation_rows.push((t.rel, cg.rel));
        if !model.kind.is_baseline() {
            let h = st.clone().unwrap_or_else(|| x.clone());
            out.hidden.push((c, h));
        }
    }
    Ok(out)
}

/// Mean loss over a batch of `(positive, negatives)` pairs and its dense gradient.
pub fn batch_loss_and_grads(
    model: &Model,
    batch: &[(Triplet, Vec<Triplet>)],
    cfg: &TrainConfig,
) -> Result<(f64, ModelGrads)> {
    if batch.is_empty() {
        return Err(Error::Invalid("empty batch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let examples = batch
        .par_iter()
        .map(|(p, n)| example_grad(model, p, n, cfg, scale))
        .collect::<Result<Vec<_>>>()?;
    reduce_ordered(model, &examples)
}

fn reduce_ordered(model: &Model, examples: &[ExampleGrad]) -> Result<(f64, ModelGrads)> {
    let mut g = ModelGrads::zeros_like(model);
    let mut loss = 0.0;
    for e in examples {
        loss += e.loss;
        e.accumulate(&mut g, model);
    }
    Ok((loss / examples.len() as f64, g))
}

/// Mean loss of a batch without gradients.
pub fn batch_loss(model: &Model, batch: &[(Triplet, Vec<Triplet>)], cfg: &TrainConfig) -> Result<f64> {
    batch_loss_and_grads(model, batch, cfg).map(|(l, _)| l)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub mean_loss: f64,
    pub valid: Option<RankingMetrics>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestSnapshot {
    pub epoch: usize,
    pub mrr: f64,
    pub model: Model,
}

/// Everything needed to continue training where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: Model,
    pub adam: AdamState,
    pub epochs_done: usize,
    pub best: Option<BestSnapshot>,
    pub bad_epochs: usize,
    pub stopped_early: bool,
}

impl TrainState {
    pub fn fresh(spec: &ModelSpec, splits: &DatasetSplits, seed: u64) -> Result<Self> {
        let model = Model::init(spec, splits.vocab.n_entities(), splits.vocab.n_relations(), seed)?;
        Ok(TrainState {
            adam: AdamState::new(&model),
            model,
            epochs_done: 0,
            best: None,
            bad_epochs: 0,
            stopped_early: false,
        })
    }

    /// Best validation model, or the current one when nothing was validated.
    pub fn best_model(&self) -> &Model {
        self.best.as_ref().map_or(&self.model, |b| &b.model)
    }

    pub fn is_finished(&self, cfg: &TrainConfig) -> bool {
        self.stopped_early || self.epochs_done >= cfg.max_epochs
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochReport>,
    pub state: TrainState,
}

impl TrainOutcome {
    pub fn best_model(&self) -> &Model {
        self.state.best_model()
    }

    pub fn checkpoint(&self, vocab: &Vocab) -> Result<Checkpoint> {
        Checkpoint::from_model(self.best_model(), vocab, self.state.adam.t)
    }
}

const SHUFFLE_STREAM: u64 = 0x5348_5546;

fn run_epoch(
    state: &mut TrainState,
    train: &[Triplet],
    cfg: &TrainConfig,
) -> Result<f64> {
    let epoch = state.epochs_done as u64;
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng_for(&[cfg.seed, SHUFFLE_STREAM, epoch]));
    let n_entities = state.model.n_entities();
    let adam = cfg.adam();
    let mut loss_sum = 0.0;
    for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
        let model = &state.model;
        let scale = 1.0 / chunk.len() as f64;
        let make = |(i, &idx): (usize, &usize)| -> Result<ExampleGrad> {
            let pos = train[idx];
            let mut rng = rng_for(&[cfg.seed, epoch, bi as u64, i as u64]);
            let negs = sample_negatives(&pos, n_entities, cfg.negatives_per_positive, &mut rng)?;
            example_grad(model, &pos, &negs, cfg, scale)
        };
        let (loss, grads) = if cfg.deterministic {
            let ex = chunk.par_iter().enumerate().map(make).collect::<Result<Vec<_>>>()?;
            reduce_ordered(model, &ex)?
        } else {
            let zero = || (0.0, ModelGrads::zeros_like(model));
            let (l, g) = chunk
                .par_iter()
                .enumerate()
                .map(make)
                .try_fold(zero, |(l, mut g), e| {
                    let e = e?;
                    e.accumulate(&mut g, model);
                    Ok::<_, Error>((l + e.loss, g))
                })
                .try_reduce(zero, |(la, mut ga), (lb, gb)| {
                    ga.add_assign(&gb);
                    Ok((la + lb, ga))
                })?;
            (l / chunk.len() as f64, g)
        };
        adam_step(&mut state.model, &grads, &mut state.adam, &adam)?;
        loss_sum += loss * chunk.len() as f64;
    }
    // keep the live model exactly representable in a checkpoint
    state.model.quantize();
    Ok(loss_sum / train.len() as f64)
}

/// Trains from a fresh initialization seeded by `cfg.seed`.
pub fn train(splits: &DatasetSplits, spec: &ModelSpec, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(splits, spec, cfg, |_| {})
}

pub fn train_with(
    splits: &DatasetSplits,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochReport),
) -> Result<TrainOutcome> {
    let state = TrainState::fresh(spec, splits, cfg.seed)?;
    resume(splits, state, cfg, on_epoch)
}

/// Continues training until `cfg.max_epochs` or early stopping.
pub fn resume(
    splits: &DatasetSplits,
    mut state: TrainState,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if splits.train.is_empty() {
        return Err(Error::Invalid("training split is empty".into()));
    }
    if state.model.n_entities() != splits.vocab.n_entities() || state.model.n_relations() != splits.vocab.n_relations() {
        return Err(Error::Invalid("model vocabulary does not match the dataset".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let filter = build_filter_index(splits);
    let mut history = Vec::new();
    while !state.is_finished(cfg) {
        let start = Instant::now();
        let (mean_loss, valid) = pool.install(|| -> Result<_> {
            let mean_loss = run_epoch(&mut state, &splits.train, cfg)?;
            state.epochs_done += 1;
            Ok((mean_loss, validate_epoch(&mut state, &splits.valid, &filter, cfg)?))
        })?;
        let report = EpochReport {
            epoch: state.epochs_done,
            mean_loss,
            valid,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&report);
        history.push(report);
    }
    Ok(TrainOutcome { history, state })
}

fn validate_epoch(
    state: &mut TrainState,
    valid: &[Triplet],
    filter: &KnownTripletIndex,
    cfg: &TrainConfig,
) -> Result<Option<RankingMetrics>> {
    if valid.is_empty() {
        return Ok(None);
    }
    let m = evaluate_split(valid, &state.model, filter)?;
    let improved = state.best.as_ref().is_none_or(|b| m.mrr > b.mrr);
    if improved {
        state.best = Some(BestSnapshot {
            epoch: state.epochs_done,
            mrr: m.mrr,
            model: state.model.clone(),
        });
        state.bad_epochs = 0;
    } else {
        state.bad_epochs += 1;
        if state.bad_epochs >= cfg.patience {
            state.stopped_early = true;
        }
    }
    Ok(Some(m))
}
