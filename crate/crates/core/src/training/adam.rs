use crate::error::{Error, Result};
use crate::model::{normalize_embeddings, Model};
use crate::tensor::{DenseVector, SymmetricMatrix};

/// Hyperparameters of an Adam update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// Dense gradients (or moments) with the model's parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub entities: Vec<f64>,
    pub relations: Vec<f64>,
    /// Row-major `d_hidden x d_hidden`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl ModelGrads {
    pub fn zeros_like(model: &Model) -> Self {
        let d = model.dims.hidden;
        ModelGrads {
            entities: vec![0.0; model.embeddings.entities.as_slice().len()],
            relations: vec![0.0; model.embeddings.relations.as_slice().len()],
            w: vec![0.0; d * d],
            b: vec![0.0; d],
        }
    }

    pub fn tensors(&self) -> [(&'static str, &[f64]); 4] {
        [
            ("entity embeddings", &self.entities),
            ("relation embeddings", &self.relations),
            ("W", &self.w),
            ("b", &self.b),
        ]
    }

    pub fn add_assign(&mut self, other: &ModelGrads) {
        let pairs = [
            (&mut self.entities, &other.entities),
            (&mut self.relations, &other.relations),
            (&mut self.w, &other.w),
            (&mut self.b, &other.b),
        ];
        for (a, b) in pairs {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    fn same_shape(&self, other: &ModelGrads) -> bool {
        self.entities.len() == other.entities.len()
            && self.relations.len() == other.relations.len()
            && self.w.len() == other.w.len()
            && self.b.len() == other.b.len()
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: ModelGrads,
    pub v: ModelGrads,
}

impl AdamState {
    pub fn new(model: &Model) -> Self {
        AdamState {
            t: 0,
            m: ModelGrads::zeros_like(model),
            v: ModelGrads::zeros_like(model),
        }
    }
}

/// One bias-corrected Adam update of a flat tensor (`t` already incremented).
pub fn adam_update(param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], t: u64, cfg: &AdamConfig) {
    let c1 = 1.0 - cfg.beta1.powf(t as f64);
    let c2 = 1.0 - cfg.beta2.powf(t as f64);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let mh = m[i] / c1;
        let vh = v[i] / c2;
        param[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.eps);
    }
}

/// Adam on every parameter, then row normalization and the weight-norm projection.
///
/// `grads` are of the loss being minimized. Baseline models have no
/// Harmony parameters to learn, so `W` and `b` stay at zero.
pub fn adam_step(model: &mut Model, grads: &ModelGrads, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if !state.m.same_shape(grads) || !state.v.same_shape(grads) || !ModelGrads::zeros_like(model).same_shape(grads) {
        return Err(Error::Invalid("gradient shape does not match the model".into()));
    }
    for (name, g) in grads.tensors() {
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {name} at index {i}")));
        }
    }
    state.t += 1;
    let t = state.t;
    adam_update(
        model.embeddings.entities.as_mut_slice(),
        &grads.entities,
        &mut state.m.entities,
        &mut state.v.entities,
        t,
        cfg,
    );
    adam_update(
        model.embeddings.relations.as_mut_slice(),
        &grads.relations,
        &mut state.m.relations,
        &mut state.v.relations,
        t,
        cfg,
    );
    if !model.kind.is_baseline() {
        let d = model.dims.hidden;
        let mut w = model.harmony.w().as_slice().to_vec();
        adam_update(&mut w, &grads.w, &mut state.m.w, &mut state.v.w, t, cfg);
        let mut b = model.harmony.b().to_vec();
        adam_update(&mut b, &grads.b, &mut state.m.b, &mut state.v.b, t, cfg);
        model.harmony.set_weights(SymmetricMatrix::symmetrize(d, &w)?)?;
        model.harmony.set_bias(DenseVector::new(b)?)?;
        model.harmony.constrain();
    }
    normalize_embeddings(&mut model.embeddings)
}
