//! Composition functions mapping `(e_l, r, e_r)` to a triplet embedding `x`,
//! the plain DistMult/HolE scorers, and the chain rule back through them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::tensor::{convolve, correlate, DenseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CompositionKind {
    BaselineDistMult,
    BaselineHolE,
    HDistMult,
    HHolE,
    HTPR,
}

impl CompositionKind {
    pub const ALL: [CompositionKind; 5] = [
        CompositionKind::BaselineDistMult,
        CompositionKind::BaselineHolE,
        CompositionKind::HDistMult,
        CompositionKind::HHolE,
        CompositionKind::HTPR,
    ];

    /// Byte tag used by the checkpoint format.
    pub fn tag(self) -> u8 {
        match self {
            CompositionKind::BaselineDistMult => 0,
            CompositionKind::BaselineHolE => 1,
            CompositionKind::HDistMult => 2,
            CompositionKind::HHolE => 3,
            CompositionKind::HTPR => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }

    /// Baselines score `sum(x)` directly, without a Harmony layer.
    pub fn is_baseline(self) -> bool {
        matches!(
            self,
            CompositionKind::BaselineDistMult | CompositionKind::BaselineHolE
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            CompositionKind::BaselineDistMult => "distmult",
            CompositionKind::BaselineHolE => "hole",
            CompositionKind::HDistMult => "hdistmult",
            CompositionKind::HHolE => "hhole",
            CompositionKind::HTPR => "htpr",
        }
    }
}

impl fmt::Display for CompositionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CompositionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model kind {s:?}")))
    }
}

/// Embedding sizes of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub entity: usize,
    pub relation: usize,
    pub hidden: usize,
}

impl Dims {
    /// Dims for the square kinds (`d_entity == d_relation == d_hidden`).
    pub fn square(d: usize) -> Self {
        Dims {
            entity: d,
            relation: d,
            hidden: d,
        }
    }

    /// Dims for HTPR: `d_hidden = d_entity^2 * d_relation`.
    pub fn tensor_product(entity: usize, relation: usize) -> Self {
        Dims {
            entity,
            relation,
            hidden: entity * entity * relation,
        }
    }

    pub fn for_kind(kind: CompositionKind, entity: usize, relation: usize) -> Result<Self> {
        let dims = match kind {
            CompositionKind::HTPR => Self::tensor_product(entity, relation),
            _ => Dims {
                entity,
                relation,
                hidden: entity,
            },
        };
        dims.validate(kind)?;
        Ok(dims)
    }

    pub fn validate(&self, kind: CompositionKind) -> Result<()> {
        if self.entity == 0 || self.relation == 0 || self.hidden == 0 {
            return Err(Error::Config("embedding dimensions must be >= 1".into()));
        }
        match kind {
            CompositionKind::HTPR => {
                if self.hidden != self.entity * self.entity * self.relation {
                    return Err(Error::Config(format!(
                        "htpr requires d_hidden == d_entity^2 * d_relation ({} != {}^2 * {})",
                        self.hidden, self.entity, self.relation
                    )));
                }
            }
            _ => {
                if self.entity != self.relation || self.entity != self.hidden {
                    return Err(Error::Config(format!(
                        "{kind} requires d_entity == d_relation == d_hidden (got {}, {}, {})",
                        self.entity, self.relation, self.hidden
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_inputs(kind: CompositionKind, e_l: &[f64], r: &[f64], e_r: &[f64]) -> Result<()> {
    check_dim("composition (right entity)", e_l.len(), e_r.len())?;
    match kind {
        CompositionKind::HTPR => Ok(()),
        _ => check_dim("composition (relation)", e_l.len(), r.len()),
    }
}

pub fn hidden_dim(kind: CompositionKind, d_entity: usize, d_relation: usize) -> usize {
    match kind {
        CompositionKind::HTPR => d_entity * d_entity * d_relation,
        _ => d_entity,
    }
}

/// Slice form of [`compose`].
pub fn compose_slices(kind: CompositionKind, e_l: &[f64], r: &[f64], e_r: &[f64]) -> Result<Vec<f64>> {
    check_inputs(kind, e_l, r, e_r)?;
    Ok(match kind {
        CompositionKind::HDistMult | CompositionKind::BaselineDistMult => e_l
            .iter()
            .zip(r)
            .zip(e_r)
            .map(|((a, b), c)| a * b * c)
            .collect(),
        CompositionKind::HHolE | CompositionKind::BaselineHolE => {
            let mut c = correlate(e_l, e_r)?;
            c.iter_mut().zip(r).for_each(|(ci, ri)| *ci *= ri);
            c
        }
        CompositionKind::HTPR => {
            let (de, dr) = (e_l.len(), r.len());
            let mut x = Vec::with_capacity(de * dr * de);
            for &a in e_l {
                for &b in r {
                    let ab = a * b;
                    x.extend(e_r.iter().map(|c| ab * c));
                }
            }
            x
        }
    })
}

/// The compositional triplet embedding.
///
/// * DistMult kinds: `x = e_l . r . e_r` (elementwise)
/// * HolE kinds: `x = r . (e_l * e_r)` with `*` circular correlation
/// * HTPR: `x[(i d_r + j) d_e + k] = e_l[i] r[j] e_r[k]`
pub fn compose(kind: CompositionKind, e_l: &DenseVector, r: &DenseVector, e_r: &DenseVector) -> Result<DenseVector> {
    compose_slices(kind, e_l, r, e_r).map(DenseVector::from_vec_unchecked)
}

/// `e_l^T diag(r) e_r`.
pub fn score_baseline_distmult(e_l: &DenseVector, r: &DenseVector, e_r: &DenseVector) -> Result<f64> {
    check_inputs(CompositionKind::BaselineDistMult, e_l, r, e_r)?;
    Ok(e_l.iter().zip(r.iter()).zip(e_r.iter()).map(|((a, b), c)| a * b * c).sum())
}

/// `r^T (e_l * e_r)`.
pub fn score_baseline_hole(e_l: &DenseVector, r: &DenseVector, e_r: &DenseVector) -> Result<f64> {
    check_inputs(CompositionKind::BaselineHolE, e_l, r, e_r)?;
    let c = correlate(e_l, e_r)?;
    Ok(c.iter().zip(r.iter()).map(|(a, b)| a * b).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositionGrads {
    pub left: Vec<f64>,
    pub rel: Vec<f64>,
    pub right: Vec<f64>,
}

/// Pulls `dL/dx` back to the three constituent embeddings.
pub fn compose_backprop_slices(
    kind: CompositionKind,
    e_l: &[f64],
    r: &[f64],
    e_r: &[f64],
    grad_x: &[f64],
) -> Result<CompositionGrads> {
    check_inputs(kind, e_l, r, e_r)?;
    check_dim(
        "composition gradient",
        hidden_dim(kind, e_l.len(), r.len()),
        grad_x.len(),
    )?;
    Ok(match kind {
        CompositionKind::HDistMult | CompositionKind::BaselineDistMult => {
            let d = e_l.len();
            let mut g = CompositionGrads {
                left: Vec::with_capacity(d),
                rel: Vec::with_capacity(d),
                right: Vec::with_capacity(d),
            };
            for i in 0..d {
                g.left.push(r[i] * e_r[i] * grad_x[i]);
                g.rel.push(e_l[i] * e_r[i] * grad_x[i]);
                g.right.push(e_l[i] * r[i] * grad_x[i]);
            }
            g
        }
        CompositionKind::HHolE | CompositionKind::BaselineHolE => {
            // x = r . c, c_k = sum_i a_i b_{i+k}
            // dL/da_i = sum_k gc_k b_{i+k} = (gc * b)_i
            // dL/db_j = sum_k gc_k a_{j-k} = (a conv gc)_j
            let corr = correlate(e_l, e_r)?;
            let rel = grad_x.iter().zip(&corr).map(|(g, c)| g * c).collect();
            let gc: Vec<f64> = grad_x.iter().zip(r).map(|(g, ri)| g * ri).collect();
            CompositionGrads {
                left: correlate(&gc, e_r)?,
                rel,
                right: convolve(e_l, &gc)?,
            }
        }
        CompositionKind::HTPR => {
            let (de, dr) = (e_l.len(), r.len());
            let mut g = CompositionGrads {
                left: vec![0.0; de],
                rel: vec![0.0; dr],
                right: vec![0.0; de],
            };
            for i in 0..de {
                for j in 0..dr {
                    let base = (i * dr + j) * de;
                    let block = &grad_x[base..base + de];
                    // s = sum_k g[i,j,k] e_r[k]
                    let s: f64 = block.iter().zip(e_r).map(|(a, b)| a * b).sum();
                    g.left[i] += r[j] * s;
                    g.rel[j] += e_l[i] * s;
                    let lr = e_l[i] * r[j];
                    for (k, gk) in block.iter().enumerate() {
                        g.right[k] += lr * gk;
                    }
                }
            }
            g
        }
    })
}

pub fn compose_backprop(
    kind: CompositionKind,
    e_l: &DenseVector,
    r: &DenseVector,
    e_r: &DenseVector,
    grad_x: &DenseVector,
) -> Result<CompositionGrads> {
    compose_backprop_slices(kind, e_l, r, e_r, grad_x)
}
