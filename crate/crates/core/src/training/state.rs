//! Resumable training state, stored next to a checkpoint.
//!
//! ```text
//! "GGTS" | u32 version=1 | u64 epochs_done | u64 bad_epochs | u8 stopped_early
//! f64 epsilon | u64 adam t
//! u64 len + checkpoint bytes (current model)
//! u8 has_best [u64 epoch | f64 mrr | u64 len + checkpoint bytes]
//! Adam m then v, each as entities, relations, W, b: u64 len + f64 values
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::kb::{Checkpoint, Vocab};
use crate::model::Model;
use crate::training::adam::{AdamState, ModelGrads};
use crate::training::trainer::{BestSnapshot, TrainState};

pub const STATE_MAGIC: &[u8; 4] = b"GGTS";
pub const STATE_VERSION: u32 = 1;

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_blob(out: &mut Vec<u8>, b: &[u8]) {
    put_u64(out, b.len() as u64);
    out.extend_from_slice(b);
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    put_u64(out, v.len() as u64);
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn train_state_to_bytes(state: &TrainState, vocab: &Vocab) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(STATE_MAGIC);
    out.extend_from_slice(&STATE_VERSION.to_le_bytes());
    put_u64(&mut out, state.epochs_done as u64);
    put_u64(&mut out, state.bad_epochs as u64);
    out.push(state.stopped_early as u8);
    out.extend_from_slice(&state.model.harmony.epsilon().to_le_bytes());
    put_u64(&mut out, state.adam.t);
    put_blob(&mut out, &Checkpoint::from_model(&state.model, vocab, state.adam.t)?.to_bytes()?);
    match &state.best {
        Some(b) => {
            out.push(1);
            put_u64(&mut out, b.epoch as u64);
            out.extend_from_slice(&b.mrr.to_le_bytes());
            put_blob(&mut out, &Checkpoint::from_model(&b.model, vocab, 0)?.to_bytes()?);
        }
        None => out.push(0),
    }
    for g in [&state.adam.m, &state.adam.v] {
        for (_, t) in g.tensors() {
            put_f64s(&mut out, t);
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("training state truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("length overflow".into()))
    }

    fn blob(&mut self) -> Result<&'a [u8]> {
        let n = self.usize()?;
        self.take(n)
    }

    fn f64s(&mut self, expected: usize) -> Result<Vec<f64>> {
        let n = self.usize()?;
        if n != expected {
            return Err(Error::Checkpoint(format!(
                "moment length {n} does not match model ({expected})"
            )));
        }
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("length overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn grads(&mut self, like: &ModelGrads) -> Result<ModelGrads> {
        Ok(ModelGrads {
            entities: self.f64s(like.entities.len())?,
            relations: self.f64s(like.relations.len())?,
            w: self.f64s(like.w.len())?,
            b: self.f64s(like.b.len())?,
        })
    }
}

fn model_from(bytes: &[u8], epsilon: f64) -> Result<(Model, Vocab)> {
    let ck = Checkpoint::from_bytes(bytes)?;
    Ok((ck.to_model_with_epsilon(Some(epsilon))?, ck.vocab))
}

pub fn train_state_from_bytes(bytes: &[u8]) -> Result<(TrainState, Vocab)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != STATE_MAGIC {
        return Err(Error::Checkpoint("bad training-state magic".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != STATE_VERSION {
        return Err(Error::Checkpoint(format!("unsupported training-state version {version}")));
    }
    let epochs_done = r.usize()?;
    let bad_epochs = r.usize()?;
    let stopped_early = match r.u8()? {
        0 => false,
        1 => true,
        v => return Err(Error::Checkpoint(format!("bad flag byte {v}"))),
    };
    let epsilon = r.f64()?;
    let t = r.u64()?;
    let (model, vocab) = model_from(r.blob()?, epsilon)?;
    let best = match r.u8()? {
        0 => None,
        1 => {
            let epoch = r.usize()?;
            let mrr = r.f64()?;
            let (m, _) = model_from(r.blob()?, epsilon)?;
            Some(BestSnapshot { epoch, mrr, model: m })
        }
        v => return Err(Error::Checkpoint(format!("bad flag byte {v}"))),
    };
    let like = ModelGrads::zeros_like(&model);
    let m = r.grads(&like)?;
    let v = r.grads(&like)?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after training state".into()));
    }
    Ok((
        TrainState {
            model,
            adam: AdamState { t, m, v },
            epochs_done,
            best,
            bad_epochs,
            stopped_early,
        },
        vocab,
    ))
}

pub fn save_train_state(state: &TrainState, vocab: &Vocab, path: &Path) -> Result<()> {
    let bytes = train_state_to_bytes(state, vocab)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_train_state(path: &Path) -> Result<(TrainState, Vocab)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    train_state_from_bytes(&bytes)
}
