//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! "GGRF" | u32 version=1 | u8 kind | u8 lambda mode (0 finite, 1 infinite)
//! f64 lambda | u32 d_entity, d_relation, d_hidden, n_entities, n_relations
//! u64 step
//! f32 entity table (n_entities x d_entity) | f32 relation table
//! f32 W (d_hidden^2, row-major) | f32 b (d_hidden)
//! vocab: per entity then per relation, u32 byte length + UTF-8 bytes
//! ```

use std::path::Path;

use crate::composition::{CompositionKind, Dims};
use crate::error::{Error, Result};
use crate::harmony::LambdaMode;
use crate::kb::Vocab;
use crate::model::{EmbeddingTable, Matrix, Model, ModelSpec};
use crate::tensor::{DenseVector, SymmetricMatrix};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GGRF";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A persisted model: single-precision arrays plus metadata and vocab.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: CompositionKind,
    pub lambda: LambdaMode,
    pub dims: Dims,
    pub step: u64,
    pub entities: Vec<f32>,
    pub relations: Vec<f32>,
    pub w: Vec<f32>,
    pub b: Vec<f32>,
    pub vocab: Vocab,
}

impl Checkpoint {
    pub fn from_model(model: &Model, vocab: &Vocab, step: u64) -> Result<Self> {
        let f = |s: &[f64]| s.iter().map(|&v| v as f32).collect::<Vec<f32>>();
        let ck = Checkpoint {
            kind: model.kind,
            lambda: model.harmony.lambda(),
            dims: model.dims,
            step,
            entities: f(model.embeddings.entities.as_slice()),
            relations: f(model.embeddings.relations.as_slice()),
            w: f(model.harmony.w().as_slice()),
            b: f(model.harmony.b()),
            vocab: vocab.clone(),
        };
        ck.validate()?;
        Ok(ck)
    }

    pub fn n_entities(&self) -> usize {
        self.vocab.n_entities()
    }

    pub fn n_relations(&self) -> usize {
        self.vocab.n_relations()
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate(self.kind)?;
        let expect = |what: &str, want: usize, got: usize| {
            if want == got {
                Ok(())
            } else {
                Err(Error::Checkpoint(format!("size mismatch: {what} has {got} values, expected {want}")))
            }
        };
        expect("entity table", self.n_entities() * self.dims.entity, self.entities.len())?;
        expect("relation table", self.n_relations() * self.dims.relation, self.relations.len())?;
        expect("W", self.dims.hidden * self.dims.hidden, self.w.len())?;
        expect("b", self.dims.hidden, self.b.len())?;
        let d = self.dims.hidden;
        for i in 0..d {
            for j in (i + 1)..d {
                if self.w[i * d + j] != self.w[j * d + i] {
                    return Err(Error::Checkpoint(format!("W not symmetric at ({i}, {j})")));
                }
            }
        }
        if let LambdaMode::Finite(l) = self.lambda {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::Checkpoint(format!("invalid lambda {l}")));
            }
        }
        Ok(())
    }

    /// The double-precision model these arrays describe.
    pub fn to_model(&self) -> Result<Model> {
        self.to_model_with_epsilon(None)
    }

    pub fn to_model_with_epsilon(&self, epsilon: Option<f64>) -> Result<Model> {
        self.validate()?;
        let up = |s: &[f32]| s.iter().map(|&v| v as f64).collect::<Vec<f64>>();
        let spec = ModelSpec {
            kind: self.kind,
            dims: self.dims,
            lambda: self.lambda,
            epsilon,
        };
        let embeddings = EmbeddingTable {
            entities: Matrix::from_vec(self.n_entities(), self.dims.entity, up(&self.entities))?,
            relations: Matrix::from_vec(self.n_relations(), self.dims.relation, up(&self.relations))?,
        };
        let w = SymmetricMatrix::from_row_major(self.dims.hidden, up(&self.w))?;
        let b = DenseVector::new(up(&self.b))?;
        Model::from_parts(&spec, embeddings, w, b)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(self.kind.tag());
        let (mode, value) = match self.lambda {
            LambdaMode::Finite(l) => (0u8, l),
            LambdaMode::Infinite => (1u8, 0.0),
        };
        out.push(mode);
        out.extend_from_slice(&value.to_le_bytes());
        for v in [
            self.dims.entity,
            self.dims.relation,
            self.dims.hidden,
            self.n_entities(),
            self.n_relations(),
        ] {
            out.extend_from_slice(&to_u32(v)?.to_le_bytes());
        }
        out.extend_from_slice(&self.step.to_le_bytes());
        for arr in [&self.entities, &self.relations, &self.w, &self.b] {
            for v in arr.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for name in self.vocab.entity_names().iter().chain(self.vocab.relation_names()) {
            out.extend_from_slice(&to_u32(name.len())?.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let kind_tag = r.u8()?;
        let kind = CompositionKind::from_tag(kind_tag)
            .ok_or_else(|| Error::Checkpoint(format!("unknown model kind {kind_tag}")))?;
        let mode = r.u8()?;
        let value = r.f64()?;
        let lambda = match mode {
            0 => LambdaMode::Finite(value),
            1 => LambdaMode::Infinite,
            m => return Err(Error::Checkpoint(format!("unknown lambda mode {m}"))),
        };
        let dims = Dims {
            entity: r.u32()? as usize,
            relation: r.u32()? as usize,
            hidden: r.u32()? as usize,
        };
        dims.validate(kind).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let n_entities = r.u32()? as usize;
        let n_relations = r.u32()? as usize;
        let step = r.u64()?;
        let entities = r.f32s(mul(n_entities, dims.entity)?)?;
        let relations = r.f32s(mul(n_relations, dims.relation)?)?;
        let w = r.f32s(mul(dims.hidden, dims.hidden)?)?;
        let b = r.f32s(dims.hidden)?;
        let mut names = Vec::with_capacity(n_entities + n_relations);
        for _ in 0..(n_entities + n_relations) {
            let len = r.u32()? as usize;
            let raw = r.take(len)?;
            let s = std::str::from_utf8(raw)
                .map_err(|_| Error::Checkpoint("vocab entry is not UTF-8".into()))?;
            names.push(s.to_owned());
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "size mismatch: {} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        let relation_names = names.split_off(n_entities);
        let vocab = Vocab::from_names(names, relation_names).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let ck = Checkpoint {
            kind,
            lambda,
            dims,
            step,
            entities,
            relations,
            w,
            b,
            vocab,
        };
        ck.validate()?;
        Ok(ck)
    }
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in u32")))
}

fn mul(a: usize, b: usize) -> Result<usize> {
    a.checked_mul(b)
        .ok_or_else(|| Error::Checkpoint("size mismatch: header sizes overflow".into()))
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
            .ok_or_else(|| Error::Checkpoint("size mismatch: file truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        self.array().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64> {
        self.array().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64> {
        self.array().map(f64::from_le_bytes)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(mul(n, 4)?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect())
    }
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = ck.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
