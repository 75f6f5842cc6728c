//! Triplets, vocabularies, dataset splits and the filtered-evaluation index.

mod checkpoint;
mod synth;
mod tsv;

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use synth::{generate_synthetic_kb, SyntheticConfig, SyntheticKb, SyntheticMetadata};
pub use tsv::{load_tsv, load_tsv_with_vocab, parse_tsv, write_tsv};

/// A `(head, relation, tail)` fact, by id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Triplet {
    pub left: usize,
    pub rel: usize,
    pub right: usize,
}

impl Triplet {
    pub const fn new(left: usize, rel: usize, right: usize) -> Self {
        Triplet { left, rel, right }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct NameTable {
    names: Vec<String>,
    ids: HashMap<String, usize>,
}

impl NameTable {
    fn intern(&mut self, name: &str) -> Result<usize> {
        if name.is_empty() {
            return Err(Error::Invalid("empty name".into()));
        }
        if let Some(&id) = self.ids.get(name) {
            return Ok(id);
        }
        let id = self.names.len();
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        Ok(id)
    }

    fn push_unique(&mut self, name: String) -> Result<()> {
        if name.is_empty() {
            return Err(Error::Invalid("empty name".into()));
        }
        if self.ids.contains_key(&name) {
            return Err(Error::Invalid(format!("duplicate name {name:?}")));
        }
        self.ids.insert(name.clone(), self.names.len());
        self.names.push(name);
        Ok(())
    }
}

/// Bijective id <-> name maps for entities and relations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    entities: NameTable,
    relations: NameTable,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vocab from names listed in id order; rejects duplicates and empty names.
    pub fn from_names(entities: Vec<String>, relations: Vec<String>) -> Result<Self> {
        let mut v = Vocab::new();
        for e in entities {
            v.entities.push_unique(e)?;
        }
        for r in relations {
            v.relations.push_unique(r)?;
        }
        Ok(v)
    }

    pub fn intern_entity(&mut self, name: &str) -> Result<usize> {
        self.entities.intern(name)
    }

    pub fn intern_relation(&mut self, name: &str) -> Result<usize> {
        self.relations.intern(name)
    }

    pub fn entity_id(&self, name: &str) -> Option<usize> {
        self.entities.ids.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relations.ids.get(name).copied()
    }

    pub fn entity_name(&self, id: usize) -> Option<&str> {
        self.entities.names.get(id).map(String::as_str)
    }

    pub fn relation_name(&self, id: usize) -> Option<&str> {
        self.relations.names.get(id).map(String::as_str)
    }

    pub fn entity_names(&self) -> &[String] {
        &self.entities.names
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relations.names
    }

    pub fn n_entities(&self) -> usize {
        self.entities.names.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.names.len()
    }

    /// Resolves a triplet of names; unknown names are an error.
    pub fn resolve(&self, head: &str, rel: &str, tail: &str) -> Result<Triplet> {
        let ent = |n: &str| {
            self.entity_id(n)
                .ok_or_else(|| Error::Invalid(format!("unknown entity {n:?}")))
        };
        let relation = self
            .relation_id(rel)
            .ok_or_else(|| Error::Invalid(format!("unknown relation {rel:?}")))?;
        Ok(Triplet::new(ent(head)?, relation, ent(tail)?))
    }
}

/// Train/valid/test splits sharing one vocab.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplits {
    pub vocab: Vocab,
    pub train: Vec<Triplet>,
    pub valid: Vec<Triplet>,
    pub test: Vec<Triplet>,
}

impl DatasetSplits {
    pub fn new(vocab: Vocab, train: Vec<Triplet>, valid: Vec<Triplet>, test: Vec<Triplet>) -> Result<Self> {
        let splits = DatasetSplits {
            vocab,
            train,
            valid,
            test,
        };
        splits.validate()?;
        Ok(splits)
    }

    fn validate(&self) -> Result<()> {
        let (ne, nr) = (self.vocab.n_entities(), self.vocab.n_relations());
        for (name, split) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            let mut seen = HashSet::with_capacity(split.len());
            for t in split {
                if t.left >= ne || t.right >= ne || t.rel >= nr {
                    return Err(Error::Invalid(format!("{name}: triplet {t:?} outside vocabulary")));
                }
                if !seen.insert(*t) {
                    return Err(Error::Invalid(format!("{name}: duplicate triplet {t:?}")));
                }
            }
        }
        Ok(())
    }

    /// Loads `train.tsv`, `valid.tsv`, `test.tsv` with one shared, growing vocab.
    pub fn load(train: &Path, valid: &Path, test: &Path) -> Result<Self> {
        let mut vocab = Vocab::new();
        let train = load_tsv_with_vocab(train, &mut vocab)?;
        let valid = load_tsv_with_vocab(valid, &mut vocab)?;
        let test = load_tsv_with_vocab(test, &mut vocab)?;
        Self::new(vocab, train, valid, test)
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        Self::load(&dir.join("train.tsv"), &dir.join("valid.tsv"), &dir.join("test.tsv"))
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_tsv(&dir.join("train.tsv"), &self.train, &self.vocab)?;
        write_tsv(&dir.join("valid.tsv"), &self.valid, &self.vocab)?;
        write_tsv(&dir.join("test.tsv"), &self.test, &self.vocab)
    }

    pub fn all(&self) -> impl Iterator<Item = &Triplet> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }
}

/// Every known true triplet across all splits.
#[derive(Debug, Clone, Default)]
pub struct KnownTripletIndex {
    known: HashSet<Triplet>,
}

impl KnownTripletIndex {
    pub fn contains(&self, t: &Triplet) -> bool {
        self.known.contains(t)
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }
}

impl FromIterator<Triplet> for KnownTripletIndex {
    fn from_iter<I: IntoIterator<Item = Triplet>>(iter: I) -> Self {
        KnownTripletIndex {
            known: iter.into_iter().collect(),
        }
    }
}

pub fn build_filter_index(splits: &DatasetSplits) -> KnownTripletIndex {
    splits.all().copied().collect()
}
