//! Block-structured synthetic knowledge bases.
//!
//! Entity `e` belongs to block `e % n_blocks`. Every relation maps each
//! source block to one target block drawn uniformly at random; `(e, r, e')`
//! is a fact iff `(block(e), block(e'))` is in the relation's compatibility
//! set. Each fact is then dropped with probability `noise`. Surviving facts
//! are shuffled and split 80/10/10 (floor, floor, remainder to test).
//!
//! All draws come from one ChaCha8 stream seeded with `seed`, in this order:
//! target blocks (relation-major, then source block), one uniform per
//! compatible candidate in `(rel, left, right)` lexicographic order, then the
//! shuffle.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kb::{DatasetSplits, Triplet, Vocab};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SyntheticConfig {
    pub n_entities: usize,
    pub n_relations: usize,
    pub n_blocks: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_entities: 50,
            n_relations: 5,
            n_blocks: 5,
            noise: 0.05,
            seed: 7,
        }
    }
}

/// Ground truth kept alongside a generated KB.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticMetadata {
    pub config: SyntheticConfig,
    pub block_of: Vec<usize>,
    /// Per relation, the compatible `(source block, target block)` pairs.
    pub compatible: Vec<Vec<(usize, usize)>>,
    pub n_facts: usize,
}

impl SyntheticMetadata {
    pub fn is_compatible(&self, t: &Triplet) -> bool {
        let pair = (self.block_of[t.left], self.block_of[t.right]);
        self.compatible[t.rel].contains(&pair)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticKb {
    pub splits: DatasetSplits,
    pub metadata: SyntheticMetadata,
}

pub fn generate_synthetic_kb(cfg: &SyntheticConfig) -> Result<SyntheticKb> {
    if cfg.n_entities == 0 || cfg.n_relations == 0 || cfg.n_blocks == 0 {
        return Err(Error::Config("synthetic KB needs entities, relations and blocks".into()));
    }
    if cfg.n_blocks > cfg.n_entities {
        return Err(Error::Config("n_blocks must not exceed n_entities".into()));
    }
    if !(0.0..0.5).contains(&cfg.noise) {
        return Err(Error::Config("noise must lie in [0, 0.5)".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let block_of: Vec<usize> = (0..cfg.n_entities).map(|e| e % cfg.n_blocks).collect();
    let compatible: Vec<Vec<(usize, usize)>> = (0..cfg.n_relations)
        .map(|_| {
            (0..cfg.n_blocks)
                .map(|src| (src, rng.random_range(0..cfg.n_blocks)))
                .collect()
        })
        .collect();

    let mut facts = Vec::new();
    for (rel, pairs) in compatible.iter().enumerate() {
        for left in 0..cfg.n_entities {
            for right in 0..cfg.n_entities {
                if pairs.contains(&(block_of[left], block_of[right])) {
                    let u: f64 = rng.random();
                    if u >= cfg.noise {
                        facts.push(Triplet::new(left, rel, right));
                    }
                }
            }
        }
    }
    if facts.is_empty() {
        return Err(Error::Config("synthetic configuration produced zero facts".into()));
    }
    facts.shuffle(&mut rng);

    let n = facts.len();
    let n_train = n * 8 / 10;
    let n_valid = n / 10;
    let test = facts.split_off(n_train + n_valid);
    let valid = facts.split_off(n_train);
    let train = facts;

    let vocab = Vocab::from_names(
        (0..cfg.n_entities).map(|i| format!("e{i}")).collect(),
        (0..cfg.n_relations).map(|i| format!("r{i}")).collect(),
    )?;
    let splits = DatasetSplits::new(vocab, train, valid, test)?;
    Ok(SyntheticKb {
        splits,
        metadata: SyntheticMetadata {
            config: *cfg,
            block_of,
            compatible,
            n_facts: n,
        },
    })
}
