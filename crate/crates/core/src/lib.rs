//! Knowledge-base completion with Harmony-optimized compositional triplet
//! embeddings.
//!
//! A triplet `(e_l, r, e_r)` is composed into an embedding `x`; a learned
//! quadratic Harmony function then picks the hidden state `mu(x)` that best
//! balances well-formedness against faithfulness to `x`, and the triplet is
//! scored by the Harmony of that state.

pub mod composition;
pub mod error;
pub mod evaluation;
pub mod harmony;
pub mod kb;
pub mod model;
mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
