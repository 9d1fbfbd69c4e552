//! Validity-interval prediction for text-enhanced temporal knowledge graphs.
//!
//! A fact ⟨subject, relation, object⟩ is turned into a sentence, embedded by a text
//! encoder, fused with a sinusoidal embedding of a candidate year, and scored by a
//! small network trained with a margin ranking loss. At inference the per-year scores
//! become a distribution that is decoded into ranked intervals.
//!
//! Module map:
//! - [`data`]: quadruples, vocabularies, TSV ingestion and preprocessing
//! - [`split`]: inductive train/valid/test split generation by entity removal
//! - [`text`]: triple sentences, text encoders and the embedding-table format
//! - [`time`]: sinusoidal year embeddings
//! - [`scorer`]: the scoring network, gradients, negative sampling and training
//! - [`infer`]: year distributions, interval decoding, interval metrics, triple
//!   classification
//! - [`synth`]: deterministic synthetic graphs used by tests and benchmarks

pub mod data;
pub mod error;
pub mod exec;
pub mod infer;
pub mod scorer;
pub mod split;
pub mod synth;
pub mod text;
pub mod time;

pub use error::{Error, Result};
pub use exec::Execution;
