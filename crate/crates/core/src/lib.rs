//! Cross-lingual contextual slot carryover.
//!
//! Given a multi-turn dialogue, the slots mentioned in earlier turns form a
//! candidate set; a binary classifier decides which of them carry over to the
//! current user turn. The crate bundles everything needed to train and compare
//! cross-lingual transfer strategies for that classifier:
//!
//! - [`corpus`]: dialogue data model, candidate construction, JSONL files and a
//!   deterministic synthetic parallel corpus generator.
//! - [`delex`]: delexicalization of turns and examples for data augmentation.
//! - [`embeddings`]: word-vector files, OOV policy and orthogonal alignment.
//! - [`translation`]: translation projection of sessions and corpus BLEU.
//! - [`model`]: the encoder/attention/decoder classifier with exact gradients and Adam.
//! - [`harness`]: training loop, decision rule, metrics, baseline and experiment grid.

pub mod corpus;
pub mod delex;
pub mod embeddings;
pub mod harness;
pub mod model;
pub mod seed;
pub mod translation;

mod fsutil;

pub use corpus::{CandidateExample, DialogueSession, SchemaMap, Slot, SlotRef, Speaker, Turn};
pub use embeddings::EmbeddingTable;
pub use harness::Metrics;
pub use model::{CarryoverModel, Hyperparams};
