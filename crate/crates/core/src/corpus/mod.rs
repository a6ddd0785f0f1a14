//! Dialogue data model, candidate-set construction and labeling, JSONL
//! persistence, synthetic parallel corpus generation and subsampling.

mod candidates;
mod generator;
mod io;
mod types;

pub use candidates::{
    candidate_set, examples_for_session, examples_for_sessions, label_candidates, unreachable_gold,
};
pub use generator::{
    synthesize_parallel_corpus, DomainTemplates, FollowUp, GeneratedCorpus, GeneratorConfig,
    Template,
};
pub use io::{parse_sessions, read_sessions, session_to_json_line, write_sessions};
pub use types::{
    corpus_stats, CandidateExample, CorpusStats, DialogueSession, SchemaMap, Slot, SlotRef, Span,
    Speaker, Turn,
};
pub(crate) use types::find_span;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Default context window D.
pub const DEFAULT_WINDOW: usize = 2;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("user turn {t} out of range (session has {n} user turns)")]
    TurnIndex { t: usize, n: usize },
    #[error("context window must be at least 1")]
    ZeroWindow,
    #[error("structure error: {0}")]
    Structure(String),
    #[error("invalid slot: {0}")]
    InvalidSlot(String),
    #[error("invalid turn: {0}")]
    InvalidTurn(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("generation error: {0}")]
    Generation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lowercases, splits on whitespace and detaches trailing punctuation into
/// separate tokens (`"away."` → `["away", "."]`).
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let word = word.to_lowercase();
        let trimmed = word.trim_end_matches(is_trailing_punct);
        let tail = &word[trimmed.len()..];
        if !trimmed.is_empty() {
            out.push(trimmed.to_string());
        }
        out.extend(tail.chars().map(String::from));
    }
    out
}

fn is_trailing_punct(c: char) -> bool {
    matches!(c, '.' | ',' | '!' | '?' | ';' | ':')
}

/// Uniform sample of ⌈fraction·N⌉ sessions without replacement, kept in
/// their original relative order. `fraction == 1.0` is the identity.
pub fn subsample(
    sessions: &[DialogueSession],
    fraction: f64,
    seed: u64,
) -> Result<Vec<DialogueSession>, CorpusError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CorpusError::Structure(format!("fraction {fraction} outside (0, 1]")));
    }
    if sessions.is_empty() {
        return Ok(Vec::new());
    }
    if fraction == 1.0 {
        return Ok(sessions.to_vec());
    }
    let n = sessions.len();
    // Guard against 0.25 * 400 = 100.00000000000001 style rounding.
    let k = ((fraction * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| sessions[i].clone()).collect())
}
