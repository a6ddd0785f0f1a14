//! Delexicalization: slot-value tokens are replaced by their slot-key symbol
//! and the intent label is prepended, for the utterance and the slot stream.

use std::sync::Arc;

use thiserror::Error;

use crate::corpus::{CandidateExample, DialogueSession, Slot, SlotRef, Turn};

#[derive(Debug, Error, PartialEq)]
pub enum DelexError {
    #[error("slot spans overlap: {first} and {second}")]
    OverlappingSpans { first: String, second: String },
    #[error("turn already starts with its intent label {0}")]
    AlreadyDelexicalized(String),
    #[error("turn has no intent label")]
    MissingIntent,
    #[error("invalid span [{start},{end}) for slot {slot} over {len} tokens")]
    InvalidSpan { slot: String, start: usize, end: usize, len: usize },
}

/// Delexicalizes one turn. The result is an ordinary [`Turn`] whose first
/// token is the intent, whose spanned values are single key symbols and whose
/// slots all have `value == key`.
pub fn delexicalize_turn(turn: &Turn) -> Result<Turn, DelexError> {
    if turn.intent.is_empty() {
        return Err(DelexError::MissingIntent);
    }
    if turn.tokens.first() == Some(&turn.intent) {
        return Err(DelexError::AlreadyDelexicalized(turn.intent.clone()));
    }
    let mut spanned: Vec<(usize, usize, usize)> = Vec::new();
    for (i, (slot, span)) in turn.slots.iter().zip(&turn.slot_spans).enumerate() {
        if let Some((start, end)) = *span {
            if start >= end || end > turn.tokens.len() {
                return Err(DelexError::InvalidSpan { slot: slot.to_string(), start, end, len: turn.tokens.len() });
            }
            spanned.push((start, end, i));
        }
    }
    spanned.sort_unstable();
    for w in spanned.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(DelexError::OverlappingSpans {
                first: turn.slots[w[0].2].to_string(),
                second: turn.slots[w[1].2].to_string(),
            });
        }
    }

    let mut tokens = turn.tokens.clone();
    for &(start, end, i) in spanned.iter().rev() {
        tokens.splice(start..end, std::iter::once(turn.slots[i].key.clone()));
    }
    tokens.insert(0, turn.intent.clone());

    // New span positions: shift by 1 for the intent and by the length removed
    // by every earlier replacement.
    let mut new_spans = vec![None; turn.slots.len()];
    let mut removed = 0usize;
    for &(start, end, i) in &spanned {
        let pos = start - removed + 1;
        new_spans[i] = Some((pos, pos + 1));
        removed += end - start - 1;
    }

    let slots = turn
        .slots
        .iter()
        .map(|s| Slot { key: s.key.clone(), value: s.key.clone(), domain: s.domain.clone() })
        .collect();
    Ok(Turn {
        speaker: turn.speaker,
        act: turn.act.clone(),
        intent: turn.intent.clone(),
        tokens,
        slots,
        slot_spans: new_spans,
    })
}

/// Delexicalizes the context, the current turn and the candidate value.
/// Label and distance are unchanged.
pub fn delexicalize_example(example: &CandidateExample) -> Result<CandidateExample, DelexError> {
    let context: Vec<Turn> = example.context.iter().map(delexicalize_turn).collect::<Result<_, _>>()?;
    let current = delexicalize_turn(&example.current_turn)?;
    Ok(CandidateExample {
        slot: Slot {
            key: example.slot.key.clone(),
            value: example.slot.key.clone(),
            domain: example.slot.domain.clone(),
        },
        distance: example.distance,
        source_turn_index: example.source_turn_index,
        current_turn: Arc::new(current),
        context: context.into(),
        label: example.label,
    })
}

/// Every turn delexicalized; gold references become `key=key`.
pub fn delexicalize_session(session: &DialogueSession) -> Result<DialogueSession, DelexError> {
    let turns = session.turns.iter().map(delexicalize_turn).collect::<Result<_, _>>()?;
    let gold_carryover = session
        .gold_carryover
        .iter()
        .map(|(&t, gold)| {
            let mut refs: Vec<SlotRef> = Vec::with_capacity(gold.len());
            for g in gold {
                let r = SlotRef::new(&g.key, &g.key);
                if !refs.contains(&r) {
                    refs.push(r);
                }
            }
            (t, refs)
        })
        .collect();
    Ok(DialogueSession { id: session.id.clone(), language: session.language.clone(), turns, gold_carryover })
}

/// Original examples followed by their delexicalized twins. Examples that
/// cannot be delexicalized are logged and skipped. Siblings that shared a
/// context keep sharing the delexicalized one.
pub fn augment_with_delex(dataset: &[CandidateExample]) -> Vec<CandidateExample> {
    let mut out = dataset.to_vec();
    out.extend(delexicalize_all(dataset));
    out
}

/// Delexicalized versions of `dataset`, skipping (and logging) failures.
pub fn delexicalize_all(dataset: &[CandidateExample]) -> Vec<CandidateExample> {
    let mut out: Vec<CandidateExample> = Vec::with_capacity(dataset.len());
    let mut last: Option<(&CandidateExample, usize)> = None;
    for ex in dataset {
        match delexicalize_example(ex) {
            Ok(mut d) => {
                if let Some((prev, idx)) = last {
                    if prev.shares_input_with(ex) {
                        d.context = Arc::clone(&out[idx].context);
                        d.current_turn = Arc::clone(&out[idx].current_turn);
                    }
                }
                last = Some((ex, out.len()));
                out.push(d);
            }
            Err(e) => log::warn!("skipping example for slot {}: {e}", ex.slot),
        }
    }
    out
}
