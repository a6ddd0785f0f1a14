use std::collections::HashSet;
use std::sync::Arc;

use super::{CandidateExample, CorpusError, DialogueSession, SchemaMap, SlotRef, Turn};

/// Builds the candidate set for user turn `t`: every slot of the previous
/// `min(t, window)` user turns and their system replies.
///
/// Slots from `u[t-k]` and `v[t-k]` both get distance `k`. Identical
/// (key, value, distance) triples are collapsed. Output is ordered by distance
/// ascending, then by position in the session.
pub fn candidate_set(
    session: &DialogueSession,
    t: usize,
    window: usize,
    schema_map: Option<&SchemaMap>,
) -> Result<Vec<CandidateExample>, CorpusError> {
    if window == 0 {
        return Err(CorpusError::ZeroWindow);
    }
    session.check_alternation()?;
    let n_user = session.num_user_turns();
    if t >= n_user {
        return Err(CorpusError::TurnIndex { t, n: n_user });
    }
    let current_pos = session.user_turn_position(t);
    let reach = t.min(window);
    if reach == 0 {
        return Ok(Vec::new());
    }
    let current_turn = Arc::new(session.turns[current_pos].clone());
    let context: Arc<[Turn]> = session.turns[current_pos - 2 * reach..current_pos].into();
    let current_domain = current_turn.domain().to_string();

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for distance in 1..=reach {
        let user_pos = current_pos - 2 * distance;
        for pos in [user_pos, user_pos + 1] {
            for slot in &session.turns[pos].slots {
                let slot = match schema_map {
                    Some(map) => map.apply(slot, &current_domain),
                    None => slot.clone(),
                };
                let pair = slot.as_ref_pair();
                if !seen.insert((pair.key, pair.value, distance)) {
                    continue;
                }
                out.push(CandidateExample {
                    slot,
                    distance,
                    source_turn_index: pos,
                    current_turn: Arc::clone(&current_turn),
                    context: Arc::clone(&context),
                    label: None,
                });
            }
        }
    }
    Ok(out)
}

/// Sets `label = (key, value) ∈ gold` on every candidate. Gold pairs that no
/// candidate can reach are reported at warning level.
pub fn label_candidates(mut candidates: Vec<CandidateExample>, gold: &[SlotRef]) -> Vec<CandidateExample> {
    let gold_set: HashSet<&SlotRef> = gold.iter().collect();
    for c in &mut candidates {
        c.label = Some(gold_set.contains(&c.slot.as_ref_pair()));
    }
    for g in unreachable_gold(&candidates, gold) {
        log::warn!("gold slot {g} is not reachable from any candidate");
    }
    candidates
}

/// Gold pairs that match no candidate.
pub fn unreachable_gold(candidates: &[CandidateExample], gold: &[SlotRef]) -> Vec<SlotRef> {
    let have: HashSet<SlotRef> = candidates.iter().map(|c| c.slot.as_ref_pair()).collect();
    gold.iter().filter(|g| !have.contains(g)).cloned().collect()
}

/// Labeled candidates for every user turn of `session` that has context.
pub fn examples_for_session(
    session: &DialogueSession,
    window: usize,
    schema_map: Option<&SchemaMap>,
) -> Result<Vec<CandidateExample>, CorpusError> {
    let mut out = Vec::new();
    for t in 1..session.num_user_turns() {
        let cands = candidate_set(session, t, window, schema_map)?;
        out.extend(label_candidates(cands, session.gold(t)));
    }
    Ok(out)
}

pub fn examples_for_sessions(
    sessions: &[DialogueSession],
    window: usize,
    schema_map: Option<&SchemaMap>,
) -> Result<Vec<CandidateExample>, CorpusError> {
    let mut out = Vec::new();
    for s in sessions {
        out.extend(examples_for_session(s, window, schema_map)?);
    }
    Ok(out)
}
