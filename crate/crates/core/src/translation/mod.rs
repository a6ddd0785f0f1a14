//! Translation projection of annotated sessions into another language and
//! corpus BLEU for measuring round-trip quality.

mod bleu;
mod translator;

pub use bleu::{corpus_bleu, modified_ngram_precision, BleuReport};
pub use translator::{ExternalCommandTranslator, IdentityTranslator, PhraseTableTranslator, Translator};

use std::collections::HashMap;

use thiserror::Error;

use crate::corpus::{find_span, DialogueSession, SlotRef, Turn};

#[derive(Debug, Error)]
pub enum TranslationError {
    #[error("input error: {0}")]
    Input(String),
    #[error("session {session} turn {turn}: {message}")]
    Projection { session: String, turn: usize, message: String },
    #[error("translator does not cover {0} -> {1}")]
    UnsupportedPair(String, String),
    #[error("phrase table line {line}: {message}")]
    PhraseTable { line: usize, message: String },
    #[error("external translator {0}")]
    External(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Translates every turn and, independently, every slot value, then looks for
/// the translated value in the translated utterance. Found values get a new
/// span; the rest keep their translation with no span. Gold references follow
/// their values.
pub fn translate_session(
    session: &DialogueSession,
    translator: &dyn Translator,
    target: &str,
) -> Result<DialogueSession, TranslationError> {
    let source = session.language.as_str();
    if source == target {
        return Err(TranslationError::Input(format!("session {} is already {target}", session.id)));
    }
    let mut value_map: HashMap<String, String> = HashMap::new();
    let mut turns = Vec::with_capacity(session.turns.len());
    for (ti, turn) in session.turns.iter().enumerate() {
        let mut batch = vec![turn.tokens.clone()];
        batch.extend(turn.slots.iter().map(|s| s.value_tokens()));
        let translated = translator.translate_batch(&batch, source, target).map_err(|e| {
            TranslationError::Projection { session: session.id.clone(), turn: ti, message: e.to_string() }
        })?;
        let mut translated = translated.into_iter();
        let tokens = translated.next().unwrap_or_default();
        let mut out = Turn {
            speaker: turn.speaker,
            act: turn.act.clone(),
            intent: turn.intent.clone(),
            tokens,
            slots: Vec::with_capacity(turn.slots.len()),
            slot_spans: Vec::with_capacity(turn.slots.len()),
        };
        for (slot, value_tokens) in turn.slots.iter().zip(translated) {
            if value_tokens.is_empty() {
                return Err(TranslationError::Projection {
                    session: session.id.clone(),
                    turn: ti,
                    message: format!("slot {slot} translated to nothing"),
                });
            }
            let span = find_span(&out.tokens, &value_tokens, &out.slot_spans);
            let mut new_slot = slot.clone();
            new_slot.value = if slot.is_delexicalized() { slot.key.clone() } else { value_tokens.join(" ") };
            value_map.insert(slot.as_ref_pair().value, new_slot.as_ref_pair().value);
            out.slots.push(new_slot);
            out.slot_spans.push(span);
        }
        turns.push(out);
    }
    let gold_carryover = session
        .gold_carryover
        .iter()
        .map(|(&ordinal, gold)| {
            let mapped = gold
                .iter()
                .map(|g| SlotRef::new(&g.key, value_map.get(&g.value).unwrap_or(&g.value)))
                .collect();
            (ordinal, mapped)
        })
        .collect();
    let projected = DialogueSession { id: session.id.clone(), language: target.to_string(), turns, gold_carryover };
    projected
        .validate()
        .map_err(|e| TranslationError::Input(format!("projected session {} invalid: {e}", session.id)))?;
    Ok(projected)
}

pub fn translate_sessions(
    sessions: &[DialogueSession],
    translator: &dyn Translator,
    target: &str,
) -> Result<Vec<DialogueSession>, TranslationError> {
    sessions.iter().map(|s| translate_session(s, translator, target)).collect()
}

/// BLEU of `bwd(fwd(utterance))` against every original utterance, user and
/// system turns alike.
pub fn back_translation_bleu(
    sessions: &[DialogueSession],
    fwd: &dyn Translator,
    bwd: &dyn Translator,
    pivot: &str,
    smooth: bool,
) -> Result<BleuReport, TranslationError> {
    let mut refs = Vec::new();
    let mut hyps = Vec::new();
    for s in sessions {
        let originals: Vec<Vec<String>> = s.turns.iter().map(|t| t.tokens.clone()).collect();
        let there = fwd.translate_batch(&originals, &s.language, pivot)?;
        hyps.extend(bwd.translate_batch(&there, pivot, &s.language)?);
        refs.extend(originals);
    }
    corpus_bleu(&hyps, &refs, 4, smooth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{GeneratedCorpus, GeneratorConfig, Speaker};
    use std::collections::BTreeMap;

    fn session() -> DialogueSession {
        let turns = vec![
            Turn::new(Speaker::User, "request", "Local.SearchPlaceIntent", "find a museum in san francisco")
                .with_slot("PlaceType", "museum", "Local")
                .with_slot("City", "san francisco", "Local"),
            Turn::new(Speaker::System, "inform", "Local.InformAction", "found exploratorium it is 10 miles away")
                .with_slot("Place", "Exploratorium", "Local")
                .with_slot("Distance", "10 miles", "Local"),
            Turn::new(Speaker::User, "request", "Local.GetAddressIntent", "what's the address"),
        ];
        let mut gold = BTreeMap::new();
        gold.insert(1, vec![SlotRef::new("Place", "Exploratorium"), SlotRef::new("City", "san francisco")]);
        DialogueSession { id: "t1".into(), language: "en_US".into(), turns, gold_carryover: gold }
    }

    fn lexicon() -> PhraseTableTranslator {
        PhraseTableTranslator::new([
            ("find a", "finde ein"),
            ("museum", "museum"),
            ("in", "in"),
            ("san francisco", "san francisco"),
        ])
    }

    #[test]
    fn hand_lexicon_example() {
        let out = translate_session(&session(), &lexicon(), "de_DE").unwrap();
        assert_eq!(out.turns[0].tokens.join(" "), "finde ein museum in san francisco");
        assert_eq!(out.turns[0].slot_spans[1], Some((4, 6)));
        assert_eq!(out.language, "de_DE");
    }

    #[test]
    fn identity_changes_only_language() {
        let mut out = translate_session(&session(), &IdentityTranslator, "de_DE").unwrap();
        out.language = "en_US".into();
        let mut expected = session();
        for t in &mut expected.turns {
            for s in &mut t.slots {
                s.value = s.as_ref_pair().value;
            }
        }
        assert_eq!(out, expected);
        assert!(translate_session(&session(), &IdentityTranslator, "en_US").is_err());
    }

    #[test]
    fn unfound_value_keeps_translation_without_span() {
        let t = PhraseTableTranslator::new([("san francisco", "sf"), ("in san francisco", "dort")]);
        let out = translate_session(&session(), &t, "de_DE").unwrap();
        assert_eq!(out.turns[0].tokens.join(" "), "find a museum dort");
        assert_eq!(out.turns[0].slots[1].value, "sf");
        assert_eq!(out.turns[0].slot_spans[1], None);
        assert_eq!(out.gold(1)[1], SlotRef::new("City", "sf"));
    }

    #[test]
    fn translator_failure_names_turn() {
        let t = PhraseTableTranslator::new([("x", "y")]).with_languages("fr", "de");
        match translate_session(&session(), &t, "de_DE") {
            Err(TranslationError::Projection { turn, .. }) => assert_eq!(turn, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn generated_corpus_projection_preserves_structure() {
        let cfg = GeneratorConfig::default();
        let data = GeneratedCorpus::generate(&cfg, (40, 0, 0), 5).unwrap();
        let en = &data.train["en_US"];
        let table = PhraseTableTranslator::new(cfg.phrase_table("en_US", "de_DE", 0.0, 1));
        let de = translate_sessions(en, &table, "de_DE").unwrap();
        assert_eq!(de, translate_sessions(en, &table, "de_DE").unwrap());
        for (a, b) in en.iter().zip(&de) {
            assert_eq!(a.turns.len(), b.turns.len());
            assert_eq!(a.gold_carryover.keys().collect::<Vec<_>>(), b.gold_carryover.keys().collect::<Vec<_>>());
            for (x, y) in a.turns.iter().zip(&b.turns) {
                assert_eq!((x.speaker, &x.act, &x.intent), (y.speaker, &y.act, &y.intent));
                let kx: Vec<_> = x.slots.iter().map(|s| &s.key).collect();
                let ky: Vec<_> = y.slots.iter().map(|s| &s.key).collect();
                assert_eq!(kx, ky);
            }
        }
    }

    #[test]
    fn back_translation_bounds() {
        let sessions = vec![session(); 3];
        let fwd = PhraseTableTranslator::new([("find", "finde"), ("museum", "museo"), ("address", "adresse")]);
        let report = back_translation_bleu(&sessions, &fwd, &fwd.inverse(), "de_DE", false).unwrap();
        assert_eq!(report.score, 1.0);

        struct DropEverySecond;
        impl Translator for DropEverySecond {
            fn translate(&self, t: &[String], _: &str, _: &str) -> Result<Vec<String>, TranslationError> {
                Ok(t.iter().step_by(2).cloned().collect())
            }
        }
        let r = back_translation_bleu(&sessions, &IdentityTranslator, &DropEverySecond, "de_DE", false).unwrap();
        assert!(r.brevity_penalty < 1.0 && r.score < 1.0);
    }
}
