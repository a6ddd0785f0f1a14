use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{tokenize, CorpusError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    System,
}

impl Speaker {
    /// Marker token inserted before a turn in model input sequences.
    pub fn marker(self) -> &'static str {
        match self {
            Speaker::User => "<user>",
            Speaker::System => "<system>",
        }
    }
}

/// A key/value pair produced by NLU, tagged with the domain that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub key: String,
    pub value: String,
    pub domain: String,
}

impl Slot {
    pub fn new(key: impl Into<String>, value: impl Into<String>, domain: impl Into<String>) -> Self {
        Slot { key: key.into(), value: value.into(), domain: domain.into() }
    }

    /// Tokens of the value. A delexicalized slot (value equal to its key) is a
    /// single raw key symbol; everything else goes through [`tokenize`].
    pub fn value_tokens(&self) -> Vec<String> {
        if self.is_delexicalized() {
            vec![self.key.clone()]
        } else {
            tokenize(&self.value)
        }
    }

    pub fn is_delexicalized(&self) -> bool {
        self.value == self.key
    }

    /// The (key, normalized value) pair used for gold matching.
    pub fn as_ref_pair(&self) -> SlotRef {
        SlotRef::new(&self.key, &self.value)
    }

    pub(crate) fn validate(&self) -> Result<(), CorpusError> {
        if self.key.is_empty() || self.key.chars().any(char::is_whitespace) {
            return Err(CorpusError::InvalidSlot(format!("bad slot key {:?}", self.key)));
        }
        if self.value.trim().is_empty() {
            return Err(CorpusError::InvalidSlot(format!("empty value for slot {}", self.key)));
        }
        Ok(())
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.key, self.value)
    }
}

/// A slot identity for gold labels: key plus tokenizer-normalized value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlotRef {
    pub key: String,
    pub value: String,
}

impl SlotRef {
    pub fn new(key: &str, value: &str) -> Self {
        let slot = Slot::new(key, value, "");
        SlotRef { key: key.to_string(), value: slot.value_tokens().join(" ") }
    }
}

impl fmt::Display for SlotRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.key, self.value)
    }
}

/// Half-open token range `[start, end)` covering a slot value.
pub type Span = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Turn {
    pub speaker: Speaker,
    pub act: String,
    pub intent: String,
    pub tokens: Vec<String>,
    pub slots: Vec<Slot>,
    /// One entry per slot.
    pub slot_spans: Vec<Option<Span>>,
}

impl Turn {
    pub fn new(speaker: Speaker, act: &str, intent: &str, text: &str) -> Self {
        Turn {
            speaker,
            act: act.to_string(),
            intent: intent.to_string(),
            tokens: tokenize(text),
            slots: Vec::new(),
            slot_spans: Vec::new(),
        }
    }

    /// Adds a slot and anchors it on the first unclaimed occurrence of its
    /// value tokens, if any.
    pub fn with_slot(mut self, key: &str, value: &str, domain: &str) -> Self {
        let slot = Slot::new(key, value, domain);
        let span = find_span(&self.tokens, &slot.value_tokens(), &self.slot_spans);
        self.slots.push(slot);
        self.slot_spans.push(span);
        self
    }

    /// Domain of the turn, taken from the intent prefix (`Local.SearchPlaceIntent` → `Local`).
    pub fn domain(&self) -> &str {
        self.intent.split('.').next().unwrap_or("")
    }

    pub fn has_key(&self, key: &str) -> bool {
        self.slots.iter().any(|s| s.key == key)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.slot_spans.len() != self.slots.len() {
            return Err(CorpusError::InvalidTurn("slot_spans and slots differ in length".into()));
        }
        for (slot, span) in self.slots.iter().zip(&self.slot_spans) {
            slot.validate()?;
            if let Some((start, end)) = *span {
                if start >= end || end > self.tokens.len() {
                    return Err(CorpusError::InvalidTurn(format!(
                        "span [{start},{end}) of {slot} outside {} tokens",
                        self.tokens.len()
                    )));
                }
                if self.tokens[start..end] != slot.value_tokens()[..] {
                    return Err(CorpusError::InvalidTurn(format!(
                        "span [{start},{end}) does not cover value of {slot}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// First occurrence of `needle` in `tokens` that does not overlap a claimed span.
pub(crate) fn find_span(tokens: &[String], needle: &[String], claimed: &[Option<Span>]) -> Option<Span> {
    if needle.is_empty() || needle.len() > tokens.len() {
        return None;
    }
    (0..=tokens.len() - needle.len())
        .map(|s| (s, s + needle.len()))
        .find(|&(s, e)| {
            tokens[s..e] == *needle
                && claimed.iter().flatten().all(|&(cs, ce)| e <= cs || s >= ce)
        })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DialogueSession {
    pub id: String,
    pub language: String,
    pub turns: Vec<Turn>,
    /// Keyed by user-turn ordinal (0 = first user turn).
    pub gold_carryover: BTreeMap<usize, Vec<SlotRef>>,
}

impl DialogueSession {
    pub fn num_user_turns(&self) -> usize {
        self.turns.iter().filter(|t| t.speaker == Speaker::User).count()
    }

    /// Position in `turns` of user turn `ordinal`, assuming strict alternation.
    pub fn user_turn_position(&self, ordinal: usize) -> usize {
        2 * ordinal
    }

    pub fn user_turn(&self, ordinal: usize) -> Option<&Turn> {
        self.turns.get(2 * ordinal).filter(|t| t.speaker == Speaker::User)
    }

    pub fn gold(&self, ordinal: usize) -> &[SlotRef] {
        self.gold_carryover.get(&ordinal).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn check_alternation(&self) -> Result<(), CorpusError> {
        for (i, turn) in self.turns.iter().enumerate() {
            let expected = if i % 2 == 0 { Speaker::User } else { Speaker::System };
            if turn.speaker != expected {
                return Err(CorpusError::Structure(format!(
                    "session {}: turn {i} is {:?}, expected {:?}",
                    self.id, turn.speaker, expected
                )));
            }
        }
        Ok(())
    }

    /// Checks alternation, per-turn invariants and gold references.
    ///
    /// A gold slot must match a preceding context slot by value; its key may
    /// differ when it was rewritten by a schema map across domains.
    pub fn validate(&self) -> Result<(), CorpusError> {
        self.check_alternation()?;
        for turn in &self.turns {
            turn.validate()?;
        }
        let n_user = self.num_user_turns();
        for (&ordinal, gold) in &self.gold_carryover {
            if ordinal == 0 || ordinal >= n_user {
                return Err(CorpusError::Structure(format!(
                    "session {}: gold_carryover references user turn {ordinal} (valid: 1..{n_user})",
                    self.id
                )));
            }
            let context = &self.turns[..self.user_turn_position(ordinal)];
            for g in gold {
                let found = context
                    .iter()
                    .flat_map(|t| &t.slots)
                    .any(|s| s.as_ref_pair().value == g.value);
                if !found {
                    return Err(CorpusError::Structure(format!(
                        "session {}: gold slot {g} at user turn {ordinal} not in preceding context",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One classification unit: a context slot paired with its offset, the
/// conditioning context and the current user turn.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateExample {
    pub slot: Slot,
    /// Offset d(s) of the source turn pair from the current turn.
    pub distance: usize,
    /// Position of the source turn in the session's `turns`.
    pub source_turn_index: usize,
    pub current_turn: Arc<Turn>,
    /// Context window in chronological order.
    pub context: Arc<[Turn]>,
    pub label: Option<bool>,
}

impl CandidateExample {
    /// True when both examples condition on the same context and current turn.
    pub fn shares_input_with(&self, other: &CandidateExample) -> bool {
        (Arc::ptr_eq(&self.context, &other.context) || self.context == other.context)
            && (Arc::ptr_eq(&self.current_turn, &other.current_turn)
                || self.current_turn == other.current_turn)
    }
}

/// Cross-domain slot key rewriting, e.g. `(Local, Place) → (Calling, Contact)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SchemaMap {
    entries: BTreeMap<(String, String), (String, String)>,
}

#[derive(Serialize, Deserialize)]
struct SchemaEntry {
    source_domain: String,
    source_key: String,
    target_domain: String,
    target_key: String,
}

impl SchemaMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an entry; a second entry for the same source pair is rejected.
    pub fn insert(
        &mut self,
        source: (&str, &str),
        target: (&str, &str),
    ) -> Result<(), CorpusError> {
        let k = (source.0.to_string(), source.1.to_string());
        if self.entries.contains_key(&k) {
            return Err(CorpusError::Structure(format!(
                "schema map already has an entry for ({}, {})",
                source.0, source.1
            )));
        }
        self.entries.insert(k, (target.0.to_string(), target.1.to_string()));
        Ok(())
    }

    pub fn get(&self, domain: &str, key: &str) -> Option<(&str, &str)> {
        self.entries
            .get(&(domain.to_string(), key.to_string()))
            .map(|(d, k)| (d.as_str(), k.as_str()))
    }

    /// Rewrites `slot` for use in a turn of `current_domain`.
    pub fn apply(&self, slot: &Slot, current_domain: &str) -> Slot {
        if slot.domain == current_domain {
            return slot.clone();
        }
        match self.get(&slot.domain, &slot.key) {
            Some((domain, key)) if domain == current_domain => Slot {
                key: key.to_string(),
                value: slot.value.clone(),
                domain: domain.to_string(),
            },
            _ => slot.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Serialize for SchemaMap {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let list: Vec<SchemaEntry> = self
            .entries
            .iter()
            .map(|((sd, sk), (td, tk))| SchemaEntry {
                source_domain: sd.clone(),
                source_key: sk.clone(),
                target_domain: td.clone(),
                target_key: tk.clone(),
            })
            .collect();
        list.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SchemaMap {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let list = Vec::<SchemaEntry>::deserialize(deserializer)?;
        let mut map = SchemaMap::new();
        for e in list {
            map.insert((&e.source_domain, &e.source_key), (&e.target_domain, &e.target_key))
                .map_err(serde::de::Error::custom)?;
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorpusStats {
    pub num_sessions: usize,
    pub avg_user_turns_per_session: f64,
}

pub fn corpus_stats(sessions: &[DialogueSession]) -> CorpusStats {
    if sessions.is_empty() {
        return CorpusStats { num_sessions: 0, avg_user_turns_per_session: 0.0 };
    }
    let user_turns: usize = sessions.iter().map(DialogueSession::num_user_turns).sum();
    CorpusStats {
        num_sessions: sessions.len(),
        avg_user_turns_per_session: user_turns as f64 / sessions.len() as f64,
    }
}
