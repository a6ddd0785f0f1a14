use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, DialogueSession, Slot, SlotRef, Speaker, Turn};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireSlot {
    key: String,
    value: String,
    domain: String,
    span: Option<[usize; 2]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireTurn {
    speaker: Speaker,
    act: String,
    intent: String,
    tokens: Vec<String>,
    slots: Vec<WireSlot>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireSession {
    id: String,
    language: String,
    turns: Vec<WireTurn>,
    gold_carryover: BTreeMap<String, Vec<SlotRef>>,
}

impl From<&DialogueSession> for WireSession {
    fn from(s: &DialogueSession) -> Self {
        WireSession {
            id: s.id.clone(),
            language: s.language.clone(),
            turns: s
                .turns
                .iter()
                .map(|t| WireTurn {
                    speaker: t.speaker,
                    act: t.act.clone(),
                    intent: t.intent.clone(),
                    tokens: t.tokens.clone(),
                    slots: t
                        .slots
                        .iter()
                        .zip(&t.slot_spans)
                        .map(|(slot, span)| WireSlot {
                            key: slot.key.clone(),
                            value: slot.value.clone(),
                            domain: slot.domain.clone(),
                            span: span.map(|(a, b)| [a, b]),
                        })
                        .collect(),
                })
                .collect(),
            gold_carryover: s
                .gold_carryover
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
        }
    }
}

impl WireSession {
    fn into_session(self) -> Result<DialogueSession, String> {
        let turns = self
            .turns
            .into_iter()
            .map(|t| {
                let (slots, slot_spans) = t
                    .slots
                    .into_iter()
                    .map(|s| (Slot::new(s.key, s.value, s.domain), s.span.map(|[a, b]| (a, b))))
                    .unzip();
                Turn { speaker: t.speaker, act: t.act, intent: t.intent, tokens: t.tokens, slots, slot_spans }
            })
            .collect();
        let mut gold = BTreeMap::new();
        for (k, v) in self.gold_carryover {
            let ordinal: usize = k.parse().map_err(|_| format!("gold_carryover key {k:?} is not an ordinal"))?;
            gold.insert(ordinal, v);
        }
        Ok(DialogueSession { id: self.id, language: self.language, turns, gold_carryover: gold })
    }
}

/// Serializes one session as a single JSON line (no trailing newline).
pub fn session_to_json_line(session: &DialogueSession) -> String {
    serde_json::to_string(&WireSession::from(session)).expect("session serialization cannot fail")
}

/// Parses JSONL sessions, validating each one. Blank lines are skipped.
pub fn parse_sessions<R: BufRead>(reader: R) -> Result<Vec<DialogueSession>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireSession = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Parse { line: line_no, message: e.to_string() })?;
        let session = wire
            .into_session()
            .map_err(|message| CorpusError::Parse { line: line_no, message })?;
        session
            .validate()
            .map_err(|e| CorpusError::Parse { line: line_no, message: e.to_string() })?;
        out.push(session);
    }
    Ok(out)
}

pub fn read_sessions(path: &Path) -> Result<Vec<DialogueSession>, CorpusError> {
    let file = std::fs::File::open(path)?;
    parse_sessions(std::io::BufReader::new(file))
}

/// Writes sessions as UTF-8 JSONL with LF endings, atomically.
pub fn write_sessions(sessions: &[DialogueSession], path: &Path) -> Result<(), CorpusError> {
    let mut buf = String::new();
    for s in sessions {
        buf.push_str(&session_to_json_line(s));
        buf.push('\n');
    }
    crate::fsutil::write_atomic(path, buf.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> DialogueSession {
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

    #[test]
    fn round_trip_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        write_sessions(&[fixture()], &path).unwrap();
        let back = read_sessions(&path).unwrap();
        assert_eq!(back, vec![fixture()]);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.ends_with('\n') && !text.contains('\r'));
        assert!(text.contains("\"span\":[4,6]"));
    }

    #[test]
    fn empty_input_is_empty() {
        assert!(parse_sessions("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn adjacent_user_turns_rejected_with_line_number() {
        let mut s = fixture();
        s.turns[1].speaker = Speaker::User;
        let text = format!("{}\n{}\n", session_to_json_line(&fixture()), session_to_json_line(&s));
        match parse_sessions(text.as_bytes()) {
            Err(CorpusError::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("structure"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn schema_violations_report_line() {
        let err = parse_sessions("{\"id\": 3}".as_bytes()).unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 1, .. }));
        let mut s = fixture();
        s.turns[0].slot_spans[0] = Some((0, 1));
        let err = parse_sessions(session_to_json_line(&s).as_bytes()).unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 1, .. }));
    }

    #[test]
    fn gold_outside_context_rejected() {
        let mut s = fixture();
        s.gold_carryover.insert(1, vec![SlotRef::new("City", "berlin")]);
        assert!(parse_sessions(session_to_json_line(&s).as_bytes()).is_err());
        let mut s = fixture();
        s.gold_carryover.insert(0, vec![]);
        assert!(parse_sessions(session_to_json_line(&s).as_bytes()).is_err());
    }
}
