use std::collections::BTreeSet;
use std::ops::Range;

use super::metrics::{prf1, Metrics};
use super::HarnessError;
use crate::corpus::{candidate_set, label_candidates, CandidateExample, DialogueSession, SchemaMap, Slot, SlotRef};
use crate::model::CarryoverModel;

/// Anything that assigns a carryover probability to each candidate.
pub trait Scorer {
    fn score(&self, examples: &[CandidateExample]) -> Result<Vec<f64>, HarnessError>;
}

impl Scorer for CarryoverModel {
    fn score(&self, examples: &[CandidateExample]) -> Result<Vec<f64>, HarnessError> {
        Ok(self.predict(examples)?)
    }
}

/// Scores 1 for gold candidates and 0 otherwise.
pub struct GoldScorer;

impl Scorer for GoldScorer {
    fn score(&self, examples: &[CandidateExample]) -> Result<Vec<f64>, HarnessError> {
        Ok(examples.iter().map(|e| if e.label == Some(true) { 1.0 } else { 0.0 }).collect())
    }
}

pub struct ConstantScorer(pub f64);

impl Scorer for ConstantScorer {
    fn score(&self, examples: &[CandidateExample]) -> Result<Vec<f64>, HarnessError> {
        Ok(vec![self.0; examples.len()])
    }
}

/// Carry iff p > τ and the current turn has no slot with the same key.
pub fn decide(probability: f64, example: &CandidateExample, threshold: f64) -> bool {
    debug_assert!(
        example.distance >= 1 && 2 * example.distance <= example.context.len(),
        "candidate outside its context window"
    );
    probability > threshold && !example.current_turn.has_key(&example.slot.key)
}

#[derive(Debug, Clone)]
pub struct EvalTurn {
    pub session: usize,
    pub ordinal: usize,
    pub candidates: Range<usize>,
    pub gold: BTreeSet<SlotRef>,
}

/// Labeled candidates for every user turn with context, with per-turn gold.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub examples: Vec<CandidateExample>,
    pub turns: Vec<EvalTurn>,
}

impl EvalSet {
    pub fn new(
        sessions: &[DialogueSession],
        window: usize,
        schema_map: Option<&SchemaMap>,
    ) -> Result<Self, HarnessError> {
        let mut examples = Vec::new();
        let mut turns = Vec::new();
        for (si, s) in sessions.iter().enumerate() {
            for t in 1..s.num_user_turns() {
                let start = examples.len();
                examples.extend(label_candidates(candidate_set(s, t, window, schema_map)?, s.gold(t)));
                turns.push(EvalTurn {
                    session: si,
                    ordinal: t,
                    candidates: start..examples.len(),
                    gold: s.gold(t).iter().cloned().collect(),
                });
            }
        }
        Ok(EvalSet { examples, turns })
    }

    pub fn total_gold(&self) -> usize {
        self.turns.iter().map(|t| t.gold.len()).sum()
    }

    /// Hypothesis set of one turn under the decision rule.
    pub fn hypotheses(&self, turn: &EvalTurn, probs: &[f64], threshold: f64) -> BTreeSet<SlotRef> {
        turn.candidates
            .clone()
            .filter(|&i| decide(probs[i], &self.examples[i], threshold))
            .map(|i| self.examples[i].slot.as_ref_pair())
            .collect()
    }

    pub fn metrics_for(&self, probs: &[f64], threshold: f64) -> Metrics {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for turn in &self.turns {
            let hyp = self.hypotheses(turn, probs, threshold);
            let hit = hyp.intersection(&turn.gold).count() as u64;
            tp += hit;
            fp += hyp.len() as u64 - hit;
            fn_ += turn.gold.len() as u64 - hit;
        }
        prf1(tp, fp, fn_)
    }
}

pub fn evaluate(scorer: &dyn Scorer, set: &EvalSet, threshold: f64) -> Result<Metrics, HarnessError> {
    let probs = scorer.score(&set.examples)?;
    Ok(set.metrics_for(&probs, threshold))
}

/// Slots of the most recent slot-bearing turn before user turn `t`, minus keys
/// the current turn already fills.
pub fn naive_baseline_predict(session: &DialogueSession, t: usize) -> Vec<Slot> {
    let pos = session.user_turn_position(t);
    let Some(current) = session.turns.get(pos) else { return Vec::new() };
    let Some(source) = session.turns[..pos].iter().rev().find(|turn| !turn.slots.is_empty()) else {
        return Vec::new();
    };
    let mut seen = BTreeSet::new();
    source
        .slots
        .iter()
        .filter(|s| !current.has_key(&s.key) && seen.insert(s.as_ref_pair()))
        .cloned()
        .collect()
}

pub fn evaluate_baseline(sessions: &[DialogueSession]) -> Metrics {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for s in sessions {
        for t in 1..s.num_user_turns() {
            let hyp: BTreeSet<SlotRef> = naive_baseline_predict(s, t).iter().map(Slot::as_ref_pair).collect();
            let gold: BTreeSet<SlotRef> = s.gold(t).iter().cloned().collect();
            let hit = hyp.intersection(&gold).count() as u64;
            tp += hit;
            fp += hyp.len() as u64 - hit;
            fn_ += gold.len() as u64 - hit;
        }
    }
    prf1(tp, fp, fn_)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{GeneratedCorpus, GeneratorConfig, Speaker, Turn};
    use std::collections::BTreeMap;

    fn table1() -> DialogueSession {
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

    fn example(p: f64, current_has_city: bool) -> (f64, CandidateExample) {
        let mut s = table1();
        if current_has_city {
            s.turns[2] = s.turns[2].clone().with_slot("City", "san jose", "Local");
        }
        let c = candidate_set(&s, 1, 2, None).unwrap();
        (p, c.into_iter().find(|e| e.slot.key == "City").unwrap())
    }

    #[test]
    fn decision_rule() {
        let (p, e) = example(0.6, false);
        assert!(decide(p, &e, 0.5));
        let (p, e) = example(0.9, true);
        assert!(!decide(p, &e, 0.5));
        let (p, e) = example(0.5, false);
        assert!(!decide(p, &e, 0.5));
    }

    #[test]
    fn decide_is_monotone_in_probability() {
        let (_, e) = example(0.0, false);
        let mut last = false;
        for i in 0..=100 {
            let now = decide(i as f64 / 100.0, &e, 0.37);
            assert!(!last || now);
            last = now;
        }
    }

    #[test]
    fn baseline_on_table1() {
        let s = table1();
        let got: BTreeSet<_> = naive_baseline_predict(&s, 1).iter().map(Slot::as_ref_pair).collect();
        let want: BTreeSet<_> =
            [SlotRef::new("Place", "Exploratorium"), SlotRef::new("Distance", "10 miles")].into_iter().collect();
        assert_eq!(got, want);
        let m = evaluate_baseline(&[s]);
        assert_eq!((m.precision, m.recall), (0.5, 0.5));
    }

    #[test]
    fn baseline_edge_cases() {
        let mut s = table1();
        for t in &mut s.turns[..2] {
            t.slots.clear();
            t.slot_spans.clear();
        }
        s.gold_carryover.clear();
        assert!(naive_baseline_predict(&s, 1).is_empty());
        let mut s = table1();
        s.turns[1].slots.truncate(1);
        s.turns[1].slot_spans.truncate(1);
        s.turns[2] = s.turns[2].clone().with_slot("Place", "pier 39", "Local");
        s.gold_carryover.clear();
        assert!(naive_baseline_predict(&s, 1).is_empty());
    }

    #[test]
    fn gold_and_empty_scorers() {
        let set = EvalSet::new(&[table1()], 2, None).unwrap();
        let m = evaluate(&GoldScorer, &set, 0.5).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        let m = evaluate(&ConstantScorer(0.0), &set, 0.5).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.false_negatives), (0.0, 0.0, 0.0, 2));
    }

    /// Five sessions with hand-tallied outcomes for a scorer that carries
    /// every candidate.
    #[test]
    fn carry_everything_matches_hand_tally() {
        let base = table1();
        let mut sessions = vec![base.clone(); 3];
        // Current turn fills City itself: City is never hypothesized.
        let mut s = base.clone();
        s.turns[2] = s.turns[2].clone().with_slot("City", "oakland", "Local");
        s.gold_carryover.insert(1, vec![SlotRef::new("Place", "Exploratorium")]);
        sessions.push(s);
        // Single user turn: nothing evaluated.
        let mut s = base.clone();
        s.turns.truncate(1);
        s.gold_carryover.clear();
        sessions.push(s);
        let set = EvalSet::new(&sessions, 2, None).unwrap();
        let m = evaluate(&ConstantScorer(0.99), &set, 0.5).unwrap();
        // Sessions 1-3: hyp {PlaceType, City, Place, Distance}, gold {Place, City} → tp 2, fp 2.
        // Session 4: hyp {PlaceType, Place, Distance}, gold {Place} → tp 1, fp 2.
        assert_eq!((m.true_positives, m.false_positives, m.false_negatives), (7, 8, 0));
    }

    #[test]
    fn counts_cover_all_gold_on_generated_data() {
        let data = GeneratedCorpus::generate(&GeneratorConfig::default(), (0, 0, 60), 4).unwrap();
        let test = &data.test["en_US"];
        let set = EvalSet::new(test, 2, None).unwrap();
        for scorer in [&ConstantScorer(0.0) as &dyn Scorer, &ConstantScorer(1.0), &GoldScorer] {
            let m = evaluate(scorer, &set, 0.5).unwrap();
            assert_eq!((m.true_positives + m.false_negatives) as usize, set.total_gold());
        }
        let b = evaluate_baseline(test);
        assert!(b.recall >= b.precision, "{b:?}");
    }
}
