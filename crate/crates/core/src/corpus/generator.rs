//! Deterministic synthetic parallel dialogue corpus.
//!
//! Sessions are first drawn at an abstract level (templates, lexicon indices,
//! gold carryover) and then realized once per language, so every language gets
//! the same ids, turn structure, intents, slot keys and gold structure.
//!
//! A session opens with a request in some domain and its system reply, then
//! continues with follow-up pairs. Each follow-up template names the context
//! slot keys it refers to (`carry`); the most recent in-window slot with each
//! such key is gold. `"*"` refers to every context slot. The remaining context
//! slots are distractors.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{tokenize, CorpusError, DialogueSession, SchemaMap, Slot, SlotRef, Speaker, Turn};

const DEFAULT_CONFIG: &str = include_str!("default_generator.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub name: String,
    pub intent: String,
    pub act: String,
    /// Surface variants per language, with `{Key}` placeholders.
    pub patterns: BTreeMap<String, Vec<String>>,
}

impl Template {
    fn domain(&self) -> &str {
        self.intent.split('.').next().unwrap_or("")
    }

    fn placeholders(&self, language: &str) -> Vec<String> {
        self.patterns
            .get(language)
            .and_then(|v| v.first())
            .map(|p| split_pattern(p).1)
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowUp {
    #[serde(flatten)]
    pub template: Template,
    /// Context slot keys (after schema mapping) this utterance refers to.
    pub carry: Vec<String>,
    #[serde(default)]
    pub reply: Option<Template>,
}

impl FollowUp {
    fn carries_all(&self) -> bool {
        self.carry.iter().any(|k| k == "*")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainTemplates {
    pub name: String,
    pub openings: Vec<Template>,
    pub replies: Vec<Template>,
    pub followups: Vec<FollowUp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub languages: Vec<String>,
    pub sessions: usize,
    pub avg_user_turns: f64,
    pub max_user_turns: usize,
    /// Probability that a follow-up is a selective one (leaving distractor
    /// slots in context) rather than one that refers to every context slot.
    pub distractor_rate: f64,
    pub window: usize,
    /// System reply used when a follow-up has none of its own.
    pub acknowledgement: Template,
    pub schema_map: SchemaMap,
    /// Slot key → language → index-aligned values.
    pub lexicons: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    pub domains: Vec<DomainTemplates>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_CONFIG).expect("embedded generator config is valid")
    }
}

/// Splits `"find a {PlaceType} in {City}"` into carrier segments
/// `["find a ", " in ", ""]` and placeholders `["PlaceType", "City"]`.
fn split_pattern(pattern: &str) -> (Vec<String>, Vec<String>) {
    let mut segments = Vec::new();
    let mut keys = Vec::new();
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        match rest[open..].find('}') {
            Some(close) => {
                segments.push(rest[..open].to_string());
                keys.push(rest[open + 1..open + close].to_string());
                rest = &rest[open + close + 1..];
            }
            None => break,
        }
    }
    segments.push(rest.to_string());
    (segments, keys)
}

impl GeneratorConfig {
    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        serde_json::from_str(text).map_err(|e| CorpusError::Generation(format!("bad generator config: {e}")))
    }

    fn templates(&self) -> impl Iterator<Item = &Template> {
        std::iter::once(&self.acknowledgement).chain(self.domains.iter().flat_map(|d| {
            d.openings
                .iter()
                .chain(&d.replies)
                .chain(d.followups.iter().flat_map(|f| std::iter::once(&f.template).chain(f.reply.as_ref())))
        }))
    }

    fn domain(&self, name: &str) -> Option<&DomainTemplates> {
        self.domains.iter().find(|d| d.name == name)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let err = |m: String| Err(CorpusError::Generation(m));
        if self.languages.is_empty() {
            return err("no languages configured".into());
        }
        if self.window == 0 {
            return err("window must be at least 1".into());
        }
        if self.max_user_turns == 0
            || !(self.avg_user_turns >= 1.0 && self.avg_user_turns <= self.max_user_turns as f64)
        {
            return err(format!(
                "avg_user_turns {} must lie in [1, max_user_turns={}]",
                self.avg_user_turns, self.max_user_turns
            ));
        }
        if !(0.0..=1.0).contains(&self.distractor_rate) {
            return err(format!("distractor_rate {} outside [0, 1]", self.distractor_rate));
        }
        if !self.domains.iter().any(|d| !d.openings.is_empty()) {
            return err("no domain has opening templates".into());
        }
        for (key, per_lang) in &self.lexicons {
            let mut len = None;
            for lang in &self.languages {
                let values = match per_lang.get(lang) {
                    Some(v) if !v.is_empty() => v,
                    _ => return err(format!("lexicon {key} has no values for {lang}")),
                };
                if *len.get_or_insert(values.len()) != values.len() {
                    return err(format!("lexicon {key} is not index-aligned across languages"));
                }
                let distinct: HashSet<String> = values.iter().map(|v| tokenize(v).join(" ")).collect();
                if distinct.len() != values.len() {
                    return err(format!("lexicon {key} has duplicate values for {lang}"));
                }
            }
        }
        for t in self.templates() {
            let mut reference: Option<Vec<String>> = None;
            for lang in &self.languages {
                let variants = match t.patterns.get(lang) {
                    Some(v) if !v.is_empty() => v,
                    _ => return err(format!("template {} has no pattern for {lang}", t.name)),
                };
                for v in variants {
                    let mut keys = split_pattern(v).1;
                    for k in &keys {
                        if !self.lexicons.get(k).is_some_and(|l| l.contains_key(lang)) {
                            return err(format!("template {}: missing lexicon entry {k} for {lang}", t.name));
                        }
                    }
                    keys.sort();
                    match &reference {
                        None => reference = Some(keys),
                        Some(r) if *r != keys => {
                            return err(format!("template {}: variants use different placeholders", t.name))
                        }
                        _ => {}
                    }
                }
            }
        }
        for d in &self.domains {
            for f in &d.followups {
                if f.carries_all() && !f.template.placeholders(&self.languages[0]).is_empty() {
                    return err(format!("carry-all follow-up {} must not introduce slots", f.template.name));
                }
            }
            if self.distractor_rate == 0.0 && !d.followups.iter().any(FollowUp::carries_all) && !d.followups.is_empty() {
                return err(format!("distractor_rate 0 needs a carry-all follow-up in domain {}", d.name));
            }
        }
        Ok(())
    }

    /// Phrase table from `src` to `tgt`: aligned carrier segments of each
    /// template's first variant plus index-aligned lexicon values. A fraction
    /// `value_drop_rate` of value entries is left out, so those values pass
    /// through untranslated. First entry wins on duplicate source phrases.
    pub fn phrase_table(&self, src: &str, tgt: &str, value_drop_rate: f64, seed: u64) -> Vec<(String, String)> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        let mut push = |a: Vec<String>, b: Vec<String>, out: &mut Vec<(String, String)>| {
            if a.is_empty() || b.is_empty() {
                return;
            }
            let a = a.join(" ");
            if seen.insert(a.clone()) {
                out.push((a, b.join(" ")));
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (key, per_lang) in &self.lexicons {
            let (Some(a), Some(b)) = (per_lang.get(src), per_lang.get(tgt)) else { continue };
            for (va, vb) in a.iter().zip(b) {
                let drop = rng.random::<f64>() < value_drop_rate;
                if !drop {
                    push(Slot::new(key.as_str(), va.as_str(), "").value_tokens(), tokenize(vb), &mut out);
                }
            }
        }
        for t in self.templates() {
            let (Some(a), Some(b)) = (
                t.patterns.get(src).and_then(|v| v.first()),
                t.patterns.get(tgt).and_then(|v| v.first()),
            ) else {
                continue;
            };
            let (sa, _) = split_pattern(a);
            let (sb, _) = split_pattern(b);
            if sa.len() != sb.len() {
                continue;
            }
            for (x, y) in sa.iter().zip(&sb) {
                push(tokenize(x), tokenize(y), &mut out);
            }
        }
        out
    }

    /// Word-level bilingual dictionary: phrase-table entries whose two sides
    /// have equal token counts, aligned position by position.
    pub fn bilingual_dictionary(&self, src: &str, tgt: &str) -> Vec<(String, String)> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (a, b) in self.phrase_table(src, tgt, 0.0, 0) {
            let (ta, tb): (Vec<&str>, Vec<&str>) = (a.split(' ').collect(), b.split(' ').collect());
            if ta.len() != tb.len() {
                continue;
            }
            for (x, y) in ta.into_iter().zip(tb) {
                if seen.insert(x.to_string()) {
                    out.push((x.to_string(), y.to_string()));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct AbstractSlot {
    key: String,
    index: usize,
    domain: String,
}

#[derive(Debug, Clone)]
struct AbstractTurn<'a> {
    speaker: Speaker,
    template: &'a Template,
    /// Value index per placeholder of the template.
    values: BTreeMap<String, usize>,
    variant: BTreeMap<String, usize>,
}

impl AbstractTurn<'_> {
    fn slots(&self) -> Vec<AbstractSlot> {
        self.values
            .iter()
            .map(|(k, &i)| AbstractSlot { key: k.clone(), index: i, domain: self.template.domain().to_string() })
            .collect()
    }
}

struct Draw<'a> {
    cfg: &'a GeneratorConfig,
    rng: ChaCha8Rng,
}

impl<'a> Draw<'a> {
    fn pick<T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.rng.random_range(0..items.len())]
    }

    fn turn(&mut self, speaker: Speaker, template: &'a Template) -> AbstractTurn<'a> {
        let mut values = BTreeMap::new();
        for key in template.placeholders(&self.cfg.languages[0]) {
            let n = self.cfg.lexicons[&key][&self.cfg.languages[0]].len();
            values.insert(key, self.rng.random_range(0..n));
        }
        let mut variant = BTreeMap::new();
        for lang in &self.cfg.languages {
            let n = template.patterns[lang].len();
            variant.insert(lang.clone(), self.rng.random_range(0..n));
        }
        AbstractTurn { speaker, template, values, variant }
    }

    fn user_turn_count(&mut self) -> usize {
        let extra = self.cfg.max_user_turns - 1;
        if extra == 0 {
            return 1;
        }
        let p = (self.cfg.avg_user_turns - 1.0) / extra as f64;
        1 + (0..extra).filter(|_| self.rng.random::<f64>() < p).count()
    }

    fn followup(&mut self, domain: &'a DomainTemplates) -> &'a FollowUp {
        let (all, selective): (Vec<&FollowUp>, Vec<&FollowUp>) =
            domain.followups.iter().partition(|f| f.carries_all());
        let want_selective = self.rng.random::<f64>() < self.cfg.distractor_rate;
        let pool = match (want_selective, selective.is_empty(), all.is_empty()) {
            (true, false, _) | (false, _, true) => selective,
            _ => all,
        };
        pool[self.rng.random_range(0..pool.len())]
    }
}

/// Gold for a follow-up: (mapped key, abstract slot) pairs.
fn abstract_gold(
    cfg: &GeneratorConfig,
    turns: &[AbstractTurn<'_>],
    followup: &FollowUp,
) -> Vec<(String, AbstractSlot)> {
    let current_pos = turns.len();
    let ordinal = current_pos / 2;
    let reach = ordinal.min(cfg.window);
    let domain = followup.template.domain();
    let own: HashSet<String> = followup.template.placeholders(&cfg.languages[0]).into_iter().collect();

    // (mapped key, slot, distance, position)
    let mut cands = Vec::new();
    for distance in 1..=reach {
        let user_pos = current_pos - 2 * distance;
        for pos in [user_pos, user_pos + 1] {
            for s in turns[pos].slots() {
                let probe = Slot::new(s.key.as_str(), "x", s.domain.as_str());
                let mapped = cfg.schema_map.apply(&probe, domain).key;
                cands.push((mapped, s, distance, pos));
            }
        }
    }
    let mut gold: Vec<(String, AbstractSlot)> = Vec::new();
    let push = |k: &str, s: &AbstractSlot, gold: &mut Vec<(String, AbstractSlot)>| {
        if !gold.iter().any(|(gk, gs)| gk == k && gs.key == s.key && gs.index == s.index) {
            gold.push((k.to_string(), s.clone()));
        }
    };
    if followup.carries_all() {
        for (k, s, _, _) in &cands {
            if !own.contains(k) {
                push(k, s, &mut gold);
            }
        }
    } else {
        for key in &followup.carry {
            if own.contains(key) {
                continue;
            }
            let best = cands
                .iter()
                .filter(|(k, ..)| k == key)
                .min_by_key(|(_, _, d, pos)| (*d, std::cmp::Reverse(*pos)));
            if let Some((k, s, ..)) = best {
                push(k, s, &mut gold);
            }
        }
    }
    gold
}

fn realize_turn(cfg: &GeneratorConfig, turn: &AbstractTurn<'_>, lang: &str) -> Turn {
    let pattern = &turn.template.patterns[lang][turn.variant[lang]];
    let (segments, keys) = split_pattern(pattern);
    let mut tokens = Vec::new();
    let mut placed: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (i, seg) in segments.iter().enumerate() {
        tokens.extend(tokenize(seg));
        if let Some(key) = keys.get(i) {
            let value = &cfg.lexicons[key][lang][turn.values[key]];
            let start = tokens.len();
            tokens.extend(tokenize(value));
            placed.insert(key.clone(), (start, tokens.len()));
        }
    }
    let domain = turn.template.domain().to_string();
    let mut slots = Vec::new();
    let mut spans = Vec::new();
    for (key, &index) in &turn.values {
        slots.push(Slot::new(key.as_str(), cfg.lexicons[key][lang][index].as_str(), domain.as_str()));
        spans.push(placed.get(key).copied());
    }
    Turn {
        speaker: turn.speaker,
        act: turn.template.act.clone(),
        intent: turn.template.intent.clone(),
        tokens,
        slots,
        slot_spans: spans,
    }
}

/// Generates `n` parallel sessions with ids `{prefix}{index:06}`.
pub(crate) fn synthesize_sessions(
    cfg: &GeneratorConfig,
    n: usize,
    prefix: &str,
    seed: u64,
) -> Result<BTreeMap<String, Vec<DialogueSession>>, CorpusError> {
    cfg.validate()?;
    let openers: Vec<&DomainTemplates> = cfg.domains.iter().filter(|d| !d.openings.is_empty()).collect();
    let mut draw = Draw { cfg, rng: ChaCha8Rng::seed_from_u64(seed) };
    let mut out: BTreeMap<String, Vec<DialogueSession>> =
        cfg.languages.iter().map(|l| (l.clone(), Vec::with_capacity(n))).collect();

    for idx in 0..n {
        let n_user = draw.user_turn_count();
        let mut domain = openers[draw.rng.random_range(0..openers.len())];
        let opening = draw.pick(&domain.openings);
        let mut turns = vec![draw.turn(Speaker::User, opening)];
        let reply = if domain.replies.is_empty() { &cfg.acknowledgement } else { draw.pick(&domain.replies) };
        turns.push(draw.turn(Speaker::System, reply));

        let mut gold = BTreeMap::new();
        for ordinal in 1..n_user {
            if domain.followups.is_empty() {
                break;
            }
            let followup = draw.followup(domain);
            let g = abstract_gold(cfg, &turns, followup);
            gold.insert(ordinal, g);
            turns.push(draw.turn(Speaker::User, &followup.template));
            let reply = followup.reply.as_ref().unwrap_or(&cfg.acknowledgement);
            turns.push(draw.turn(Speaker::System, reply));
            if let Some(next) = cfg.domain(followup.template.domain()) {
                domain = next;
            }
        }

        for lang in &cfg.languages {
            let realized: Vec<Turn> = turns.iter().map(|t| realize_turn(cfg, t, lang)).collect();
            let gold_lang = gold
                .iter()
                .map(|(&o, g)| {
                    let refs = g
                        .iter()
                        .map(|(k, s)| SlotRef::new(k, &cfg.lexicons[&s.key][lang][s.index]))
                        .collect();
                    (o, refs)
                })
                .collect();
            let session = DialogueSession {
                id: format!("{prefix}{idx:06}"),
                language: lang.clone(),
                turns: realized,
                gold_carryover: gold_lang,
            };
            session.validate()?;
            out.get_mut(lang).expect("language present").push(session);
        }
    }
    Ok(out)
}

/// Generates `config.sessions` parallel sessions per configured language.
/// Identical `(config, seed)` always yields identical output.
pub fn synthesize_parallel_corpus(
    config: &GeneratorConfig,
    seed: u64,
) -> Result<BTreeMap<String, Vec<DialogueSession>>, CorpusError> {
    synthesize_sessions(config, config.sessions, "s", seed)
}

/// Train/dev/test splits drawn with independent derived seeds.
#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    pub train: BTreeMap<String, Vec<DialogueSession>>,
    pub dev: BTreeMap<String, Vec<DialogueSession>>,
    pub test: BTreeMap<String, Vec<DialogueSession>>,
}

impl GeneratedCorpus {
    pub fn generate(
        config: &GeneratorConfig,
        sizes: (usize, usize, usize),
        seed: u64,
    ) -> Result<Self, CorpusError> {
        use crate::seed::derive_seed;
        Ok(GeneratedCorpus {
            train: synthesize_sessions(config, sizes.0, "train-", derive_seed(seed, "train"))?,
            dev: synthesize_sessions(config, sizes.1, "dev-", derive_seed(seed, "dev"))?,
            test: synthesize_sessions(config, sizes.2, "test-", derive_seed(seed, "test"))?,
        })
    }
}
