//! Acceptance criteria 1 to 10. Each test prints one `PASS`/`FAIL` line to
//! stdout (visible with or without `--nocapture`) and then asserts.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use slot_carryover::corpus::{
    candidate_set, examples_for_session, examples_for_sessions, synthesize_parallel_corpus, tokenize,
    GeneratorConfig,
};
use slot_carryover::delex::{augment_with_delex, delexicalize_turn};
use slot_carryover::embeddings::{procrustes_align, synthesize_bilingual};
use slot_carryover::harness::{
    evaluate_baseline, prf1, run_experiment_grid, train, BenchmarkSettings, EmbeddingMode, EvalSet,
    ExperimentReport, GridConfig, GridResources, SyntheticBenchmark,
};
use slot_carryover::model::{example_tokens, init_model, AdamConfig, AdamState, Mat, Params};
use slot_carryover::translation::{back_translation_bleu, corpus_bleu, PhraseTableTranslator};
use slot_carryover::{
    CandidateExample, DialogueSession, EmbeddingTable, Hyperparams, SchemaMap, Slot, SlotRef, Speaker, Turn,
};

fn report(id: u32, what: &str, ok: bool, detail: impl std::fmt::Display) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "{verdict} {id:>2} {what}: {detail}").expect("stdout");
    out.flush().expect("stdout");
    assert!(ok, "criterion {id} ({what}) failed: {detail}");
}

fn strings(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

// ---------------------------------------------------------------- 1

#[test]
fn c01_f1_from_precision_and_recall() {
    let rows = [(37.77, 93.75, 53.85), (30.57, 85.66, 45.06), (90.7, 93.1, 91.9)];
    let mut worst: f64 = 0.0;
    let mut got = Vec::new();
    for (p, r, f) in rows {
        // Counts whose ratios reproduce P and R to 1e-6 of a point.
        let tp = 1_000_000u64;
        let fp = (tp as f64 * (100.0 / p - 1.0)).round() as u64;
        let fn_ = (tp as f64 * (100.0 / r - 1.0)).round() as u64;
        let m = prf1(tp, fp, fn_);
        let f1 = 100.0 * m.f1;
        worst = worst.max((f1 - f).abs());
        got.push(format!("{f1:.2}"));
    }
    report(1, "metric identity", worst <= 0.05, format!("F1 {} (max deviation {worst:.4})", got.join(", ")));
}

// ---------------------------------------------------------------- 2

/// Every slot of every turn before user turn `t` whose pair offset lies in
/// `1..=window`, as (key, normalized value, offset).
fn brute_force_candidates(
    session: &DialogueSession,
    t: usize,
    window: usize,
    map: Option<&SchemaMap>,
) -> BTreeSet<(String, String, usize)> {
    let current = 2 * t;
    let domain = session.turns[current].intent.split('.').next().unwrap_or("");
    let mut out = BTreeSet::new();
    for j in 0..current {
        let offset = t - j / 2;
        if offset < 1 || offset > window {
            continue;
        }
        for slot in &session.turns[j].slots {
            let key = match map.and_then(|m| m.get(&slot.domain, &slot.key)) {
                Some((d, k)) if slot.domain != domain && d == domain => k.to_string(),
                _ => slot.key.clone(),
            };
            out.insert((key, tokenize(&slot.value).join(" "), offset));
        }
    }
    out
}

#[test]
fn c02_candidate_set_matches_brute_force_union() {
    let cfg = GeneratorConfig { sessions: 1000, ..GeneratorConfig::default() };
    let start = Instant::now();
    let corpus = synthesize_parallel_corpus(&cfg, 2024).unwrap();
    let sessions = &corpus["en_US"];
    let (mut turns, mut mismatches, mut checked) = (0usize, 0usize, 0usize);
    for s in sessions {
        for t in 0..s.num_user_turns() {
            turns += 1;
            for window in [1, 2, 3] {
                for map in [None, Some(&cfg.schema_map)] {
                    let got = candidate_set(s, t, window, map).unwrap();
                    let triples: Vec<(String, String, usize)> = got
                        .iter()
                        .map(|c| (c.slot.key.clone(), c.slot.as_ref_pair().value, c.distance))
                        .collect();
                    let set: BTreeSet<_> = triples.iter().cloned().collect();
                    checked += 1;
                    if set.len() != triples.len() || set != brute_force_candidates(s, t, window, map) {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        2,
        "candidate-set oracle",
        sessions.len() == 1000 && mismatches == 0 && secs < 10.0,
        format!("{} sessions, {turns} user turns, {checked} sets, {mismatches} mismatches, {secs:.2} s", sessions.len()),
    );
}

// ---------------------------------------------------------------- 3

fn fixture_session() -> DialogueSession {
    let turns = vec![
        Turn::new(Speaker::User, "request", "Local.SearchPlaceIntent", "find a museum in san francisco")
            .with_slot("PlaceType", "museum", "Local")
            .with_slot("City", "san francisco", "Local"),
        Turn::new(Speaker::System, "inform", "Local.InformAction", "found exploratorium it is 10 miles away")
            .with_slot("Place", "Exploratorium", "Local")
            .with_slot("Distance", "10 miles", "Local"),
        Turn::new(Speaker::User, "request", "Local.GetAddressIntent", "what's the address"),
        Turn::new(Speaker::System, "inform", "Local.InformAction", "it is on pier 15")
            .with_slot("Address", "pier 15", "Local"),
        Turn::new(Speaker::User, "request", "Calling.CallIntent", "call them"),
    ];
    let mut gold = BTreeMap::new();
    gold.insert(1, vec![SlotRef::new("Place", "Exploratorium"), SlotRef::new("City", "san francisco")]);
    gold.insert(2, vec![SlotRef::new("Place", "Exploratorium")]);
    DialogueSession { id: "fixture".into(), language: "en_US".into(), turns, gold_carryover: gold }
}

#[test]
fn c03_gradients_match_central_differences() {
    const EPS: f64 = 1e-5;
    const FLOOR: f64 = 1e-6;
    let start = Instant::now();
    let examples = examples_for_session(&fixture_session(), 2, None).unwrap();
    let pos: Vec<&CandidateExample> = examples.iter().filter(|e| e.label == Some(true)).collect();
    let neg: Vec<&CandidateExample> = examples.iter().filter(|e| e.label == Some(false)).collect();
    let batch: Vec<CandidateExample> =
        [pos[0], neg[0], pos[pos.len() - 1], neg[neg.len() - 1]].into_iter().cloned().collect();
    assert!(!batch[0].shares_input_with(&batch[2]), "batch must span two turns");

    let hyper = Hyperparams { embedding_dim: 4, encoder_hidden: 4, decoder_hidden: 8, ..Hyperparams::default() };
    let mut table = EmbeddingTable::new("en_US", 4);
    table.push("museum", &[0.3, -0.1, 0.2, 0.05]).unwrap();
    table.push("call", &[-0.2, 0.25, 0.0, 0.1]).unwrap();
    let model = init_model(&hyper, &table, example_tokens(&batch), 17).unwrap();
    let weight = 2.5;
    let (_, grads) = model.loss_and_grad(&batch, weight).unwrap();

    let mut worst = ("", 0.0f64);
    for (b, name) in Params::BLOCK_NAMES.iter().enumerate() {
        let analytic = &grads.blocks()[b].data;
        for j in 0..analytic.len() {
            let mut plus = model.clone();
            plus.params.blocks_mut()[b].data[j] += EPS;
            let mut minus = model.clone();
            minus.params.blocks_mut()[b].data[j] -= EPS;
            let numeric =
                (plus.loss_and_grad(&batch, weight).unwrap().0 - minus.loss_and_grad(&batch, weight).unwrap().0)
                    / (2.0 * EPS);
            let rel = (analytic[j] - numeric).abs() / (analytic[j].abs() + numeric.abs()).max(FLOOR);
            if rel > worst.1 {
                worst = (name, rel);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        3,
        "gradient check",
        worst.1 < 1e-4 && secs < 60.0,
        format!("{} blocks, worst relative error {:.2e} in {}, {secs:.2} s", Params::BLOCK_NAMES.len(), worst.1, worst.0),
    );
}

// ---------------------------------------------------------------- 4

#[test]
fn c04_adam_matches_closed_form() {
    let cfg = AdamConfig { learning_rate: 0.01, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 };
    let theta0 = 0.5;
    let (g1, g2) = (0.2, -0.35);
    let mut p = Mat { rows: 1, cols: 1, data: vec![theta0] };
    let mut state = AdamState::new(&[&p]);
    let grad = |g: f64| Mat { rows: 1, cols: 1, data: vec![g] };

    state.step_blocks(&mut [&mut p], &[&grad(g1)], &cfg).unwrap();
    let m1 = (1.0 - 0.9) * g1;
    let v1 = (1.0 - 0.999) * g1 * g1;
    let step1 = -0.01 * (m1 / (1.0 - 0.9)) / ((v1 / (1.0 - 0.999)).sqrt() + 1e-8);
    let err1 = (p.data[0] - (theta0 + step1)).abs();

    state.step_blocks(&mut [&mut p], &[&grad(g2)], &cfg).unwrap();
    let m2 = 0.9 * m1 + 0.1 * g2;
    let v2 = 0.999 * v1 + 0.001 * g2 * g2;
    let m_hat = m2 / (1.0 - 0.9f64.powi(2));
    let v_hat = v2 / (1.0 - 0.999f64.powi(2));
    let theta2 = theta0 + step1 - 0.01 * m_hat / (v_hat.sqrt() + 1e-8);
    let err2 = (p.data[0] - theta2).abs();
    report(
        4,
        "Adam closed form",
        err1 < 1e-9 && err2 < 1e-12,
        format!("first step error {err1:.1e}, two-step error {err2:.1e}"),
    );
}

// ---------------------------------------------------------------- 5

fn brute_ngrams(tokens: &[String], n: usize) -> Vec<Vec<String>> {
    (0..tokens.len().saturating_sub(n - 1)).map(|i| tokens[i..i + n].to_vec()).collect()
}

fn brute_bleu(hyps: &[Vec<String>], refs: &[Vec<String>]) -> f64 {
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let (mut matched, mut total) = (0usize, 0usize);
        for (h, r) in hyps.iter().zip(refs) {
            let hg = brute_ngrams(h, n);
            let rg = brute_ngrams(r, n);
            let mut distinct: Vec<&Vec<String>> = Vec::new();
            for g in &hg {
                if !distinct.contains(&g) {
                    distinct.push(g);
                }
            }
            for g in distinct {
                let in_hyp = hg.iter().filter(|x| *x == g).count();
                let in_ref = rg.iter().filter(|x| *x == g).count();
                matched += in_hyp.min(in_ref);
            }
            total += hg.len();
        }
        log_sum += (matched as f64 / total as f64).ln() / 4.0;
    }
    let c: usize = hyps.iter().map(Vec::len).sum();
    let r: usize = refs.iter().map(Vec::len).sum();
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    bp * log_sum.exp()
}

#[test]
fn c05_bleu() {
    let refs: Vec<Vec<String>> = [
        "the cat is on the mat",
        "find a museum in san francisco near the bay",
        "call them please and tell them i am on my way",
        "how far is the exploratorium from here",
    ]
    .iter()
    .map(|s| strings(s))
    .collect();
    let identical = corpus_bleu(&refs, &refs, 4, false).unwrap().score;

    let clipped = corpus_bleu(&[strings("the the the the the the the")], &[strings("the cat is on the mat")], 4, true)
        .unwrap()
        .per_n_precision[0];

    let hyps: Vec<Vec<String>> = [
        "the cat is on a mat",
        "find a museum in san francisco by the bay",
        "call them and tell them i am on the way",
        "how far is exploratorium from here now",
    ]
    .iter()
    .map(|s| strings(s))
    .collect();
    let toy = corpus_bleu(&hyps, &refs, 4, false).unwrap().score;
    let toy_oracle = brute_bleu(&hyps, &refs);

    // A lossy synonym mapping over twenty generated sentences.
    let cfg = GeneratorConfig { sessions: 10, ..GeneratorConfig::default() };
    let sessions = &synthesize_parallel_corpus(&cfg, 5).unwrap()["en_US"];
    let sentences: Vec<Vec<String>> = sessions.iter().flat_map(|s| &s.turns).take(20).map(|t| t.tokens.clone()).collect();
    let lossy: Vec<Vec<String>> = sentences
        .iter()
        .map(|s| s.iter().map(|w| if w == "the" { "a".to_string() } else { w.clone() }).collect())
        .collect();
    let lossy_score = corpus_bleu(&lossy, &sentences, 4, false).unwrap().score;
    let lossy_oracle = brute_bleu(&lossy, &sentences);

    // One-to-one word mapping and its inverse.
    let vocab: BTreeSet<String> =
        sessions.iter().flat_map(|s| &s.turns).flat_map(|t| t.tokens.iter().cloned()).collect();
    let fwd = PhraseTableTranslator::new(vocab.iter().map(|w| (w.clone(), format!("{w}_x"))).collect::<Vec<_>>());
    let round_trip = back_translation_bleu(sessions, &fwd, &fwd.inverse(), "xx_XX", false).unwrap().score;

    let ok = identical == 1.0
        && (clipped - 2.0 / 7.0).abs() < 1e-12
        && (toy - toy_oracle).abs() < 1e-9
        && toy > 0.0
        && toy < 1.0
        && (lossy_score - lossy_oracle).abs() < 1e-9
        && round_trip == 1.0;
    report(
        5,
        "BLEU",
        ok,
        format!(
            "identical {identical}, clipped unigram {clipped:.6}, toy {toy:.9} vs {toy_oracle:.9}, \
             lossy {lossy_score:.9} vs {lossy_oracle:.9}, round trip {round_trip}"
        ),
    );
}

// ---------------------------------------------------------------- 6

fn planted(noise: f64, seed: u64) -> (f64, f64, f64) {
    let src: Vec<String> = (0..50).map(|i| format!("s{i}")).collect();
    let tgt: Vec<String> = (0..50).map(|i| format!("t{i}")).collect();
    let dict: Vec<(String, String)> = src.iter().cloned().zip(tgt.iter().cloned()).collect();
    let (s, t, q) = synthesize_bilingual("en_US", &src, "de_DE", &tgt, &dict, 16, noise, seed);
    let fit = procrustes_align(&s, &t, &dict).unwrap();
    let recovery = fit.mapping.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    (fit.orthogonality_error(), recovery, fit.dictionary_accuracy)
}

#[test]
fn c06_procrustes() {
    let start = Instant::now();
    let mut ortho: f64 = 0.0;
    let mut clean_recovery: f64 = 0.0;
    let mut clean_acc: f64 = 1.0;
    let mut noisy_acc: f64 = 1.0;
    for seed in 0..5 {
        let (o, r, a) = planted(0.0, seed);
        ortho = ortho.max(o);
        clean_recovery = clean_recovery.max(r);
        clean_acc = clean_acc.min(a);
        let (o, _, a) = planted(0.01, 100 + seed);
        ortho = ortho.max(o);
        noisy_acc = noisy_acc.min(a);
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        6,
        "Procrustes",
        ortho < 1e-6 && clean_recovery < 1e-4 && clean_acc == 1.0 && noisy_acc >= 0.95 && secs < 5.0,
        format!(
            "orthogonality {ortho:.1e}, recovery {clean_recovery:.1e}, accuracy {clean_acc} clean / {noisy_acc} noisy, {secs:.2} s"
        ),
    );
}

// ---------------------------------------------------------------- 7

#[test]
fn c07_delexicalization() {
    let session = fixture_session();
    let u1 = delexicalize_turn(&session.turns[0]).unwrap().tokens.join(" ");
    let v1 = delexicalize_turn(&session.turns[1]).unwrap().tokens.join(" ");
    let rows_ok = u1 == "Local.SearchPlaceIntent find a PlaceType in City"
        && v1 == "Local.InformAction found Place it is Distance away";

    let cfg = GeneratorConfig { sessions: 200, ..GeneratorConfig::default() };
    let corpus = synthesize_parallel_corpus(&cfg, 77).unwrap();
    let examples = examples_for_sessions(&corpus["en_US"], 2, Some(&cfg.schema_map)).unwrap();
    let hundred = &examples[..100];
    let augmented = augment_with_delex(hundred);
    let doubled = augmented.len() == 200
        && augmented[..100] == *hundred
        && augmented[100..].iter().zip(hundred).all(|(d, e)| {
            d.label == e.label && d.distance == e.distance && d.slot.value == e.slot.key
        });

    // Token-count identity on every turn, and key symbols shared across languages.
    let mut count_violations = 0;
    let mut key_mismatches = 0;
    let de = &corpus["de_DE"];
    for (en_s, de_s) in corpus["en_US"].iter().zip(de) {
        for (en_t, de_t) in en_s.turns.iter().zip(&de_s.turns) {
            let d = delexicalize_turn(en_t).unwrap();
            let spans: Vec<_> = en_t.slot_spans.iter().flatten().collect();
            let removed: usize = spans.iter().map(|(a, b)| b - a).sum();
            if d.tokens.len() != en_t.tokens.len() - removed + spans.len() + 1 || d.tokens[0] != en_t.intent {
                count_violations += 1;
            }
            let keys = |t: &Turn| -> BTreeSet<String> {
                delexicalize_turn(t).unwrap().slots.iter().map(|s: &Slot| s.value.clone()).collect()
            };
            if keys(en_t) != keys(de_t) {
                key_mismatches += 1;
            }
        }
    }
    report(
        7,
        "delexicalization",
        rows_ok && doubled && count_violations == 0 && key_mismatches == 0,
        format!(
            "U1 \"{u1}\", V1 \"{v1}\", 100 -> {} examples, {count_violations} count violations, {key_mismatches} key mismatches",
            augmented.len()
        ),
    );
}

// ---------------------------------------------------------------- 8 to 10

const SOURCE: &str = "en_US";
const TARGET: &str = "de_DE";

fn benchmark() -> &'static (GeneratorConfig, SyntheticBenchmark) {
    static BENCH: OnceLock<(GeneratorConfig, SyntheticBenchmark)> = OnceLock::new();
    BENCH.get_or_init(|| {
        let cfg = GeneratorConfig::default();
        let bench = SyntheticBenchmark::build(&cfg, &BenchmarkSettings::default(), SOURCE, TARGET, 0).unwrap();
        (cfg, bench)
    })
}

fn compact_hyper(epochs: usize) -> Hyperparams {
    Hyperparams {
        embedding_dim: BenchmarkSettings::default().embedding_dim,
        encoder_hidden: 32,
        decoder_hidden: 64,
        max_epochs: epochs,
        ..Hyperparams::default()
    }
}

#[test]
fn c08_model_beats_most_recent_slots_baseline() {
    let start = Instant::now();
    let (cfg, bench) = benchmark();
    let map = Some(&cfg.schema_map);
    let hyper = compact_hyper(40);
    let train_set = examples_for_sessions(bench.split("train", SOURCE), hyper.window, map).unwrap();
    let dev = EvalSet::new(bench.split("dev", SOURCE), hyper.window, map).unwrap();
    let test = EvalSet::new(bench.split("test", SOURCE), hyper.window, map).unwrap();
    let model = init_model(&hyper, &bench.source_vectors, example_tokens(&train_set), 0).unwrap();
    let outcome = train(model, &train_set, &dev).unwrap();
    let probs = outcome.model.predict(&test.examples).unwrap();
    let model_f1 = test.metrics_for(&probs, hyper.threshold).f1;
    let base_f1 = evaluate_baseline(bench.split("test", SOURCE)).f1;
    let secs = start.elapsed().as_secs_f64();
    report(
        8,
        "end-to-end learning",
        model_f1 - base_f1 >= 0.20 && secs < 900.0,
        format!(
            "test F1 {:.2} vs baseline {:.2} (+{:.2} points, best epoch {}), {secs:.0} s",
            100.0 * model_f1,
            100.0 * base_f1,
            100.0 * (model_f1 - base_f1),
            outcome.best_epoch
        ),
    );
}

fn resources<'a>(cfg: &'a GeneratorConfig, bench: &'a SyntheticBenchmark) -> GridResources<'a> {
    GridResources {
        source_train: bench.split("train", SOURCE),
        source_dev: bench.split("dev", SOURCE),
        target_dev: bench.split("dev", TARGET),
        target_test: bench.split("test", TARGET),
        translator: &bench.translator,
        monolingual: Some(&bench.monolingual),
        multilingual: Some(&bench.multilingual),
        schema_map: Some(&cfg.schema_map),
    }
}

#[test]
fn c09_delex_gain_shrinks_with_more_target_data() {
    let start = Instant::now();
    let (cfg, bench) = benchmark();
    let config = GridConfig {
        fractions: vec![0.01, 1.0],
        delex: vec![false, true],
        source_init: vec![false],
        embeddings: vec![EmbeddingMode::Multilingual],
        joint_training: false,
        seeds: vec![0, 1, 2],
        hyper: compact_hyper(10),
    };
    let report_ = run_experiment_grid(&config, &resources(cfg, bench), 1).unwrap();
    let mut pooled = HashMap::new();
    let mut averaged = HashMap::new();
    for cell in &report_.cells {
        let key = (cell.spec.fraction.to_bits(), cell.spec.delex);
        pooled.insert(key, cell.mean.map(|m| 100.0 * m.f1).unwrap_or(f64::NAN));
        let per_seed: Vec<f64> = cell.runs.iter().map(|r| 100.0 * r.metrics.f1).collect();
        averaged.insert(key, per_seed.iter().sum::<f64>() / per_seed.len().max(1) as f64);
    }
    let gain = |m: &HashMap<(u64, bool), f64>, f: f64| m[&(f.to_bits(), true)] - m[&(f.to_bits(), false)];
    let ok_for = |m: &HashMap<(u64, bool), f64>| gain(m, 0.01) > 0.0 && gain(m, 1.0) < gain(m, 0.01);
    let secs = start.elapsed().as_secs_f64();
    let f = |m: &HashMap<(u64, bool), f64>, fr: f64, d: bool| m[&(fr.to_bits(), d)];
    report(
        9,
        "directional delex effect",
        ok_for(&pooled) && ok_for(&averaged) && secs < 2700.0,
        format!(
            "F1 at 0.01 {:.2} -> {:.2} (gain {:+.2}), at 1.0 {:.2} -> {:.2} (gain {:+.2}); \
             seed-averaged gains {:+.2} / {:+.2}; {secs:.0} s",
            f(&pooled, 0.01, false),
            f(&pooled, 0.01, true),
            gain(&pooled, 0.01),
            f(&pooled, 1.0, false),
            f(&pooled, 1.0, true),
            gain(&pooled, 1.0),
            gain(&averaged, 0.01),
            gain(&averaged, 1.0),
        ),
    );
}

fn small_run() -> (String, String, String) {
    let cfg = GeneratorConfig::default();
    let settings = BenchmarkSettings { sizes: (150, 40, 40), ..BenchmarkSettings::default() };
    let bench = SyntheticBenchmark::build(&cfg, &settings, SOURCE, TARGET, 11).unwrap();
    let config = GridConfig {
        fractions: vec![0.25, 1.0],
        delex: vec![false, true],
        source_init: vec![false, true],
        embeddings: vec![EmbeddingMode::Monolingual, EmbeddingMode::Multilingual],
        joint_training: false,
        seeds: vec![3, 4],
        hyper: Hyperparams { encoder_hidden: 8, decoder_hidden: 16, ..compact_hyper(2) },
    };
    let report: ExperimentReport = run_experiment_grid(&config, &resources(&cfg, &bench), 2).unwrap();
    let mut corpus = String::new();
    for lang in [SOURCE, TARGET] {
        for split in ["train", "dev", "test"] {
            for s in bench.split(split, lang) {
                corpus.push_str(&slot_carryover::corpus::session_to_json_line(s));
                corpus.push('\n');
            }
        }
    }
    (corpus, report.to_json(), report.to_tsv())
}

#[test]
fn c10_repeated_runs_are_bit_identical() {
    let start = Instant::now();
    let first = small_run();
    let second = small_run();
    let third = small_run();
    let same = first == second && second == third;
    let secs = start.elapsed().as_secs_f64();
    report(
        10,
        "determinism",
        same,
        format!(
            "3 runs of a 16-cell, 2-seed grid: corpus {} B, report {} B, identical: {same}, {secs:.0} s",
            first.0.len(),
            first.1.len()
        ),
    );
}
