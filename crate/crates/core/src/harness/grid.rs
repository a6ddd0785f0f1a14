use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::{evaluate, EvalSet};
use super::metrics::Metrics;
use super::train::train;
use super::HarnessError;
use crate::corpus::{examples_for_sessions, session_to_json_line, subsample, CandidateExample, DialogueSession, SchemaMap};
use crate::delex::delexicalize_all;
use crate::embeddings::EmbeddingTable;
use crate::model::{example_tokens, init_model, transfer_init, CarryoverModel, Hyperparams};
use crate::seed::{derive_seed, fnv1a};
use crate::translation::{translate_sessions, Translator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMode {
    Monolingual,
    Multilingual,
}

impl fmt::Display for EmbeddingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbeddingMode::Monolingual => "monolingual",
            EmbeddingMode::Multilingual => "multilingual",
        })
    }
}

impl FromStr for EmbeddingMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "monolingual" | "mono" => Ok(EmbeddingMode::Monolingual),
            "multilingual" | "multi" => Ok(EmbeddingMode::Multilingual),
            _ => Err(format!("unknown embedding mode {s:?} (expected monolingual or multilingual)")),
        }
    }
}

/// The cross product of settings to run, each under every seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Shares of the translated training data to keep, each in (0, 1].
    pub fractions: Vec<f64>,
    pub delex: Vec<bool>,
    pub source_init: Vec<bool>,
    pub embeddings: Vec<EmbeddingMode>,
    /// Adds the lexical source-language training data to every cell.
    pub joint_training: bool,
    pub seeds: Vec<u64>,
    pub hyper: Hyperparams,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            fractions: vec![0.01, 0.25, 1.0],
            delex: vec![false, true],
            source_init: vec![false, true],
            embeddings: vec![EmbeddingMode::Multilingual],
            joint_training: false,
            seeds: vec![0],
            hyper: Hyperparams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub fraction: f64,
    pub delex: bool,
    pub source_init: bool,
    pub embedding: EmbeddingMode,
}

impl GridConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Input(m));
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return bad(format!("fraction {f} outside (0, 1]"));
        }
        if self.fractions.is_empty()
            || self.delex.is_empty()
            || self.source_init.is_empty()
            || self.embeddings.is_empty()
            || self.seeds.is_empty()
        {
            return bad("every grid axis needs at least one value".into());
        }
        self.hyper.validate()?;
        Ok(())
    }

    /// Cells in row-major order: fraction, then delex, source init, embedding.
    pub fn cells(&self) -> Vec<CellSpec> {
        let mut out = Vec::new();
        for &fraction in &self.fractions {
            for &delex in &self.delex {
                for &source_init in &self.source_init {
                    for &embedding in &self.embeddings {
                        out.push(CellSpec { fraction, delex, source_init, embedding });
                    }
                }
            }
        }
        out
    }
}

/// Corpora, translator and embedding tables the grid draws from.
pub struct GridResources<'a> {
    /// Annotated source-language sessions; translated for target training.
    pub source_train: &'a [DialogueSession],
    /// Source-language dev data, used to select the source model.
    pub source_dev: &'a [DialogueSession],
    pub target_dev: &'a [DialogueSession],
    pub target_test: &'a [DialogueSession],
    pub translator: &'a dyn Translator,
    pub monolingual: Option<&'a EmbeddingTable>,
    pub multilingual: Option<&'a EmbeddingTable>,
    pub schema_map: Option<&'a SchemaMap>,
}

impl GridResources<'_> {
    fn table(&self, mode: EmbeddingMode) -> Option<&EmbeddingTable> {
        match mode {
            EmbeddingMode::Monolingual => self.monolingual,
            EmbeddingMode::Multilingual => self.multilingual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub metrics: Metrics,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub spec: CellSpec,
    pub runs: Vec<SeedResult>,
    /// Metrics of the counts pooled over seeds; absent for failed cells.
    pub mean: Option<Metrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusId {
    pub sessions: usize,
    pub fingerprint: String,
}

impl CorpusId {
    fn of(sessions: &[DialogueSession]) -> Self {
        let mut text = String::new();
        for s in sessions {
            text.push_str(&session_to_json_line(s));
            text.push('\n');
        }
        CorpusId { sessions: sessions.len(), fingerprint: format!("{:016x}", fnv1a(text.as_bytes())) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_language: String,
    pub target_language: String,
    pub corpora: BTreeMap<String, CorpusId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: GridConfig,
    pub provenance: Provenance,
    pub cells: Vec<CellResult>,
}

const TSV_HEADER: [&str; 8] = ["fraction", "delex", "source_init", "embedding", "seed", "precision", "recall", "f1"];

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

impl ExperimentReport {
    /// One row per cell and seed; failed cells get a single row marked failed.
    pub fn to_tsv(&self) -> String {
        let mut out = TSV_HEADER.join("\t");
        out.push('\n');
        for cell in &self.cells {
            let s = &cell.spec;
            let prefix = format!("{}\t{}\t{}\t{}", s.fraction, yes_no(s.delex), yes_no(s.source_init), s.embedding);
            if cell.error.is_some() {
                out.push_str(&format!("{prefix}\t-\tfailed\tfailed\tfailed\n"));
                continue;
            }
            for r in &cell.runs {
                let m = &r.metrics;
                out.push_str(&format!(
                    "{prefix}\t{}\t{:.2}\t{:.2}\t{:.2}\n",
                    r.seed,
                    100.0 * m.precision,
                    100.0 * m.recall,
                    100.0 * m.f1
                ));
            }
        }
        out
    }

    /// Aligned table of per-cell means.
    pub fn to_table(&self) -> String {
        let header = ["fraction", "delex", "source_init", "embedding", "seeds", "precision", "recall", "f1"];
        let mut rows: Vec<Vec<String>> = vec![header.iter().map(|h| h.to_string()).collect()];
        for cell in &self.cells {
            let s = &cell.spec;
            let mut row = vec![
                s.fraction.to_string(),
                yes_no(s.delex).to_string(),
                yes_no(s.source_init).to_string(),
                s.embedding.to_string(),
                cell.runs.len().to_string(),
            ];
            match (&cell.mean, &cell.error) {
                (Some(m), None) => row.extend(
                    [m.precision, m.recall, m.f1].iter().map(|v| format!("{:.2}", 100.0 * v)),
                ),
                (_, err) => {
                    row.extend(["failed".to_string(), "-".into(), "-".into()]);
                    log::debug!("cell failed: {err:?}");
                }
            }
            rows.push(row);
        }
        let widths: Vec<usize> =
            (0..header.len()).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for row in &rows {
            let cells: Vec<String> = row.iter().zip(&widths).map(|(v, w)| format!("{v:>w$}")).collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn cell(&self, spec: &CellSpec) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.spec == *spec)
    }
}

/// Runs `f(0..n)` on up to `jobs` threads; results keep index order.
fn run_pool<T: Send>(jobs: usize, n: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    if jobs <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(n) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let r = f(i);
                slots.lock().expect("result lock")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("result lock").into_iter().map(|r| r.expect("every job ran")).collect()
}

/// `table` plus uniformly initialized rows for `tokens` it lacks.
pub fn extend_table(table: &EmbeddingTable, tokens: &BTreeSet<String>, seed: u64) -> EmbeddingTable {
    let mut out = table.clone();
    let dim = table.dim();
    let a = (3.0 / dim as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for tok in tokens.iter().filter(|t| !table.contains(t)) {
        let row: Vec<f64> = (0..dim).map(|_| rng.random_range(-a..a)).collect();
        out.push(tok, &row).expect("dim matches");
    }
    out
}

struct Prepared<'a> {
    res: &'a GridResources<'a>,
    translated: Vec<DialogueSession>,
    source_examples: Vec<CandidateExample>,
    source_delex: Vec<CandidateExample>,
    target_dev: EvalSet,
    target_test: EvalSet,
    source_dev: Option<EvalSet>,
}

fn seeded(hyper: &Hyperparams, seed: u64, label: &str) -> Hyperparams {
    Hyperparams { seed: derive_seed(seed, label), ..hyper.clone() }
}

fn train_source_model(
    p: &Prepared<'_>,
    hyper: &Hyperparams,
    mode: EmbeddingMode,
    seed: u64,
) -> Result<CarryoverModel, HarnessError> {
    let table = p.res.table(mode).ok_or_else(|| HarnessError::Input(format!("no {mode} embedding table")))?;
    let dev = p.source_dev.as_ref().ok_or_else(|| HarnessError::Input("no source dev data".into()))?;
    let hyper = seeded(hyper, seed, "source-train");
    let model = init_model(&hyper, table, example_tokens(&p.source_examples), derive_seed(seed, "source-init"))?;
    let outcome = train(model, &p.source_examples, dev)?;
    log::info!("source model ({mode}, seed {seed}): best epoch {}", outcome.best_epoch);
    Ok(outcome.model)
}

fn run_cell_seed(
    p: &Prepared<'_>,
    hyper: &Hyperparams,
    cfg: &GridConfig,
    spec: &CellSpec,
    seed: u64,
    source_model: Option<&CarryoverModel>,
) -> Result<SeedResult, HarnessError> {
    let table = p.res.table(spec.embedding).ok_or_else(|| HarnessError::Input(format!("no {} embedding table", spec.embedding)))?;
    let picked = subsample(&p.translated, spec.fraction, derive_seed(seed, &format!("subsample/{}", spec.fraction)))?;
    let mut train_set = examples_for_sessions(&picked, hyper.window, p.res.schema_map)?;
    if cfg.joint_training {
        train_set.extend(p.source_examples.iter().cloned());
    }
    if spec.delex {
        train_set.extend(p.source_delex.iter().cloned());
    }
    let hyper = seeded(hyper, seed, "train");
    let tokens = example_tokens(&train_set);
    let model = match (spec.source_init, source_model) {
        (true, Some(src)) => {
            let mut m = transfer_init(src, &extend_table(table, &tokens, derive_seed(seed, "init")))?;
            m.hyper = hyper.clone();
            m
        }
        (true, None) => return Err(HarnessError::Input("source model unavailable".into())),
        (false, _) => init_model(&hyper, table, tokens, derive_seed(seed, "init"))?,
    };
    let outcome = train(model, &train_set, &p.target_dev)?;
    let metrics = evaluate(&outcome.model, &p.target_test, hyper.threshold)?;
    log::info!(
        "cell fraction {} delex {} init {} {} seed {seed}: F1 {:.2} (best epoch {})",
        spec.fraction,
        spec.delex,
        spec.source_init,
        spec.embedding,
        100.0 * metrics.f1,
        outcome.best_epoch
    );
    Ok(SeedResult { seed, metrics, best_epoch: outcome.best_epoch })
}

/// Trains and evaluates every cell of `config` under every seed, on up to
/// `jobs` threads. Target training data is `translator` applied to the source
/// training sessions, subsampled per cell. A cell whose resources are
/// missing or whose training fails is reported as failed; the rest still run.
pub fn run_experiment_grid(
    config: &GridConfig,
    res: &GridResources<'_>,
    jobs: usize,
) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    let (source_lang, target_lang) = match (res.source_train.first(), res.target_test.first()) {
        (Some(s), Some(t)) => (s.language.clone(), t.language.clone()),
        _ => return Err(HarnessError::Input("source training and target test data must be non-empty".into())),
    };
    let hyper = &config.hyper;
    let window = hyper.window;
    let translated = translate_sessions(res.source_train, res.translator, &target_lang)?;
    let source_examples = examples_for_sessions(res.source_train, window, res.schema_map)?;
    let source_delex =
        if config.delex.contains(&true) { delexicalize_all(&source_examples) } else { Vec::new() };
    let needs_source = config.source_init.contains(&true);
    let prepared = Prepared {
        res,
        translated,
        source_examples,
        source_delex,
        target_dev: EvalSet::new(res.target_dev, window, res.schema_map)?,
        target_test: EvalSet::new(res.target_test, window, res.schema_map)?,
        source_dev: if needs_source && !res.source_dev.is_empty() {
            Some(EvalSet::new(res.source_dev, window, res.schema_map)?)
        } else {
            None
        },
    };

    let cells = config.cells();
    let mut source_keys: Vec<(EmbeddingMode, u64)> = Vec::new();
    if needs_source {
        for &mode in &config.embeddings {
            for &seed in &config.seeds {
                source_keys.push((mode, seed));
            }
        }
    }
    let source_models: Vec<Result<CarryoverModel, String>> = run_pool(jobs, source_keys.len(), |i| {
        let (mode, seed) = source_keys[i];
        train_source_model(&prepared, hyper, mode, seed).map_err(|e| e.to_string())
    });
    let source_for = |mode: EmbeddingMode, seed: u64| -> Result<Option<&CarryoverModel>, String> {
        match source_keys.iter().position(|&k| k == (mode, seed)) {
            Some(i) => source_models[i].as_ref().map(Some).map_err(|e| format!("source model: {e}")),
            None => Ok(None),
        }
    };

    let runs: Vec<(usize, u64)> =
        (0..cells.len()).flat_map(|c| config.seeds.iter().map(move |&s| (c, s))).collect();
    let outcomes: Vec<Result<SeedResult, String>> = run_pool(jobs, runs.len(), |i| {
        let (c, seed) = runs[i];
        let spec = &cells[c];
        let source = if spec.source_init { source_for(spec.embedding, seed)? } else { None };
        run_cell_seed(&prepared, hyper, config, spec, seed, source).map_err(|e| e.to_string())
    });

    let mut results: Vec<CellResult> =
        cells.iter().map(|&spec| CellResult { spec, runs: Vec::new(), mean: None, error: None }).collect();
    for ((c, _), outcome) in runs.iter().zip(outcomes) {
        match outcome {
            Ok(r) => results[*c].runs.push(r),
            Err(e) => {
                log::warn!("cell {c} failed: {e}");
                results[*c].error.get_or_insert(e);
            }
        }
    }
    for cell in &mut results {
        if cell.error.is_none() {
            cell.mean = Some(Metrics::pooled(cell.runs.iter().map(|r| &r.metrics)));
        }
    }

    let mut corpora = BTreeMap::new();
    corpora.insert("source_train".to_string(), CorpusId::of(res.source_train));
    corpora.insert("source_dev".to_string(), CorpusId::of(res.source_dev));
    corpora.insert("target_train_translated".to_string(), CorpusId::of(&prepared.translated));
    corpora.insert("target_dev".to_string(), CorpusId::of(res.target_dev));
    corpora.insert("target_test".to_string(), CorpusId::of(res.target_test));
    Ok(ExperimentReport {
        config: config.clone(),
        provenance: Provenance { source_language: source_lang, target_language: target_lang, corpora },
        cells: results,
    })
}
