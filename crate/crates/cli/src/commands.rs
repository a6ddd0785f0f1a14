use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use slot_carryover::corpus::{
    examples_for_sessions, read_sessions, subsample, tokenize, write_sessions, DialogueSession, GeneratorConfig, SchemaMap,
};
use slot_carryover::delex::{augment_with_delex, delexicalize_session};
use slot_carryover::embeddings::{load_word_vectors, procrustes_align, EmbeddingTable};
use slot_carryover::harness::{
    embedding_spaces, evaluate, evaluate_baseline, extend_table, run_experiment_grid, train, BenchmarkSettings,
    EvalSet, GoldScorer, GridConfig, GridResources, Metrics, Scorer, SyntheticBenchmark,
};
use slot_carryover::model::{
    example_tokens, init_model, pretrain_encoder, read_checkpoint, transfer_init, write_checkpoint, Hyperparams,
};
use slot_carryover::seed::derive_seed;
use slot_carryover::translation::{
    back_translation_bleu, corpus_bleu, translate_sessions, ExternalCommandTranslator, PhraseTableTranslator,
    Translator,
};

use crate::args::TranslatorArgs;
use crate::Command;

/// Writes through a temporary file in the destination directory.
fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_corpus(path: &Path) -> Result<Vec<DialogueSession>> {
    read_sessions(path).with_context(|| format!("reading {}", path.display()))
}

fn read_vectors(path: &Path) -> Result<EmbeddingTable> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let language = path.file_stem().and_then(|s| s.to_str()).unwrap_or("vectors");
    load_word_vectors(BufReader::new(file), language).with_context(|| format!("reading {}", path.display()))
}

fn write_vectors(table: &EmbeddingTable, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    table.write_to(&mut buf)?;
    write_output(path, &buf)
}

fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match line.split_once('\t') {
            Some((a, b)) => out.push((a.to_string(), b.to_string())),
            None => bail!("{} line {}: expected two tab-separated fields", path.display(), i + 1),
        }
    }
    Ok(out)
}

fn pairs_tsv(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(a, b)| format!("{a}\t{b}\n")).collect()
}

fn read_phrase_table(path: &Path) -> Result<PhraseTableTranslator> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    PhraseTableTranslator::from_tsv(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn translator(args: &TranslatorArgs) -> Result<Box<dyn Translator>> {
    match (&args.phrase_table, &args.command) {
        (Some(p), _) => Ok(Box::new(read_phrase_table(p)?)),
        (None, Some(c)) => Ok(Box::new(ExternalCommandTranslator { command: c.clone() })),
        (None, None) => bail!("give --phrase-table or --command"),
    }
}

fn schema_map(generator_config: &Option<PathBuf>) -> Result<SchemaMap> {
    Ok(match generator_config {
        Some(p) => GeneratorConfig::from_json(&std::fs::read_to_string(p)?)?.schema_map,
        None => GeneratorConfig::default().schema_map,
    })
}

fn metrics_line(m: &Metrics) -> String {
    format!(
        "precision {:.2}\trecall {:.2}\tf1 {:.2}\t(tp {}, fp {}, fn {})",
        100.0 * m.precision,
        100.0 * m.recall,
        100.0 * m.f1,
        m.true_positives,
        m.false_positives,
        m.false_negatives
    )
}

fn echo_hyper(h: &Hyperparams) {
    eprintln!("hyperparameters: {}", serde_json::to_string(h).expect("hyperparameters serialize"));
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Generate {
            out_dir,
            config,
            train,
            dev,
            test,
            source,
            target,
            embedding_dim,
            embedding_noise,
            value_drop_rate,
            seed,
        } => {
            let cfg = match config {
                Some(p) => GeneratorConfig::from_json(&std::fs::read_to_string(&p)?)?,
                None => GeneratorConfig::default(),
            };
            let settings =
                BenchmarkSettings { sizes: (train, dev, test), embedding_dim, embedding_noise, value_drop_rate };
            let bench = SyntheticBenchmark::build(&cfg, &settings, &source, &target, seed)?;
            std::fs::create_dir_all(&out_dir)?;
            for (split, by_lang) in [("train", &bench.corpus.train), ("dev", &bench.corpus.dev), ("test", &bench.corpus.test)] {
                for (lang, sessions) in by_lang {
                    write_sessions(sessions, &out_dir.join(format!("{split}.{lang}.jsonl")))?;
                }
            }
            write_output(&out_dir.join(format!("phrases.{source}-{target}.tsv")), bench.translator.to_tsv().as_bytes())?;
            write_vectors(&bench.source_vectors, &out_dir.join(format!("vectors.{source}.txt")))?;
            write_vectors(&bench.target_vectors, &out_dir.join(format!("vectors.{target}.txt")))?;
            let inverse: Vec<(String, String)> = bench.dictionary.iter().map(|(a, b)| (b.clone(), a.clone())).collect();
            write_output(&out_dir.join(format!("dictionary.{target}-{source}.tsv")), pairs_tsv(&inverse).as_bytes())?;
            println!("wrote corpus, phrase table, vectors and dictionary to {}", out_dir.display());
        }
        Command::Delex { input, output } => {
            let sessions = read_corpus(&input)?;
            let out = sessions
                .iter()
                .map(|s| delexicalize_session(s).with_context(|| format!("session {}", s.id)))
                .collect::<Result<Vec<_>>>()?;
            write_sessions(&out, &output)?;
            println!("delexicalized {} sessions", out.len());
        }
        Command::AlignEmbeddings { from_vectors, onto_vectors, dictionary, output, report } => {
            let from = read_vectors(&from_vectors)?;
            let onto = read_vectors(&onto_vectors)?;
            let dict = read_pairs(&dictionary)?;
            let result = procrustes_align(&from, &onto, &dict)?;
            write_vectors(&result.apply(&from), &output)?;
            let summary = serde_json::json!({
                "pairs_used": result.pairs_used,
                "dictionary_accuracy": result.dictionary_accuracy,
                "residual": result.residual,
                "orthogonality_error": result.orthogonality_error(),
                "ill_conditioned": result.ill_conditioned,
            });
            if let Some(p) = report {
                write_output(&p, serde_json::to_string_pretty(&summary)?.as_bytes())?;
            }
            println!("{summary}");
        }
        Command::Translate { input, output, target_lang, translator: targs } => {
            let sessions = read_corpus(&input)?;
            let t = translator(&targs)?;
            let out = translate_sessions(&sessions, t.as_ref(), &target_lang)?;
            write_sessions(&out, &output)?;
            println!("translated {} sessions into {target_lang}", out.len());
        }
        Command::Bleu { hyp, reference, sessions, forward, backward, pivot, smooth } => {
            let report = match (hyp, reference, sessions) {
                (Some(h), Some(r), _) => {
                    let lines = |p: &Path| -> Result<Vec<Vec<String>>> {
                        Ok(std::fs::read_to_string(p)
                            .with_context(|| format!("reading {}", p.display()))?
                            .lines()
                            .map(tokenize)
                            .collect())
                    };
                    let (hs, rs) = (lines(&h)?, lines(&r)?);
                    ensure!(hs.len() == rs.len(), "{} hypothesis lines vs {} reference lines", hs.len(), rs.len());
                    corpus_bleu(&hs, &rs, 4, smooth)?
                }
                (_, _, Some(s)) => {
                    let sessions = read_corpus(&s)?;
                    let fwd = read_phrase_table(forward.as_deref().context("--forward is required")?)?;
                    let bwd = match backward {
                        Some(b) => read_phrase_table(&b)?,
                        None => fwd.inverse(),
                    };
                    back_translation_bleu(&sessions, &fwd, &bwd, pivot.as_deref().context("--pivot is required")?, smooth)?
                }
                _ => bail!("give --hyp and --ref, or --sessions"),
            };
            eprintln!(
                "precisions {:?}, brevity penalty {:.4}, lengths {}/{}",
                report.per_n_precision, report.brevity_penalty, report.hyp_length, report.ref_length
            );
            println!("{:.4}", report.score);
        }
        Command::Pretrain { train: paths, vectors, generator_config, pretrain_epochs, output, hyper, seed } => {
            let mut sessions = Vec::new();
            for p in &paths {
                sessions.extend(read_corpus(p)?);
            }
            let table = match &vectors {
                Some(p) => Some(read_vectors(p)?),
                None => None,
            };
            let mut h = hyper.resolve(&Hyperparams::default(), seed);
            if let Some(t) = &table {
                h.embedding_dim = t.dim();
            }
            echo_hyper(&h);
            let table = table.unwrap_or_else(|| EmbeddingTable::new("none", h.embedding_dim));
            let map = schema_map(&generator_config)?;
            let examples = examples_for_sessions(&sessions, h.window, Some(&map))?;
            let mut model = init_model(&h, &table, example_tokens(&examples), derive_seed(seed, "init"))?;
            let report = pretrain_encoder(&model, &sessions, pretrain_epochs, seed)?;
            model.load_forward_cells(&report.cell)?;
            write_checkpoint(&model, &output)?;
            for (i, p) in report.perplexities.iter().enumerate() {
                println!("epoch {i}\tperplexity {p:.3}");
            }
        }
        Command::Train { train: paths, dev, vectors, init, fraction, generator_config, delex, output, history, hyper, seed } => {
            let mut sessions = Vec::new();
            for p in &paths {
                sessions.extend(read_corpus(p)?);
            }
            if let Some(f) = fraction {
                sessions = subsample(&sessions, f, derive_seed(seed, "subsample"))?;
            }
            let dev_sessions = read_corpus(&dev)?;
            let table = match &vectors {
                Some(p) => Some(read_vectors(p)?),
                None => None,
            };
            let start = match &init {
                Some(p) => Some(read_checkpoint(p).with_context(|| format!("reading {}", p.display()))?),
                None => None,
            };
            let mut base = start.as_ref().map(|m| m.hyper.clone()).unwrap_or_default();
            if let (None, Some(t)) = (&start, &table) {
                base.embedding_dim = t.dim();
            }
            let h = hyper.resolve(&base, seed);
            if let Some(m) = &start {
                ensure!(
                    (h.embedding_dim, h.encoder_hidden, h.decoder_hidden, h.window)
                        == (m.hyper.embedding_dim, m.hyper.encoder_hidden, m.hyper.decoder_hidden, m.hyper.window),
                    "dimensions and window are fixed by the initial checkpoint"
                );
            }
            echo_hyper(&h);
            let map = schema_map(&generator_config)?;
            let mut examples = examples_for_sessions(&sessions, h.window, Some(&map))?;
            if delex {
                examples = augment_with_delex(&examples);
            }
            let dev_set = EvalSet::new(&dev_sessions, h.window, Some(&map))?;
            let table = table.unwrap_or_else(|| EmbeddingTable::new("none", h.embedding_dim));
            let tokens = example_tokens(&examples);
            let model = match start {
                Some(m) => {
                    let mut model = transfer_init(&m, &extend_table(&table, &tokens, derive_seed(seed, "init")))?;
                    model.hyper = h.clone();
                    model
                }
                None => init_model(&h, &table, tokens, derive_seed(seed, "init"))?,
            };
            let outcome = train(model, &examples, &dev_set)?;
            if let Some(p) = output {
                write_checkpoint(&outcome.model, &p)?;
            }
            if let Some(p) = history {
                write_output(&p, serde_json::to_string_pretty(&outcome.history)?.as_bytes())?;
            }
            let best = &outcome.history[outcome.best_epoch - 1];
            println!("best epoch {}\tdev {}", outcome.best_epoch, metrics_line(&best.dev));
        }
        Command::Evaluate { test, model, gold_oracle, threshold, generator_config, window, report } => {
            let sessions = read_corpus(&test)?;
            let loaded = match (&model, gold_oracle) {
                (Some(p), false) => Some(read_checkpoint(p).with_context(|| format!("reading {}", p.display()))?),
                _ => None,
            };
            let window = loaded.as_ref().map_or(window, |m| m.hyper.window);
            let tau = threshold.or(loaded.as_ref().map(|m| m.hyper.threshold)).unwrap_or(0.5);
            ensure!(tau > 0.0 && tau < 1.0, "threshold must lie in (0, 1)");
            let map = schema_map(&generator_config)?;
            let set = EvalSet::new(&sessions, window, Some(&map))?;
            let scorer: &dyn Scorer = match &loaded {
                Some(m) => m,
                None => &GoldScorer,
            };
            let m = evaluate(scorer, &set, tau)?;
            if let Some(p) = report {
                write_output(&p, serde_json::to_string_pretty(&m)?.as_bytes())?;
            }
            println!("{}", metrics_line(&m));
        }
        Command::Baseline { test, report } => {
            let m = evaluate_baseline(&read_corpus(&test)?);
            if let Some(p) = report {
                write_output(&p, serde_json::to_string_pretty(&m)?.as_bytes())?;
            }
            println!("{}", metrics_line(&m));
        }
        Command::Grid {
            source_train,
            source_dev,
            target_dev,
            target_test,
            translator: targs,
            source_vectors,
            target_vectors,
            dictionary,
            fractions,
            delex,
            source_init,
            embeddings,
            generator_config,
            joint,
            seeds,
            jobs,
            out_dir,
            hyper,
        } => {
            let src_train = read_corpus(&source_train)?;
            let src_dev = match &source_dev {
                Some(p) => read_corpus(p)?,
                None => Vec::new(),
            };
            let (tgt_dev, tgt_test) = (read_corpus(&target_dev)?, read_corpus(&target_test)?);
            let t = translator(&targs)?;
            let load = |p: &Option<PathBuf>| -> Result<Option<EmbeddingTable>> { p.as_deref().map(read_vectors).transpose() };
            let (src_vec, tgt_vec) = (load(&source_vectors)?, load(&target_vectors)?);
            let (mono, multi) = match (&src_vec, &tgt_vec) {
                (Some(s), Some(tv)) => match &dictionary {
                    Some(d) => {
                        let (mono, multi, alignment) = embedding_spaces(s, tv, &read_pairs(d)?)?;
                        log::info!(
                            "alignment: {} pairs, dictionary accuracy {:.3}",
                            alignment.pairs_used,
                            alignment.dictionary_accuracy
                        );
                        (Some(mono), Some(multi))
                    }
                    None => (Some(tv.merged_with(s)?), None),
                },
                _ => (None, None),
            };
            let map = schema_map(&generator_config)?;
            let mut base = Hyperparams::default();
            if let Some(s) = &src_vec {
                base.embedding_dim = s.dim();
            }
            let config = GridConfig {
                fractions,
                delex,
                source_init,
                embeddings,
                joint_training: joint,
                seeds,
                hyper: hyper.resolve(&base, 0),
            };
            echo_hyper(&config.hyper);
            let res = GridResources {
                source_train: &src_train,
                source_dev: &src_dev,
                target_dev: &tgt_dev,
                target_test: &tgt_test,
                translator: t.as_ref(),
                monolingual: mono.as_ref(),
                multilingual: multi.as_ref(),
                schema_map: Some(&map),
            };
            let report = run_experiment_grid(&config, &res, jobs)?;
            std::fs::create_dir_all(&out_dir)?;
            write_output(&out_dir.join("report.tsv"), report.to_tsv().as_bytes())?;
            write_output(&out_dir.join("report.txt"), report.to_table().as_bytes())?;
            write_output(&out_dir.join("report.json"), report.to_json().as_bytes())?;
            print!("{}", report.to_table());
            let failed = report.cells.iter().filter(|c| c.error.is_some()).count();
            if failed > 0 {
                log::warn!("{failed} of {} cells failed; see report.json", report.cells.len());
            }
        }
    }
    Ok(())
}
