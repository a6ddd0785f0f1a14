//! `carryover`: batch front end for corpus generation, translation
//! projection, embedding alignment, training, evaluation and the transfer
//! experiment grid.

mod args;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use args::{parse_fraction, parse_switch, HyperArgs, TranslatorArgs};

#[derive(Debug, Parser)]
#[command(name = "carryover", version, about = "Cross-lingual contextual slot carryover toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
enum Command {
    /// Generate a synthetic parallel corpus with a phrase table, word vectors
    /// and a bilingual dictionary.
    Generate {
        #[arg(long)]
        out_dir: PathBuf,
        /// Generator configuration (JSON); the built-in one by default.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        train: usize,
        #[arg(long, default_value_t = 500)]
        dev: usize,
        #[arg(long, default_value_t = 500)]
        test: usize,
        #[arg(long, default_value = "en_US")]
        source: String,
        #[arg(long, default_value = "de_DE")]
        target: String,
        #[arg(long, default_value_t = 64)]
        embedding_dim: usize,
        #[arg(long, default_value_t = 0.05)]
        embedding_noise: f64,
        /// Share of slot values left out of the phrase table.
        #[arg(long, default_value_t = 0.1)]
        value_drop_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Delexicalize every turn of a corpus.
    Delex {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Rotate one vector space onto another with a bilingual dictionary.
    AlignEmbeddings {
        /// Vectors to be mapped.
        #[arg(long)]
        from_vectors: PathBuf,
        /// Vectors defining the shared space.
        #[arg(long)]
        onto_vectors: PathBuf,
        /// `from-word<TAB>onto-word` pairs.
        #[arg(long)]
        dictionary: PathBuf,
        /// Mapped vectors, length normalized.
        #[arg(long)]
        output: PathBuf,
        /// Alignment diagnostics as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Project an annotated corpus into another language.
    Translate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        target_lang: String,
        #[command(flatten)]
        translator: TranslatorArgs,
    },
    /// Corpus BLEU of a hypothesis file against a reference file, or the
    /// back-translation BLEU of a corpus through a phrase table.
    Bleu {
        #[arg(long, requires = "reference", conflicts_with = "sessions")]
        hyp: Option<PathBuf>,
        #[arg(long = "ref", id = "reference")]
        reference: Option<PathBuf>,
        #[arg(long, requires_all = ["forward", "pivot"], required_unless_present = "hyp")]
        sessions: Option<PathBuf>,
        /// Phrase table into the pivot language.
        #[arg(long)]
        forward: Option<PathBuf>,
        /// Phrase table back from the pivot (default: the forward table inverted).
        #[arg(long)]
        backward: Option<PathBuf>,
        #[arg(long)]
        pivot: Option<String>,
        /// Add-one smoothing of the 2- to 4-gram precisions.
        #[arg(long)]
        smooth: bool,
    },
    /// Pretrain the forward encoder cells as a language model and write an
    /// initial checkpoint.
    Pretrain {
        #[arg(long, required = true)]
        train: Vec<PathBuf>,
        #[arg(long)]
        vectors: Option<PathBuf>,
        /// Generator configuration whose schema map rewrites candidate keys
        /// across domains (the built-in one by default).
        #[arg(long)]
        generator_config: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        pretrain_epochs: usize,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        hyper: HyperArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a carryover model, keeping the epoch with the best dev F1.
    Train {
        /// Training corpora; several files are pooled.
        #[arg(long, required = true)]
        train: Vec<PathBuf>,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        vectors: Option<PathBuf>,
        /// Checkpoint to start from (its weights and, unless overridden, its
        /// hyperparameters).
        #[arg(long)]
        init: Option<PathBuf>,
        /// Share of the training sessions to keep.
        #[arg(long, value_parser = parse_fraction)]
        fraction: Option<f64>,
        /// Generator configuration whose schema map rewrites candidate keys
        /// across domains (the built-in one by default).
        #[arg(long)]
        generator_config: Option<PathBuf>,
        /// Add delexicalized copies of the training examples.
        #[arg(long)]
        delex: bool,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Per-epoch loss and dev metrics as JSON.
        #[arg(long)]
        history: Option<PathBuf>,
        #[command(flatten)]
        hyper: HyperArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Precision, recall and F1 of a model on a test corpus.
    Evaluate {
        #[arg(long)]
        test: PathBuf,
        #[arg(long, required_unless_present = "gold_oracle")]
        model: Option<PathBuf>,
        /// Score with the gold labels instead of a model.
        #[arg(long, conflicts_with = "model")]
        gold_oracle: bool,
        #[arg(long)]
        threshold: Option<f64>,
        /// Generator configuration whose schema map rewrites candidate keys
        /// across domains (the built-in one by default).
        #[arg(long)]
        generator_config: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        window: usize,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Scores of the most-recent-slots baseline.
    Baseline {
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the transfer experiment grid.
    Grid {
        #[arg(long)]
        source_train: PathBuf,
        #[arg(long)]
        source_dev: Option<PathBuf>,
        #[arg(long)]
        target_dev: PathBuf,
        #[arg(long)]
        target_test: PathBuf,
        #[command(flatten)]
        translator: TranslatorArgs,
        #[arg(long)]
        source_vectors: Option<PathBuf>,
        #[arg(long)]
        target_vectors: Option<PathBuf>,
        /// `target-word<TAB>source-word` pairs for the shared space.
        #[arg(long)]
        dictionary: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', value_parser = parse_fraction, default_value = "0.01,0.25,1")]
        fractions: Vec<f64>,
        #[arg(long, value_delimiter = ',', value_parser = parse_switch, default_value = "no,yes")]
        delex: Vec<bool>,
        #[arg(long, value_delimiter = ',', value_parser = parse_switch, default_value = "no,yes")]
        source_init: Vec<bool>,
        #[arg(long, value_delimiter = ',', default_value = "multilingual")]
        embeddings: Vec<slot_carryover::harness::EmbeddingMode>,
        /// Generator configuration whose schema map rewrites candidate keys
        /// across domains (the built-in one by default).
        #[arg(long)]
        generator_config: Option<PathBuf>,
        /// Also train every cell on the source-language data.
        #[arg(long)]
        joint: bool,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Receives report.tsv, report.txt and report.json.
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        hyper: HyperArgs,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    eprintln!("config: {}", serde_json::to_string(&cli.command).expect("config serializes"));
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
