use std::collections::BTreeSet;

use super::HarnessError;
use crate::corpus::{DialogueSession, GeneratedCorpus, GeneratorConfig};
use crate::embeddings::{procrustes_align, synthesize_bilingual, AlignmentResult, EmbeddingTable};
use crate::model::turn_sequence;
use crate::seed::derive_seed;
use crate::translation::PhraseTableTranslator;

/// Every token a model can read for these sessions, including the intent
/// labels and key symbols that delexicalization introduces.
pub fn language_vocabulary(sessions: &[DialogueSession]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for turn in sessions.iter().flat_map(|s| &s.turns) {
        out.extend(turn_sequence(turn).map(str::to_string));
        out.insert(turn.intent.clone());
        for slot in &turn.slots {
            out.insert(slot.key.clone());
            out.extend(slot.value_tokens());
        }
    }
    out
}

/// The two embedding conditions of the transfer experiments, both keyed by
/// plain token: target rows then source rows as they are, and target rows
/// aligned onto the source space (via `dictionary`, target word → source
/// word) followed by normalized source rows.
pub fn embedding_spaces(
    source: &EmbeddingTable,
    target: &EmbeddingTable,
    dictionary: &[(String, String)],
) -> Result<(EmbeddingTable, EmbeddingTable, AlignmentResult), HarnessError> {
    let alignment = procrustes_align(target, source, dictionary)?;
    let monolingual = target.merged_with(source)?;
    let multilingual = alignment.apply(target).merged_with(&source.normalized())?;
    Ok((monolingual, multilingual, alignment))
}

/// A generated parallel corpus with everything the transfer experiments
/// need: a phrase-table translator from source to target, raw monolingual
/// vectors for both languages and a version aligned into one space.
#[derive(Debug, Clone)]
pub struct SyntheticBenchmark {
    pub source: String,
    pub target: String,
    pub corpus: GeneratedCorpus,
    pub translator: PhraseTableTranslator,
    /// Target vectors followed by source vectors, each in its own space.
    pub monolingual: EmbeddingTable,
    /// Target vectors rotated into the source space, followed by source vectors.
    pub multilingual: EmbeddingTable,
    pub alignment: AlignmentResult,
    /// Word pairs source → target the vectors were planted from.
    pub dictionary: Vec<(String, String)>,
    pub source_vectors: EmbeddingTable,
    pub target_vectors: EmbeddingTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSettings {
    pub sizes: (usize, usize, usize),
    pub embedding_dim: usize,
    pub embedding_noise: f64,
    /// Share of lexicon entries missing from the phrase table.
    pub value_drop_rate: f64,
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        BenchmarkSettings { sizes: (2000, 500, 500), embedding_dim: 64, embedding_noise: 0.05, value_drop_rate: 0.1 }
    }
}

impl SyntheticBenchmark {
    pub fn build(
        config: &GeneratorConfig,
        settings: &BenchmarkSettings,
        source: &str,
        target: &str,
        seed: u64,
    ) -> Result<Self, HarnessError> {
        for lang in [source, target] {
            if !config.languages.iter().any(|l| l == lang) {
                return Err(HarnessError::Input(format!("generator has no language {lang}")));
            }
        }
        let corpus = GeneratedCorpus::generate(config, settings.sizes, seed)?;
        let pairs = config.phrase_table(source, target, settings.value_drop_rate, derive_seed(seed, "phrase-table"));
        let translator = PhraseTableTranslator::new(pairs).with_languages(source, target);

        let vocab = |lang: &str| -> Vec<String> {
            let all: Vec<DialogueSession> = [&corpus.train, &corpus.dev, &corpus.test]
                .into_iter()
                .filter_map(|split| split.get(lang))
                .flatten()
                .cloned()
                .collect();
            language_vocabulary(&all).into_iter().collect()
        };
        let (src_vocab, tgt_vocab) = (vocab(source), vocab(target));
        let tgt_set: BTreeSet<&String> = tgt_vocab.iter().collect();
        // Symbols spelled the same in both languages (keys, intents, acts,
        // markers) are their own translations.
        let mut dictionary = config.bilingual_dictionary(source, target);
        dictionary.extend(src_vocab.iter().filter(|t| tgt_set.contains(t)).map(|t| (t.clone(), t.clone())));
        let (src, tgt, _) = synthesize_bilingual(
            source,
            &src_vocab,
            target,
            &tgt_vocab,
            &dictionary,
            settings.embedding_dim,
            settings.embedding_noise,
            derive_seed(seed, "embeddings"),
        );
        let inverse: Vec<(String, String)> = dictionary.iter().map(|(a, b)| (b.clone(), a.clone())).collect();
        let (monolingual, multilingual, alignment) = embedding_spaces(&src, &tgt, &inverse)?;
        Ok(SyntheticBenchmark {
            source: source.to_string(),
            target: target.to_string(),
            corpus,
            translator,
            monolingual,
            multilingual,
            alignment,
            dictionary,
            source_vectors: src,
            target_vectors: tgt,
        })
    }

    pub fn split(&self, which: &str, lang: &str) -> &[DialogueSession] {
        let split = match which {
            "train" => &self.corpus.train,
            "dev" => &self.corpus.dev,
            _ => &self.corpus.test,
        };
        split.get(lang).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_benchmark_is_consistent() {
        let settings = BenchmarkSettings { sizes: (20, 5, 5), embedding_dim: 16, ..BenchmarkSettings::default() };
        let b = SyntheticBenchmark::build(&GeneratorConfig::default(), &settings, "en_US", "de_DE", 3).unwrap();
        assert!(b.alignment.orthogonality_error() < 1e-6);
        assert!(b.alignment.dictionary_accuracy > 0.9, "{}", b.alignment.dictionary_accuracy);
        for lang in ["en_US", "de_DE"] {
            for tok in language_vocabulary(b.split("train", lang)) {
                assert!(b.monolingual.contains(&tok) && b.multilingual.contains(&tok), "{tok}");
            }
        }
        assert!(b.multilingual.shared_space);
    }
}
