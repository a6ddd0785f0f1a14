use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::process::{Command, Stdio};

use super::TranslationError;
use crate::corpus::tokenize;

/// Deterministic token-sequence translation. Implementations must be safe to
/// call from several threads.
pub trait Translator: Send + Sync {
    fn translate(&self, tokens: &[String], source: &str, target: &str) -> Result<Vec<String>, TranslationError>;

    fn translate_batch(
        &self,
        sentences: &[Vec<String>],
        source: &str,
        target: &str,
    ) -> Result<Vec<Vec<String>>, TranslationError> {
        sentences.iter().map(|s| self.translate(s, source, target)).collect()
    }
}

pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn translate(&self, tokens: &[String], _: &str, _: &str) -> Result<Vec<String>, TranslationError> {
        Ok(tokens.to_vec())
    }
}

/// Phrase-table lookup, longest match first; unknown tokens pass through.
#[derive(Debug, Clone, Default)]
pub struct PhraseTableTranslator {
    /// Language pair the table covers; `None` accepts any pair.
    pub languages: Option<(String, String)>,
    table: HashMap<Vec<String>, Vec<String>>,
    max_phrase: usize,
}

impl PhraseTableTranslator {
    /// Builds from (source phrase, target phrase) pairs. The first entry for a
    /// source phrase wins.
    pub fn new<I, A, B>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let mut t = PhraseTableTranslator::default();
        for (a, b) in pairs {
            t.insert(tokenize(a.as_ref()), tokenize(b.as_ref()));
        }
        t
    }

    pub fn with_languages(mut self, source: &str, target: &str) -> Self {
        self.languages = Some((source.to_string(), target.to_string()));
        self
    }

    fn insert(&mut self, src: Vec<String>, tgt: Vec<String>) -> bool {
        if src.is_empty() || self.table.contains_key(&src) {
            return false;
        }
        self.max_phrase = self.max_phrase.max(src.len());
        self.table.insert(src, tgt);
        true
    }

    /// Reads `source phrase<TAB>target phrase` lines; blank lines are skipped.
    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self, TranslationError> {
        let mut t = PhraseTableTranslator::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let Some((a, b)) = line.split_once('\t') else {
                return Err(TranslationError::PhraseTable { line: i + 1, message: "missing tab".into() });
            };
            let src = tokenize(a);
            if src.is_empty() {
                return Err(TranslationError::PhraseTable { line: i + 1, message: "empty source phrase".into() });
            }
            if !t.insert(src, tokenize(b)) {
                log::warn!("phrase table line {}: duplicate source phrase {a:?} ignored", i + 1);
            }
        }
        Ok(t)
    }

    pub fn to_tsv(&self) -> String {
        let mut rows: Vec<_> = self.table.iter().map(|(a, b)| format!("{}\t{}\n", a.join(" "), b.join(" "))).collect();
        rows.sort();
        rows.concat()
    }

    /// The reverse table. When several sources share a target phrase, the
    /// lexicographically smallest source wins.
    pub fn inverse(&self) -> Self {
        let mut entries: Vec<_> = self.table.iter().collect();
        entries.sort();
        let mut t = PhraseTableTranslator {
            languages: self.languages.as_ref().map(|(a, b)| (b.clone(), a.clone())),
            ..Default::default()
        };
        for (a, b) in entries {
            t.insert(b.clone(), a.clone());
        }
        t
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl Translator for PhraseTableTranslator {
    fn translate(&self, tokens: &[String], source: &str, target: &str) -> Result<Vec<String>, TranslationError> {
        if let Some((s, t)) = &self.languages {
            if s != source || t != target {
                return Err(TranslationError::UnsupportedPair(source.to_string(), target.to_string()));
            }
        }
        let mut out = Vec::with_capacity(tokens.len());
        let mut i = 0;
        while i < tokens.len() {
            let longest = self.max_phrase.min(tokens.len() - i);
            let hit = (1..=longest).rev().find_map(|len| self.table.get(&tokens[i..i + len]).map(|t| (len, t)));
            match hit {
                Some((len, t)) => {
                    out.extend(t.iter().cloned());
                    i += len;
                }
                None => {
                    out.push(tokens[i].clone());
                    i += 1;
                }
            }
        }
        Ok(out)
    }
}

/// Pipes sentences through `sh -c <command>`, one per line, expecting the
/// same number of lines back in order. `SRC_LANG` and `TGT_LANG` are set in
/// the child's environment.
#[derive(Debug, Clone)]
pub struct ExternalCommandTranslator {
    pub command: String,
}

impl Translator for ExternalCommandTranslator {
    fn translate(&self, tokens: &[String], source: &str, target: &str) -> Result<Vec<String>, TranslationError> {
        let mut out = self.translate_batch(&[tokens.to_vec()], source, target)?;
        Ok(out.pop().unwrap_or_default())
    }

    fn translate_batch(
        &self,
        sentences: &[Vec<String>],
        source: &str,
        target: &str,
    ) -> Result<Vec<Vec<String>>, TranslationError> {
        let fail = |m: String| TranslationError::External(format!("{}: {m}", self.command));
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .env("SRC_LANG", source)
            .env("TGT_LANG", target)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| fail(e.to_string()))?;
        let mut input = String::new();
        for s in sentences {
            input.push_str(&s.join(" "));
            input.push('\n');
        }
        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = std::thread::spawn(move || stdin.write_all(input.as_bytes()));
        let output = child.wait_with_output().map_err(|e| fail(e.to_string()))?;
        writer
            .join()
            .map_err(|_| fail("stdin writer panicked".into()))?
            .or_else(|e| if e.kind() == std::io::ErrorKind::BrokenPipe { Ok(()) } else { Err(e) })
            .map_err(|e| fail(e.to_string()))?;
        if !output.status.success() {
            return Err(fail(format!("exited with {}", output.status)));
        }
        let text = String::from_utf8(output.stdout).map_err(|e| fail(e.to_string()))?;
        let lines: Vec<Vec<String>> = text.lines().map(tokenize).collect();
        if lines.len() != sentences.len() {
            return Err(fail(format!("sent {} lines, received {}", sentences.len(), lines.len())));
        }
        Ok(lines)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    fn lexicon() -> PhraseTableTranslator {
        PhraseTableTranslator::new([
            ("find a", "finde ein"),
            ("museum", "museum"),
            ("in", "in"),
            ("san francisco", "san francisco"),
            ("find", "suche"),
            ("a", "ein"),
        ])
    }

    #[test]
    fn longest_match_wins() {
        let out = lexicon().translate(&toks("find a museum in san francisco"), "en", "de").unwrap();
        assert_eq!(out.join(" "), "finde ein museum in san francisco");
        let out = lexicon().translate(&toks("find the zoo"), "en", "de").unwrap();
        assert_eq!(out.join(" "), "suche the zoo");
    }

    #[test]
    fn tsv_round_trip_and_errors() {
        let t = PhraseTableTranslator::from_tsv("find a\tfinde ein\nmuseum\tmuseum\n\nfind a\tx\n".as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        let back = PhraseTableTranslator::from_tsv(t.to_tsv().as_bytes()).unwrap();
        assert_eq!(back.to_tsv(), t.to_tsv());
        assert!(matches!(
            PhraseTableTranslator::from_tsv("ok\tok\nbroken line\n".as_bytes()),
            Err(TranslationError::PhraseTable { line: 2, .. })
        ));
    }

    #[test]
    fn language_pair_is_enforced() {
        let t = lexicon().with_languages("en_US", "de_DE");
        assert!(t.translate(&toks("find"), "en_US", "de_DE").is_ok());
        assert!(matches!(t.translate(&toks("find"), "de_DE", "en_US"), Err(TranslationError::UnsupportedPair(..))));
        assert!(t.inverse().translate(&toks("suche"), "de_DE", "en_US").is_ok());
    }

    #[test]
    fn external_command_pipes_lines() {
        let t = ExternalCommandTranslator { command: "tr a-z A-Z".into() };
        let out = t.translate_batch(&[toks("find a museum"), toks("call them")], "en", "de").unwrap();
        assert_eq!(out, vec![toks("find a museum"), toks("call them")]);
        let env = ExternalCommandTranslator { command: "while read l; do echo \"$TGT_LANG\"; done".into() };
        assert_eq!(env.translate(&toks("x"), "en", "de_de").unwrap(), toks("de_de"));
        let bad = ExternalCommandTranslator { command: "exit 3".into() };
        assert!(bad.translate(&toks("x"), "en", "de").is_err());
        let short = ExternalCommandTranslator { command: "head -n 1".into() };
        assert!(short.translate_batch(&[toks("a"), toks("b")], "en", "de").is_err());
    }
}
