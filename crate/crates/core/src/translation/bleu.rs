use std::collections::HashMap;

use serde::Serialize;

use super::TranslationError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BleuReport {
    pub score: f64,
    pub per_n_precision: Vec<f64>,
    pub brevity_penalty: f64,
    pub hyp_length: usize,
    pub ref_length: usize,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn check_aligned(hyps: &[Vec<String>], refs: &[Vec<String>]) -> Result<(), TranslationError> {
    if hyps.len() != refs.len() {
        return Err(TranslationError::Input(format!(
            "{} hypotheses vs {} references",
            hyps.len(),
            refs.len()
        )));
    }
    Ok(())
}

/// Corpus-wide clipped n-gram matches and hypothesis n-gram total.
pub fn modified_ngram_precision(
    hyps: &[Vec<String>],
    refs: &[Vec<String>],
    n: usize,
) -> Result<(u64, u64), TranslationError> {
    check_aligned(hyps, refs)?;
    if n == 0 {
        return Err(TranslationError::Input("n-gram order must be at least 1".into()));
    }
    let (mut matched, mut total) = (0, 0);
    for (h, r) in hyps.iter().zip(refs) {
        let ref_counts = ngram_counts(r, n);
        for (gram, c) in ngram_counts(h, n) {
            matched += c.min(ref_counts.get(gram).copied().unwrap_or(0));
            total += c;
        }
    }
    Ok((matched, total))
}

/// Standard corpus BLEU. With `smooth`, orders above 1 use add-one counts.
pub fn corpus_bleu(
    hyps: &[Vec<String>],
    refs: &[Vec<String>],
    max_n: usize,
    smooth: bool,
) -> Result<BleuReport, TranslationError> {
    check_aligned(hyps, refs)?;
    if hyps.is_empty() {
        return Err(TranslationError::Input("empty corpus".into()));
    }
    let mut per_n = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let (m, t) = modified_ngram_precision(hyps, refs, n)?;
        let p = if smooth && n > 1 {
            (m + 1) as f64 / (t + 1) as f64
        } else if t == 0 {
            0.0
        } else {
            m as f64 / t as f64
        };
        per_n.push(p);
    }
    let c: usize = hyps.iter().map(Vec::len).sum();
    let r: usize = refs.iter().map(Vec::len).sum();
    let bp = if c >= r { 1.0 } else if c == 0 { 0.0 } else { (1.0 - r as f64 / c as f64).exp() };
    let score = if per_n.iter().any(|&p| p == 0.0) {
        0.0
    } else {
        bp * (per_n.iter().map(|p| p.ln()).sum::<f64>() / max_n as f64).exp()
    };
    Ok(BleuReport { score, per_n_precision: per_n, brevity_penalty: bp, hyp_length: c, ref_length: r })
}
