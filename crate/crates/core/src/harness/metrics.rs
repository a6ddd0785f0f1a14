use serde::{Deserialize, Serialize};

/// Corpus-level precision, recall and F1 with the counts behind them.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn prf1(tp: u64, fp: u64, fn_: u64) -> Metrics {
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    Metrics {
        precision,
        recall,
        f1: f1_score(precision, recall),
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
    }
}

impl Metrics {
    /// Metrics of the summed counts.
    pub fn pooled<'a>(items: impl IntoIterator<Item = &'a Metrics>) -> Metrics {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for m in items {
            tp += m.true_positives;
            fp += m.false_positives;
            fn_ += m.false_negatives;
        }
        prf1(tp, fp, fn_)
    }
}
