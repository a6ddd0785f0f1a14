use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use slot_carryover::model::Hyperparams;

pub fn parse_fraction(s: &str) -> Result<f64, String> {
    let f: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if f > 0.0 && f <= 1.0 {
        Ok(f)
    } else {
        Err(format!("fraction {s} must lie in (0, 1]"))
    }
}

pub fn parse_switch(s: &str) -> Result<bool, String> {
    match s {
        "yes" | "on" | "true" => Ok(true),
        "no" | "off" | "false" => Ok(false),
        _ => Err(format!("{s:?} is not one of yes/no")),
    }
}

/// Hyperparameter overrides; anything left out keeps its default (or the
/// value stored in an initial checkpoint).
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct HyperArgs {
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    pub encoder_hidden: Option<usize>,
    #[arg(long)]
    pub decoder_hidden: Option<usize>,
    /// Context window in turn pairs.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Weight of the positive class in the loss (default: #negatives / #positives).
    #[arg(long)]
    pub positive_weight: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

impl HyperArgs {
    pub fn resolve(&self, base: &Hyperparams, seed: u64) -> Hyperparams {
        let mut h = base.clone();
        macro_rules! set {
            ($($field:ident => $target:ident),*) => {$(
                if let Some(v) = self.$field {
                    h.$target = v;
                }
            )*};
        }
        set!(embedding_dim => embedding_dim, encoder_hidden => encoder_hidden, decoder_hidden => decoder_hidden,
             window => window, epochs => max_epochs, batch_size => batch_size, learning_rate => learning_rate,
             threshold => threshold);
        if self.positive_weight.is_some() {
            h.positive_class_weight = self.positive_weight;
        }
        h.seed = seed;
        h
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TranslatorArgs {
    /// Phrase table, one `source<TAB>target` pair per line.
    #[arg(long, conflicts_with = "command", required_unless_present = "command")]
    pub phrase_table: Option<PathBuf>,
    /// Shell command reading sentences on stdin and writing translations on
    /// stdout, one per line; SRC_LANG and TGT_LANG are set.
    #[arg(long)]
    pub command: Option<String>,
}
