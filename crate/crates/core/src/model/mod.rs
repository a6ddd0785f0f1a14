//! The carryover classifier: BiLSTM encoders over the context window and the
//! current turn, an additive-attention slot reader and a one-layer decoder,
//! trained with class-weighted cross-entropy and Adam.

mod adam;
mod checkpoint;
mod lstm;
mod network;
mod params;
mod pretrain;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, FORMAT_VERSION};
pub use network::{weighted_bce, EncodedGroup, EncodedSlot, GroupTrace, LOGIT_CLAMP};
pub use params::{BiLstm, LstmCell, Mat, Params};
pub use pretrain::{pretrain_encoder, PretrainReport};

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CandidateExample, Slot, Turn};
use crate::embeddings::EmbeddingTable;

pub const UNK: &str = "<unk>";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("pretraining error: {0}")]
    Pretrain(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub embedding_dim: usize,
    /// Hidden size per direction; the attention projection uses the same width.
    pub encoder_hidden: usize,
    pub decoder_hidden: usize,
    pub window: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// `None` means #negatives / #positives on the training set.
    pub positive_class_weight: Option<f64>,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            embedding_dim: 300,
            encoder_hidden: 128,
            decoder_hidden: 256,
            window: crate::corpus::DEFAULT_WINDOW,
            max_epochs: 40,
            batch_size: 32,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            positive_class_weight: None,
            threshold: 0.5,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if [self.embedding_dim, self.encoder_hidden, self.decoder_hidden, self.window, self.batch_size]
            .contains(&0)
        {
            return bad("dimensions, window and batch size must be at least 1");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie in (0, 1)");
        }
        if let Some(w) = self.positive_class_weight {
            if !(w > 0.0 && w.is_finite()) {
                return bad("positive class weight must be positive");
            }
        }
        if !(self.learning_rate > 0.0) || !(self.adam_epsilon > 0.0) {
            return bad("learning rate and epsilon must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

/// Token ↔ row mapping; row 0 is the unknown token.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut v = Vocab { tokens: Vec::new(), index: HashMap::new() };
        v.insert(UNK.to_string());
        for t in tokens {
            v.insert(t);
        }
        v
    }

    fn insert(&mut self, t: String) {
        if !self.index.contains_key(&t) {
            self.index.insert(t.clone(), self.tokens.len());
            self.tokens.push(t);
        }
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Tokens fed to an encoder for one turn: speaker marker, act, utterance.
pub fn turn_sequence(turn: &Turn) -> impl Iterator<Item = &str> {
    [turn.speaker.marker(), turn.act.as_str()].into_iter().chain(turn.tokens.iter().map(String::as_str))
}

/// Every token the model reads for these examples.
pub fn example_tokens(examples: &[CandidateExample]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut last: Option<&CandidateExample> = None;
    for ex in examples {
        if last.is_none_or(|l| !l.shares_input_with(ex)) {
            for t in ex.context.iter().chain(std::iter::once(ex.current_turn.as_ref())) {
                out.extend(turn_sequence(t).map(str::to_string));
            }
        }
        out.insert(ex.slot.key.clone());
        out.extend(ex.slot.value_tokens());
        last = Some(ex);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probability: f64,
    pub slot: Slot,
    pub distance: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarryoverModel {
    pub hyper: Hyperparams,
    pub vocab: Vocab,
    pub params: Params,
}

fn glorot_embedding_row(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    let a = (3.0 / dim as f64).sqrt();
    (0..dim).map(|_| rng.random_range(-a..a)).collect()
}

/// Builds a model whose vocabulary is the table's tokens followed by
/// `extra_tokens`. Table rows are copied; other rows and every weight matrix
/// are Glorot-uniform, biases zero.
pub fn init_model(
    hyper: &Hyperparams,
    table: &EmbeddingTable,
    extra_tokens: impl IntoIterator<Item = String>,
    seed: u64,
) -> Result<CarryoverModel, ModelError> {
    hyper.validate()?;
    if table.dim() != hyper.embedding_dim {
        return Err(ModelError::Config(format!(
            "embedding table has dim {}, hyperparameters say {}",
            table.dim(),
            hyper.embedding_dim
        )));
    }
    let vocab = Vocab::new(table.vocab().iter().cloned().chain(extra_tokens));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (e, h, hd) = (hyper.embedding_dim, hyper.encoder_hidden, hyper.decoder_hidden);
    let mut embedding = Mat::zeros(vocab.len(), e);
    for (i, tok) in vocab.tokens().iter().enumerate() {
        let row = match table.get(tok) {
            Some(v) => v.to_vec(),
            None => glorot_embedding_row(e, &mut rng),
        };
        embedding.row_mut(i).copy_from_slice(&row);
    }
    let params = Params {
        embedding,
        context_encoder: BiLstm::new(e, h, &mut rng),
        current_encoder: BiLstm::new(e, h, &mut rng),
        distance: Mat::glorot(hyper.window + 1, e, &mut rng),
        slot_w: Mat::glorot(2 * h, 3 * e, &mut rng),
        slot_b: Mat::zeros(2 * h, 1),
        att_query: Mat::glorot(h, 2 * h, &mut rng),
        att_memory: Mat::glorot(h, 2 * h, &mut rng),
        att_score: Mat::glorot(h, 1, &mut rng),
        dec_w: Mat::glorot(hd, 6 * h, &mut rng),
        dec_b: Mat::zeros(hd, 1),
        out_w: Mat::glorot(hd, 1, &mut rng),
        out_b: Mat::zeros(1, 1),
    };
    Ok(CarryoverModel { hyper: hyper.clone(), vocab, params })
}

/// Copies every non-embedding block from `source`. The vocabulary is the
/// target table's tokens followed by the source model's; rows come from the
/// target table when present, otherwise from the source model.
pub fn transfer_init(source: &CarryoverModel, target: &EmbeddingTable) -> Result<CarryoverModel, ModelError> {
    let e = source.hyper.embedding_dim;
    if target.dim() != e {
        return Err(ModelError::Config(format!("target table dim {} vs model dim {e}", target.dim())));
    }
    let vocab = Vocab::new(target.vocab().iter().chain(source.vocab.tokens()).cloned());
    let mut embedding = Mat::zeros(vocab.len(), e);
    for (i, tok) in vocab.tokens().iter().enumerate() {
        let row = match (target.get(tok), source.vocab.get(tok)) {
            (Some(v), _) => v,
            (None, Some(j)) => source.params.embedding.row(j),
            (None, None) => unreachable!("vocabulary is the union of both"),
        };
        embedding.row_mut(i).copy_from_slice(row);
    }
    let mut params = source.params.clone();
    params.embedding = embedding;
    Ok(CarryoverModel { hyper: source.hyper.clone(), vocab, params })
}

impl CarryoverModel {
    /// Groups consecutive examples sharing their input and converts them to
    /// token ids. Each group comes with the indices of its examples.
    pub fn encode(&self, examples: &[CandidateExample]) -> Result<Vec<(EncodedGroup, Vec<usize>)>, ModelError> {
        let mut out: Vec<(EncodedGroup, Vec<usize>)> = Vec::new();
        let mut last: Option<&CandidateExample> = None;
        let ids = |t: &Turn| turn_sequence(t).map(|tok| self.vocab.id(tok)).collect::<Vec<_>>();
        for (i, ex) in examples.iter().enumerate() {
            if ex.current_turn.tokens.is_empty() {
                return Err(ModelError::Input(format!("candidate {}: current turn is empty", ex.slot)));
            }
            let value: Vec<usize> = ex.slot.value_tokens().iter().map(|t| self.vocab.id(t)).collect();
            if value.is_empty() {
                return Err(ModelError::Input(format!("candidate {}: empty value", ex.slot)));
            }
            let slot = EncodedSlot {
                key: vec![self.vocab.id(&ex.slot.key)],
                value,
                distance: ex.distance,
                label: ex.label,
            };
            match (last, out.last_mut()) {
                (Some(prev), Some((group, idx))) if prev.shares_input_with(ex) => {
                    group.slots.push(slot);
                    idx.push(i);
                }
                _ => {
                    let context = ex.context.iter().flat_map(|t| ids(t)).collect();
                    out.push((EncodedGroup { context, current: ids(&ex.current_turn), slots: vec![slot] }, vec![i]));
                }
            }
            last = Some(ex);
        }
        Ok(out)
    }

    pub fn predict_groups(&self, groups: &[(EncodedGroup, Vec<usize>)], n: usize) -> Vec<f64> {
        let mut probs = vec![0.0; n];
        for (g, idx) in groups {
            let trace = network::forward_group(&self.params, g);
            for (&i, p) in idx.iter().zip(trace.probabilities()) {
                probs[i] = p;
            }
        }
        probs
    }

    /// Carryover probabilities, one per example, in order.
    pub fn predict(&self, examples: &[CandidateExample]) -> Result<Vec<f64>, ModelError> {
        let groups = self.encode(examples)?;
        Ok(self.predict_groups(&groups, examples.len()))
    }

    pub fn forward(&self, example: &CandidateExample) -> Result<Prediction, ModelError> {
        let p = self.predict(std::slice::from_ref(example))?[0];
        Ok(Prediction { probability: p, slot: example.slot.clone(), distance: example.distance })
    }

    /// Full activation trace of one group, for inspection.
    pub fn trace(&self, group: &EncodedGroup) -> GroupTrace {
        network::forward_group(&self.params, group)
    }

    /// Mean class-weighted loss over `batch` and its exact gradient.
    pub fn loss_and_grad(&self, batch: &[CandidateExample], positive_weight: f64) -> Result<(f64, Params), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::Input("empty batch".into()));
        }
        let groups = self.encode(batch)?;
        let refs: Vec<&EncodedGroup> = groups.iter().map(|(g, _)| g).collect();
        let mut grads = self.params.zeros_like();
        let loss = self.loss_and_grad_encoded(&refs, positive_weight, &mut grads)?;
        Ok((loss, grads))
    }

    /// As [`Self::loss_and_grad`] on pre-encoded groups, accumulating into
    /// `grads`.
    pub fn loss_and_grad_encoded(
        &self,
        groups: &[&EncodedGroup],
        positive_weight: f64,
        grads: &mut Params,
    ) -> Result<f64, ModelError> {
        network::loss_and_grad_groups(&self.params, groups, positive_weight, grads).map_err(ModelError::Input)
    }

    pub fn adam_step(&mut self, grads: &Params, state: &mut AdamState) -> Result<(), ModelError> {
        state.step_params(&mut self.params, grads, &self.hyper.adam())?;
        if let Some((block, i)) = self.params.first_non_finite() {
            return Err(ModelError::NonFinite(format!("parameter {block}[{i}] after update")));
        }
        Ok(())
    }

    /// The model's embedding rows as a table (including the unknown token).
    pub fn embedding_table(&self, language: &str) -> EmbeddingTable {
        let mut t = EmbeddingTable::new(language, self.hyper.embedding_dim);
        for (i, tok) in self.vocab.tokens().iter().enumerate() {
            t.push(tok, self.params.embedding.row(i)).expect("dims match");
        }
        t
    }

    /// Replaces the forward cell of both encoders.
    pub fn load_forward_cells(&mut self, cell: &LstmCell) -> Result<(), ModelError> {
        let expected = &self.params.context_encoder.fwd;
        if cell.w.rows != expected.w.rows || cell.w.cols != expected.w.cols {
            return Err(ModelError::Config(format!(
                "pretrained cell is {}x{}, encoder expects {}x{}",
                cell.w.rows, cell.w.cols, expected.w.rows, expected.w.cols
            )));
        }
        self.params.context_encoder.fwd = cell.clone();
        self.params.current_encoder.fwd = cell.clone();
        Ok(())
    }
}

/// Positive class weight #negatives / #positives (1 when either is absent).
pub fn inverse_frequency_weight(examples: &[CandidateExample]) -> f64 {
    let pos = examples.iter().filter(|e| e.label == Some(true)).count();
    let neg = examples.iter().filter(|e| e.label == Some(false)).count();
    if pos == 0 || neg == 0 {
        1.0
    } else {
        neg as f64 / pos as f64
    }
}
