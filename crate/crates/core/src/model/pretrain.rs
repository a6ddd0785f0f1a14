use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::AdamState;
use super::lstm::{lstm_backward, lstm_forward};
use super::params::{axpy, LstmCell, Mat};
use super::{turn_sequence, CarryoverModel, ModelError};
use crate::corpus::DialogueSession;
use crate::seed::derive_seed;

#[derive(Debug, Clone)]
pub struct PretrainReport {
    /// Forward cell of the language model, ready for
    /// [`CarryoverModel::load_forward_cells`].
    pub cell: LstmCell,
    /// Training-set perplexity before training and after each epoch.
    pub perplexities: Vec<f64>,
}

struct LanguageModel {
    embedding: Mat,
    cell: LstmCell,
    out_w: Mat,
    out_b: Mat,
}

impl LanguageModel {
    fn blocks_mut(&mut self) -> [&mut Mat; 5] {
        [&mut self.embedding, &mut self.cell.w, &mut self.cell.b, &mut self.out_w, &mut self.out_b]
    }

    fn blocks(&self) -> [&Mat; 5] {
        [&self.embedding, &self.cell.w, &self.cell.b, &self.out_w, &self.out_b]
    }

    fn zeros_like(&self) -> Self {
        let z = |m: &Mat| Mat::zeros(m.rows, m.cols);
        LanguageModel {
            embedding: z(&self.embedding),
            cell: self.cell.zeros_like(),
            out_w: z(&self.out_w),
            out_b: z(&self.out_b),
        }
    }

    /// Summed next-token negative log-likelihood of `ids`, with gradients
    /// (scaled by `scale`) accumulated into `grads` when given.
    fn run(&self, ids: &[usize], scale: f64, grads: Option<&mut LanguageModel>) -> f64 {
        let steps = ids.len() - 1;
        let trace = lstm_forward(&self.cell, ids[..steps].iter().map(|&i| self.embedding.row(i)));
        let h = self.cell.hidden();
        let v = self.out_w.rows;
        let mut nll = 0.0;
        let mut dh = vec![0.0; steps * h];
        let mut logits = vec![0.0; v];
        let mut dlogits = vec![0.0; v];
        let want_grad = grads.is_some();
        let mut out_grads = Vec::new();
        for t in 0..steps {
            logits.copy_from_slice(&self.out_b.data);
            self.out_w.matvec_into(trace.h(t), &mut logits);
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
            let target = ids[t + 1];
            nll += max + z.ln() - logits[target];
            if want_grad {
                for (d, l) in dlogits.iter_mut().zip(&logits) {
                    *d = scale * (l - max).exp() / z;
                }
                dlogits[target] -= scale;
                self.out_w.matvec_t_into(&dlogits, &mut dh[t * h..(t + 1) * h]);
                out_grads.push(dlogits.clone());
            }
        }
        if let Some(g) = grads {
            for (t, d) in out_grads.iter().enumerate() {
                g.out_w.add_outer(d, trace.h(t));
                axpy(1.0, d, &mut g.out_b.data);
            }
            let e = self.embedding.cols;
            let mut dx = vec![0.0; steps * e];
            lstm_backward(&self.cell, &trace, &dh, &mut g.cell, &mut dx);
            for (t, &id) in ids[..steps].iter().enumerate() {
                axpy(1.0, &dx[t * e..(t + 1) * e], g.embedding.row_mut(id));
            }
        }
        nll
    }

    fn perplexity(&self, utterances: &[Vec<usize>]) -> f64 {
        let (mut nll, mut n) = (0.0, 0usize);
        for u in utterances {
            nll += self.run(u, 1.0, None);
            n += u.len() - 1;
        }
        (nll / n as f64).exp()
    }
}

/// Trains a forward next-token language model over every utterance (both
/// speakers, encoder token format) and returns its recurrent cell. The
/// model's embeddings seed the language model's input layer.
pub fn pretrain_encoder(
    model: &CarryoverModel,
    sessions: &[DialogueSession],
    epochs: usize,
    seed: u64,
) -> Result<PretrainReport, ModelError> {
    let utterances: Vec<Vec<usize>> = sessions
        .iter()
        .flat_map(|s| &s.turns)
        .map(|t| turn_sequence(t).map(|tok| model.vocab.id(tok)).collect::<Vec<_>>())
        .filter(|u| u.len() >= 2)
        .collect();
    let distinct: BTreeSet<usize> = utterances.iter().flatten().copied().collect();
    if distinct.len() < 2 {
        return Err(ModelError::Pretrain(format!("vocabulary of size {} is too small", distinct.len())));
    }
    let hyper = &model.hyper;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "pretrain-init"));
    let v = model.vocab.len();
    let mut lm = LanguageModel {
        embedding: model.params.embedding.clone(),
        cell: LstmCell::new(hyper.embedding_dim, hyper.encoder_hidden, &mut rng),
        out_w: Mat::glorot(v, hyper.encoder_hidden, &mut rng),
        out_b: Mat::zeros(v, 1),
    };
    let mut state = AdamState::new(&lm.blocks());
    let cfg = hyper.adam();
    let mut grads = lm.zeros_like();
    let mut order: Vec<usize> = (0..utterances.len()).collect();
    let mut shuffle = ChaCha8Rng::seed_from_u64(derive_seed(seed, "pretrain-shuffle"));
    let mut perplexities = vec![lm.perplexity(&utterances)];
    for epoch in 0..epochs {
        order.shuffle(&mut shuffle);
        for batch in order.chunks(hyper.batch_size) {
            let n: usize = batch.iter().map(|&i| utterances[i].len() - 1).sum();
            for b in grads.blocks_mut() {
                b.fill_zero();
            }
            for &i in batch {
                lm.run(&utterances[i], 1.0 / n as f64, Some(&mut grads));
            }
            let mut params = lm.blocks_mut();
            state.step_blocks(&mut params, &grads.blocks(), &cfg)?;
        }
        let ppl = lm.perplexity(&utterances);
        if !ppl.is_finite() {
            return Err(ModelError::NonFinite(format!("pretraining perplexity at epoch {}", epoch + 1)));
        }
        log::info!("pretrain epoch {}: perplexity {ppl:.3}", epoch + 1);
        perplexities.push(ppl);
    }
    Ok(PretrainReport { cell: lm.cell, perplexities })
}
