use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{BiLstm, LstmCell, Mat, Params};
use super::{CarryoverModel, Hyperparams, ModelError, Vocab, UNK};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Block {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format_version: u32,
    hyperparams: Hyperparams,
    vocab: Vec<String>,
    blocks: Vec<Block>,
}

pub fn checkpoint_json(model: &CarryoverModel) -> String {
    let blocks = Params::BLOCK_NAMES
        .iter()
        .zip(model.params.blocks())
        .map(|(name, m)| Block { name: name.to_string(), rows: m.rows, cols: m.cols, data: m.data.clone() })
        .collect();
    let ck = Checkpoint {
        format_version: FORMAT_VERSION,
        hyperparams: model.hyper.clone(),
        vocab: model.vocab.tokens().to_vec(),
        blocks,
    };
    serde_json::to_string(&ck).expect("checkpoint serialization cannot fail")
}

pub fn write_checkpoint(model: &CarryoverModel, path: &Path) -> Result<(), ModelError> {
    crate::fsutil::write_atomic(path, checkpoint_json(model).as_bytes())?;
    Ok(())
}

fn expected_shapes(h: &Hyperparams, vocab: usize) -> [(usize, usize); 19] {
    let (e, hh, hd) = (h.embedding_dim, h.encoder_hidden, h.decoder_hidden);
    let cell = [(4 * hh, e + hh), (4 * hh, 1)];
    [
        (vocab, e),
        cell[0],
        cell[1],
        cell[0],
        cell[1],
        cell[0],
        cell[1],
        cell[0],
        cell[1],
        (h.window + 1, e),
        (2 * hh, 3 * e),
        (2 * hh, 1),
        (hh, 2 * hh),
        (hh, 2 * hh),
        (hh, 1),
        (hd, 6 * hh),
        (hd, 1),
        (hd, 1),
        (1, 1),
    ]
}

pub fn parse_checkpoint(text: &str) -> Result<CarryoverModel, ModelError> {
    let ck: Checkpoint = serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    if ck.format_version != FORMAT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "format version {} is not supported (expected {FORMAT_VERSION})",
            ck.format_version
        )));
    }
    ck.hyperparams.validate()?;
    if ck.vocab.first().map(String::as_str) != Some(UNK) {
        return Err(ModelError::Checkpoint(format!("vocabulary must start with {UNK}")));
    }
    let vocab = Vocab::new(ck.vocab.iter().cloned());
    if vocab.len() != ck.vocab.len() {
        return Err(ModelError::Checkpoint("vocabulary has duplicate tokens".into()));
    }
    if ck.blocks.len() != Params::BLOCK_NAMES.len() {
        return Err(ModelError::Checkpoint(format!("expected {} blocks, found {}", Params::BLOCK_NAMES.len(), ck.blocks.len())));
    }
    let shapes = expected_shapes(&ck.hyperparams, vocab.len());
    let mut mats = Vec::with_capacity(shapes.len());
    for ((block, name), (rows, cols)) in ck.blocks.into_iter().zip(Params::BLOCK_NAMES).zip(shapes) {
        if block.name != name || block.rows != rows || block.cols != cols || block.data.len() != rows * cols {
            return Err(ModelError::Checkpoint(format!(
                "block {:?} ({}x{}, {} values) does not match expected {name} {rows}x{cols}",
                block.name,
                block.rows,
                block.cols,
                block.data.len()
            )));
        }
        if block.data.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Checkpoint(format!("block {name} has non-finite values")));
        }
        mats.push(Mat { rows, cols, data: block.data });
    }
    let mut it = mats.into_iter();
    let mut next = || it.next().expect("block count checked");
    let cell = |next: &mut dyn FnMut() -> Mat| LstmCell { w: next(), b: next() };
    let embedding = next();
    let context_encoder = BiLstm { fwd: cell(&mut next), bwd: cell(&mut next) };
    let current_encoder = BiLstm { fwd: cell(&mut next), bwd: cell(&mut next) };
    let params = Params {
        embedding,
        context_encoder,
        current_encoder,
        distance: next(),
        slot_w: next(),
        slot_b: next(),
        att_query: next(),
        att_memory: next(),
        att_score: next(),
        dec_w: next(),
        dec_b: next(),
        out_w: next(),
        out_b: next(),
    };
    Ok(CarryoverModel { hyper: ck.hyperparams, vocab, params })
}

pub fn read_checkpoint(path: &Path) -> Result<CarryoverModel, ModelError> {
    parse_checkpoint(&std::fs::read_to_string(path)?)
}
