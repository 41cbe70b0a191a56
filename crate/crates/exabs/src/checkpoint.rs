//! Versioned JSON checkpoints. The embedded config hash and vocabulary hash
//! are checked on load.

use std::path::Path;

use exabs_core::abstractor::{ConditionVariant, ReferenceSeq2Seq, Seq2SeqConfig};
use exabs_core::autograd::Matrix;
use exabs_core::extractor::{ReferenceScorer, ScorerConfig};
use exabs_core::optim::HasParameters;
use exabs_core::vocab::Vocabulary;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io;

pub const FORMAT_VERSION: u32 = 1;
pub const SCORER_KIND: &str = "reference-scorer";
pub const SEQ2SEQ_KIND: &str = "reference-seq2seq";

/// Hex sha256 of the canonical (sorted-key, compact) JSON of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let canonical = serde_json::to_value(value).expect("serializable config");
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

pub fn vocab_hash(vocab: &Vocabulary) -> String {
    let mut h = Sha256::new();
    for t in vocab.tokens() {
        h.update(t.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedParameter {
    pub name: String,
    pub value: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub vocab_hash: String,
    pub parameters: Vec<NamedParameter>,
}

/// Seq2seq checkpoints also record the conditioning variant they were trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seq2SeqCheckpointConfig {
    pub model: Seq2SeqConfig,
    pub variant: ConditionVariant,
    pub cls_id: u32,
}

fn build<C: Serialize, M: HasParameters>(kind: &str, config: &C, model: &M, vocab: &Vocabulary) -> Checkpoint {
    Checkpoint {
        format_version: FORMAT_VERSION,
        kind: kind.to_owned(),
        config: serde_json::to_value(config).expect("serializable config"),
        config_hash: config_hash(config),
        vocab_hash: vocab_hash(vocab),
        parameters: model
            .parameters()
            .iter()
            .map(|(name, value)| NamedParameter { name: name.to_owned(), value: value.clone() })
            .collect(),
    }
}

fn open<C: DeserializeOwned + Serialize>(path: &Path, kind: &str, vocab: &Vocabulary) -> Result<(Checkpoint, C)> {
    let bad = |message: String| Error::Checkpoint { path: path.into(), message };
    let ckpt: Checkpoint = io::read_json(path)?;
    if ckpt.format_version != FORMAT_VERSION {
        return Err(bad(format!("format version {} (expected {FORMAT_VERSION})", ckpt.format_version)));
    }
    if ckpt.kind != kind {
        return Err(bad(format!("kind {:?} (expected {kind:?})", ckpt.kind)));
    }
    let config: C = serde_json::from_value(ckpt.config.clone()).map_err(|e| bad(format!("config: {e}")))?;
    if config_hash(&config) != ckpt.config_hash {
        return Err(bad("config hash mismatch".into()));
    }
    if vocab_hash(vocab) != ckpt.vocab_hash {
        return Err(bad("vocabulary does not match the one used for training".into()));
    }
    Ok((ckpt, config))
}

fn restore<M: HasParameters>(path: &Path, ckpt: Checkpoint, model: &mut M) -> Result<()> {
    model
        .parameters_mut()
        .load(ckpt.parameters.iter().map(|p| (p.name.as_str(), p.value.clone())))
        .map_err(|e| Error::Checkpoint { path: path.into(), message: e.to_string() })
}

pub fn save_scorer(path: &Path, model: &ReferenceScorer, vocab: &Vocabulary) -> Result<()> {
    io::write_json(path, &build(SCORER_KIND, &model.config, model, vocab))
}

pub fn load_scorer(path: &Path, vocab: &Vocabulary) -> Result<ReferenceScorer> {
    let (ckpt, config): (_, ScorerConfig) = open(path, SCORER_KIND, vocab)?;
    let mut model = ReferenceScorer::new(config);
    restore(path, ckpt, &mut model)?;
    Ok(model)
}

pub fn save_seq2seq(path: &Path, model: &ReferenceSeq2Seq, variant: ConditionVariant, vocab: &Vocabulary) -> Result<()> {
    let config = Seq2SeqCheckpointConfig { model: model.config.clone(), variant, cls_id: vocab.cls_id() };
    io::write_json(path, &build(SEQ2SEQ_KIND, &config, model, vocab))
}

pub fn load_seq2seq(path: &Path, vocab: &Vocabulary) -> Result<(ReferenceSeq2Seq, ConditionVariant)> {
    let (ckpt, config): (_, Seq2SeqCheckpointConfig) = open(path, SEQ2SEQ_KIND, vocab)?;
    let mut model = ReferenceSeq2Seq::new(config.model, config.cls_id);
    restore(path, ckpt, &mut model)?;
    Ok((model, config.variant))
}
