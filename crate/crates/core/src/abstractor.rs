//! Conditioned summary generation.
//!
//! A [`ConditioningBundle`] pairs condition tokens with target tokens and a
//! segment mask (0 = condition, 1 = target). The mask decides where the
//! training loss applies; in decoder-only mode it also selects a learned
//! segment embedding. Condition inputs are never zeroed.

use alloc::borrow::ToOwned;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autograd::{log_softmax, softmax, AttentionMask, ParamId, Parameters, Tape, Var};
use crate::document::Document;
use crate::error::{Error, Result};
use crate::nn::{DecoderBlock, EncoderBlock, LayerNorm, ParamBuilder};
use crate::optim::{train_loop, HasParameters, TrainConfig, TrainReport};
use crate::vocab::{TokenId, Vocabulary, SEP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConditionVariant {
    #[serde(rename = "EXT")]
    Ext,
    #[serde(rename = "INTRO")]
    Intro,
    #[serde(rename = "INTRO_CONCL")]
    IntroConcl,
    #[serde(rename = "INTRO_EXT_CONCL")]
    IntroExtConcl,
    #[serde(rename = "EXT_PARAPHRASED")]
    ExtParaphrased,
    #[serde(rename = "NONE")]
    None,
}

impl ConditionVariant {
    pub const ALL: [ConditionVariant; 6] = [
        ConditionVariant::Ext,
        ConditionVariant::Intro,
        ConditionVariant::IntroConcl,
        ConditionVariant::IntroExtConcl,
        ConditionVariant::ExtParaphrased,
        ConditionVariant::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConditionVariant::Ext => "EXT",
            ConditionVariant::Intro => "INTRO",
            ConditionVariant::IntroConcl => "INTRO_CONCL",
            ConditionVariant::IntroExtConcl => "INTRO_EXT_CONCL",
            ConditionVariant::ExtParaphrased => "EXT_PARAPHRASED",
            ConditionVariant::None => "NONE",
        }
    }

    pub fn needs_extract(self) -> bool {
        matches!(self, ConditionVariant::Ext | ConditionVariant::IntroExtConcl)
    }

    pub fn needs_paraphrase(self) -> bool {
        self == ConditionVariant::ExtParaphrased
    }
}

impl fmt::Display for ConditionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConditionVariant {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, String> {
        ConditionVariant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| alloc::format!("unknown conditioning variant {s:?}"))
    }
}

enum Part {
    Intro,
    Extract,
    Conclusion,
    Paraphrased,
}

/// Concatenates the variant's parts, separated by a single `[SEP]` token.
pub fn build_condition(
    doc: &Document,
    variant: ConditionVariant,
    ext: Option<&[usize]>,
    paraphrased: Option<&[String]>,
) -> Result<String> {
    use Part::*;
    let parts: &[Part] = match variant {
        ConditionVariant::None => return Ok(String::new()),
        ConditionVariant::Ext => &[Extract],
        ConditionVariant::Intro => &[Intro],
        ConditionVariant::IntroConcl => &[Intro, Conclusion],
        ConditionVariant::IntroExtConcl => &[Intro, Extract, Conclusion],
        ConditionVariant::ExtParaphrased => &[Paraphrased],
    };
    let missing = |reason: &str| Error::MissingConditionPart {
        variant: variant.name(),
        doc_id: doc.id.clone(),
        reason: reason.to_owned(),
    };
    let mut texts = Vec::with_capacity(parts.len());
    for part in parts {
        let text = match part {
            Intro => doc.section_text(doc.introduction().ok_or_else(|| missing("no introduction section"))?),
            Conclusion => doc.section_text(doc.conclusion().ok_or_else(|| missing("no conclusion section"))?),
            Extract => {
                let idxs = ext.ok_or_else(|| missing("no extractive selection"))?;
                let mut sents = Vec::with_capacity(idxs.len());
                for &i in idxs {
                    sents.push(
                        doc.body_sents
                            .get(i)
                            .ok_or(Error::SentenceOutOfRange { doc_id: doc.id.clone(), index: i })?
                            .as_str(),
                    );
                }
                sents.join(" ")
            }
            Paraphrased => paraphrased.ok_or_else(|| missing("no paraphrased extract"))?.join(" "),
        };
        texts.push(text);
    }
    let sep = alloc::format!(" {SEP} ");
    Ok(texts.join(&sep))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditioningBundle {
    pub condition_ids: Vec<TokenId>,
    pub target_ids: Vec<TokenId>,
    pub segment_mask: Vec<u8>,
}

impl ConditioningBundle {
    pub fn from_ids(mut condition_ids: Vec<TokenId>, target_ids: Vec<TokenId>, max_total: usize) -> Result<Self> {
        if target_ids.len() > max_total {
            return Err(Error::TargetTooLong { target: target_ids.len(), max_total });
        }
        condition_ids.truncate(max_total - target_ids.len());
        let mut segment_mask = vec![0u8; condition_ids.len()];
        segment_mask.resize(condition_ids.len() + target_ids.len(), 1);
        Ok(Self { condition_ids, target_ids, segment_mask })
    }
}

/// Tokenizes both sides; an over-long condition loses tokens from its end.
pub fn build_bundle(condition: &str, target: &str, vocab: &Vocabulary, max_total: usize) -> Result<ConditioningBundle> {
    ConditioningBundle::from_ids(vocab.tokenize(condition), vocab.tokenize(target), max_total)
}

/// Teacher-forcing view of a bundle over the stream
/// `condition ⊕ [BOS] ⊕ target`: `labels[i]` is the token after position
/// `i` (`[EOS]` at the end) and `loss_mask[i]` is 1 where that label is a
/// target or end-of-sequence token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSequence {
    pub tokens: Vec<TokenId>,
    pub labels: Vec<TokenId>,
    pub loss_mask: Vec<u8>,
    pub condition_len: usize,
}

impl LabeledSequence {
    pub fn from_bundle(b: &ConditioningBundle, bos: TokenId, eos: TokenId) -> Self {
        let condition_len = b.condition_ids.len();
        let mut tokens = b.condition_ids.clone();
        tokens.push(bos);
        tokens.extend_from_slice(&b.target_ids);
        let mut labels: Vec<TokenId> = tokens[1..].to_vec();
        labels.push(eos);
        let loss_mask = (0..tokens.len()).map(|i| u8::from(i >= condition_len)).collect();
        Self { tokens, labels, loss_mask, condition_len }
    }

    fn masked_targets(&self, range: core::ops::Range<usize>) -> Vec<Option<usize>> {
        range
            .map(|i| (self.loss_mask[i] == 1).then_some(self.labels[i] as usize))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchitectureMode {
    /// Condition into the encoder, target into the decoder.
    #[default]
    EncoderDecoder,
    /// One causal stream `condition ⊕ [BOS] ⊕ target` with segment embeddings.
    DecoderOnly,
}

impl ArchitectureMode {
    pub fn label(self) -> &'static str {
        match self {
            ArchitectureMode::EncoderDecoder => "encoder-decoder",
            ArchitectureMode::DecoderOnly => "decoder-only",
        }
    }
}

impl FromStr for ArchitectureMode {
    type Err = String;
    fn from_str(s: &str) -> core::result::Result<Self, String> {
        match s {
            "encoder-decoder" => Ok(ArchitectureMode::EncoderDecoder),
            "decoder-only" => Ok(ArchitectureMode::DecoderOnly),
            _ => Err(alloc::format!("unknown architecture mode {s:?}")),
        }
    }
}

/// What the decoder attends to.
pub enum Memory {
    /// Encoder hidden states.
    States(Var),
    /// Condition tokens prefixed to the decoder stream.
    Prefix(Vec<TokenId>),
}

pub trait Seq2SeqModel: HasParameters {
    fn mode(&self) -> ArchitectureMode;

    /// Longest stream the model can position-embed.
    fn max_positions(&self) -> usize;

    fn encode(&self, t: &mut Tape<'_>, condition: &[TokenId]) -> Memory;

    /// Next-token logits for every position of `prefix` (one row each).
    fn decode(&self, t: &mut Tape<'_>, memory: &Memory, prefix: &[TokenId]) -> Var;

    /// Mean cross-entropy over loss-mask positions.
    fn sequence_loss(&self, t: &mut Tape<'_>, seq: &LabeledSequence) -> Var {
        let memory = self.encode(t, &seq.tokens[..seq.condition_len]);
        let logits = self.decode(t, &memory, &seq.tokens[seq.condition_len..]);
        t.cross_entropy(logits, &seq.masked_targets(seq.condition_len..seq.tokens.len()))
    }

    /// Distribution over the vocabulary for the token after `prefix`.
    fn decode_step(&self, condition: &[TokenId], prefix: &[TokenId]) -> Vec<f64> {
        let mut t = Tape::new(self.parameters());
        let memory = self.encode(&mut t, condition);
        let logits = self.decode(&mut t, &memory, prefix);
        let v = t.value(logits);
        softmax(v.row(v.rows - 1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seq2SeqConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub max_positions: usize,
    pub mode: ArchitectureMode,
    pub seed: u64,
}

impl Default for Seq2SeqConfig {
    fn default() -> Self {
        Self {
            vocab_size: 0,
            dim: 32,
            heads: 2,
            ff_dim: 64,
            encoder_layers: 2,
            decoder_layers: 2,
            max_positions: DEFAULT_MAX_TOTAL + 2,
            mode: ArchitectureMode::EncoderDecoder,
            seed: 0,
        }
    }
}

/// Default budget for condition plus target tokens.
pub const DEFAULT_MAX_TOTAL: usize = 1024;

enum Decoder {
    Cross(Vec<DecoderBlock>),
    Causal { blocks: Vec<EncoderBlock>, segment_embedding: ParamId },
}

/// Tiny transformer with tied input/output embeddings.
pub struct ReferenceSeq2Seq {
    pub config: Seq2SeqConfig,
    params: Parameters,
    token_embedding: ParamId,
    position_embedding: ParamId,
    encoder: Vec<EncoderBlock>,
    encoder_norm: Option<LayerNorm>,
    decoder: Decoder,
    decoder_norm: LayerNorm,
    cls: TokenId,
}

impl ReferenceSeq2Seq {
    /// `cls` is prepended to every encoder input so an empty condition still
    /// yields one memory row.
    pub fn new(config: Seq2SeqConfig, cls: TokenId) -> Self {
        let mut b = ParamBuilder::new(config.seed);
        let (d, h, f) = (config.dim, config.heads, config.ff_dim);
        let token_embedding = b.embedding("token_embedding".into(), config.vocab_size, d);
        let position_embedding = b.embedding("position_embedding".into(), config.max_positions, d);
        let (encoder, encoder_norm, decoder) = match config.mode {
            ArchitectureMode::EncoderDecoder => {
                let enc = (0..config.encoder_layers)
                    .map(|l| b.encoder_block(&alloc::format!("encoder{l}"), d, h, f))
                    .collect();
                let norm = b.layer_norm("encoder_norm", d);
                let dec = (0..config.decoder_layers)
                    .map(|l| b.decoder_block(&alloc::format!("decoder{l}"), d, h, f))
                    .collect();
                (enc, Some(norm), Decoder::Cross(dec))
            }
            ArchitectureMode::DecoderOnly => {
                let segment_embedding = b.embedding("segment_embedding".into(), 2, d);
                let blocks = (0..config.decoder_layers)
                    .map(|l| b.encoder_block(&alloc::format!("decoder{l}"), d, h, f))
                    .collect();
                (Vec::new(), None, Decoder::Causal { blocks, segment_embedding })
            }
        };
        let decoder_norm = b.layer_norm("decoder_norm", d);
        Self {
            config,
            params: b.params,
            token_embedding,
            position_embedding,
            encoder,
            encoder_norm,
            decoder,
            decoder_norm,
            cls,
        }
    }

    fn embed(&self, t: &mut Tape<'_>, ids: &[TokenId]) -> Var {
        let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        let positions: Vec<usize> = (0..ids.len()).collect();
        let tok = t.param(self.token_embedding);
        let pos = t.param(self.position_embedding);
        let te = t.gather(tok, &idx);
        let pe = t.gather(pos, &positions);
        t.add(te, pe)
    }

    fn logits(&self, t: &mut Tape<'_>, hidden: Var) -> Var {
        let h = self.decoder_norm.forward(t, hidden);
        let emb = t.param(self.token_embedding);
        t.matmul_bt(h, emb)
    }

    /// Decoder-only: logits for every position of `condition ⊕ rest`.
    fn causal_stream(&self, t: &mut Tape<'_>, condition: &[TokenId], rest: &[TokenId]) -> Var {
        let Decoder::Causal { blocks, segment_embedding } = &self.decoder else {
            unreachable!("causal_stream on an encoder-decoder model")
        };
        let mut stream = condition.to_vec();
        stream.extend_from_slice(rest);
        let mut x = self.embed(t, &stream);
        let segments: Vec<usize> = (0..stream.len()).map(|i| usize::from(i >= condition.len())).collect();
        let seg = t.param(*segment_embedding);
        let se = t.gather(seg, &segments);
        x = t.add(x, se);
        let mask = AttentionMask::Causal { offset: 0 };
        for block in blocks {
            x = block.forward(t, x, &mask);
        }
        self.logits(t, x)
    }
}

/// Desk-scale default: dim 32, 2 heads, feed-forward 64, 2 + 2 blocks.
pub fn reference_seq2seq_spec(vocab_size: usize, max_positions: usize, mode: ArchitectureMode, cls: TokenId, seed: u64) -> ReferenceSeq2Seq {
    ReferenceSeq2Seq::new(Seq2SeqConfig { vocab_size, max_positions, mode, seed, ..Default::default() }, cls)
}

impl HasParameters for ReferenceSeq2Seq {
    fn parameters(&self) -> &Parameters {
        &self.params
    }
    fn parameters_mut(&mut self) -> &mut Parameters {
        &mut self.params
    }
}

impl Seq2SeqModel for ReferenceSeq2Seq {
    fn mode(&self) -> ArchitectureMode {
        self.config.mode
    }

    fn max_positions(&self) -> usize {
        self.config.max_positions
    }

    fn encode(&self, t: &mut Tape<'_>, condition: &[TokenId]) -> Memory {
        match self.config.mode {
            ArchitectureMode::DecoderOnly => Memory::Prefix(condition.to_vec()),
            ArchitectureMode::EncoderDecoder => {
                let mut ids = Vec::with_capacity(condition.len() + 1);
                ids.push(self.cls);
                ids.extend_from_slice(condition);
                let mut x = self.embed(t, &ids);
                for block in &self.encoder {
                    x = block.forward(t, x, &AttentionMask::Full);
                }
                let norm = self.encoder_norm.expect("encoder-decoder has an encoder norm");
                Memory::States(norm.forward(t, x))
            }
        }
    }

    fn decode(&self, t: &mut Tape<'_>, memory: &Memory, prefix: &[TokenId]) -> Var {
        match (&self.decoder, memory) {
            (Decoder::Cross(blocks), Memory::States(states)) => {
                let mut x = self.embed(t, prefix);
                for block in blocks {
                    x = block.forward(t, x, Some(*states));
                }
                self.logits(t, x)
            }
            (Decoder::Causal { .. }, Memory::Prefix(cond)) => {
                let all = self.causal_stream(t, cond, prefix);
                let rows: Vec<usize> = (cond.len()..cond.len() + prefix.len()).collect();
                t.gather(all, &rows)
            }
            _ => panic!("memory kind does not match architecture"),
        }
    }

    fn sequence_loss(&self, t: &mut Tape<'_>, seq: &LabeledSequence) -> Var {
        match self.config.mode {
            ArchitectureMode::EncoderDecoder => {
                let memory = self.encode(t, &seq.tokens[..seq.condition_len]);
                let logits = self.decode(t, &memory, &seq.tokens[seq.condition_len..]);
                t.cross_entropy(logits, &seq.masked_targets(seq.condition_len..seq.tokens.len()))
            }
            ArchitectureMode::DecoderOnly => {
                let (cond, rest) = seq.tokens.split_at(seq.condition_len);
                let logits = self.causal_stream(t, cond, rest);
                t.cross_entropy(logits, &seq.masked_targets(0..seq.tokens.len()))
            }
        }
    }
}

/// Next-token cross-entropy over target positions only, teacher forcing,
/// global-norm clipping. Bundles with an empty target are skipped.
pub fn train_abstractor<M: Seq2SeqModel>(
    bundles: &[ConditioningBundle],
    model: &mut M,
    vocab: &Vocabulary,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let seqs: Vec<LabeledSequence> = bundles
        .iter()
        .enumerate()
        .filter(|(i, b)| {
            if b.target_ids.is_empty() {
                log::warn!("skipping bundle {i}: empty target");
            }
            !b.target_ids.is_empty()
        })
        .map(|(_, b)| LabeledSequence::from_bundle(b, vocab.bos_id(), vocab.eos_id()))
        .collect();
    train_sequences(model, &seqs, cfg)
}

pub fn train_sequences<M: Seq2SeqModel>(model: &mut M, seqs: &[LabeledSequence], cfg: &TrainConfig) -> Result<TrainReport> {
    train_loop(model, seqs, cfg, |m, t, s| m.sequence_loss(t, s))
}

/// Teacher-forced argmax accuracy over loss-mask positions.
pub fn token_accuracy<M: Seq2SeqModel>(model: &M, seqs: &[LabeledSequence]) -> f64 {
    let (mut hits, mut total) = (0usize, 0usize);
    for s in seqs {
        let mut t = Tape::new(model.parameters());
        let memory = model.encode(&mut t, &s.tokens[..s.condition_len]);
        let logits = model.decode(&mut t, &memory, &s.tokens[s.condition_len..]);
        let v = t.value(logits);
        for (r, i) in (s.condition_len..s.tokens.len()).enumerate() {
            if s.loss_mask[i] == 1 {
                total += 1;
                hits += usize::from(argmax(v.row(r)) == s.labels[i] as usize);
            }
        }
    }
    if total == 0 { 0.0 } else { hits as f64 / total as f64 }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decoding {
    Greedy,
    Beam(usize),
}

/// Default beam width.
pub const DEFAULT_BEAM_WIDTH: usize = 4;

impl Default for Decoding {
    fn default() -> Self {
        Decoding::Beam(DEFAULT_BEAM_WIDTH)
    }
}

impl fmt::Display for Decoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decoding::Greedy => f.write_str("greedy"),
            Decoding::Beam(w) => write!(f, "beam:{w}"),
        }
    }
}

impl FromStr for Decoding {
    type Err = String;
    fn from_str(s: &str) -> core::result::Result<Self, String> {
        if s == "greedy" {
            return Ok(Decoding::Greedy);
        }
        let width = s
            .strip_prefix("beam:")
            .and_then(|w| w.parse::<usize>().ok())
            .filter(|w| *w >= 1)
            .ok_or_else(|| alloc::format!("expected greedy or beam:<width>, got {s:?}"))?;
        Ok(Decoding::Beam(width))
    }
}

/// Autoregressive token generation from encoded condition ids. Stops at
/// `[EOS]` (not included) or after `max_new_tokens`.
pub fn generate_ids<M: Seq2SeqModel>(
    condition: &[TokenId],
    model: &M,
    vocab: &Vocabulary,
    decoding: Decoding,
    max_new_tokens: usize,
) -> Result<Vec<TokenId>> {
    if max_new_tokens < 1 {
        return Err(Error::InvalidMaxNewTokens);
    }
    let mut t = Tape::new(model.parameters());
    let memory = model.encode(&mut t, condition);
    let prefix_room = match model.mode() {
        ArchitectureMode::EncoderDecoder => model.max_positions(),
        ArchitectureMode::DecoderOnly => model.max_positions().saturating_sub(condition.len()),
    };
    // the prefix holds [BOS] plus generated tokens
    let steps = max_new_tokens.min(prefix_room.saturating_sub(1).max(1));
    let bos = vocab.bos_id();
    let eos = vocab.eos_id() as usize;
    let mut next_logprobs = |t: &mut Tape<'_>, generated: &[TokenId]| {
        let mut prefix = Vec::with_capacity(generated.len() + 1);
        prefix.push(bos);
        prefix.extend_from_slice(generated);
        let logits = model.decode(t, &memory, &prefix);
        let v = t.value(logits);
        log_softmax(v.row(v.rows - 1))
    };
    match decoding {
        Decoding::Greedy => {
            let mut out = Vec::new();
            for _ in 0..steps {
                let lp = next_logprobs(&mut t, &out);
                let best = argmax(&lp);
                if best == eos {
                    break;
                }
                out.push(best as TokenId);
            }
            Ok(out)
        }
        Decoding::Beam(width) => {
            if width < 1 {
                return Err(Error::InvalidBeamWidth);
            }
            Ok(beam_search(&mut t, &mut next_logprobs, width, steps, eos))
        }
    }
}

/// Length-normalized beam search (score = log-probability / length, with the
/// end token counted in the length of finished hypotheses).
fn beam_search<'p>(
    t: &mut Tape<'p>,
    next_logprobs: &mut impl FnMut(&mut Tape<'p>, &[TokenId]) -> Vec<f64>,
    width: usize,
    steps: usize,
    eos: usize,
) -> Vec<TokenId> {
    let mut alive: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 0.0)];
    let mut finished: Vec<(Vec<TokenId>, f64)> = Vec::new();
    for _ in 0..steps {
        let mut cands: Vec<(usize, usize, f64)> = Vec::new();
        for (h, (ids, score)) in alive.iter().enumerate() {
            let lp = next_logprobs(t, ids);
            let mut order: Vec<usize> = (0..lp.len()).collect();
            order.sort_by(|&a, &b| lp[b].total_cmp(&lp[a]).then(a.cmp(&b)));
            for &tok in order.iter().take(width) {
                cands.push((h, tok, score + lp[tok]));
            }
        }
        cands.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
        let mut next = Vec::with_capacity(width);
        for (rank, (h, tok, score)) in cands.into_iter().enumerate() {
            if tok == eos {
                if rank < width {
                    let ids = alive[h].0.clone();
                    let len = (ids.len() + 1) as f64;
                    finished.push((ids, score / len));
                }
            } else if next.len() < width {
                let mut ids = alive[h].0.clone();
                ids.push(tok as TokenId);
                next.push((ids, score));
            }
            if next.len() == width && rank + 1 >= width {
                break;
            }
        }
        alive = next;
        if finished.len() >= width || alive.is_empty() {
            break;
        }
    }
    if finished.is_empty() {
        finished.extend(alive.into_iter().map(|(ids, s)| {
            let len = ids.len().max(1) as f64;
            (ids, s / len)
        }));
    }
    let mut best = 0;
    for (i, f) in finished.iter().enumerate() {
        if f.1 > finished[best].1 {
            best = i;
        }
    }
    finished.swap_remove(best).0
}

/// Tokenizes and truncates the condition, then decodes to text.
pub fn generate<M: Seq2SeqModel>(
    condition: &str,
    model: &M,
    vocab: &Vocabulary,
    decoding: Decoding,
    max_new_tokens: usize,
    max_total: usize,
) -> Result<String> {
    if max_new_tokens < 1 {
        return Err(Error::InvalidMaxNewTokens);
    }
    let mut ids = vocab.tokenize(condition);
    let limit = match model.mode() {
        ArchitectureMode::EncoderDecoder => max_total.min(model.max_positions().saturating_sub(1)),
        ArchitectureMode::DecoderOnly => max_total.saturating_sub(max_new_tokens),
    };
    ids.truncate(limit);
    let out = generate_ids(&ids, model, vocab, decoding, max_new_tokens)?;
    Ok(vocab.detokenize(&out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::gradcheck::max_relative_error;
    use crate::autograd::Matrix;
    use crate::document::Section;
    use crate::vocab::RESERVED;
    use alloc::string::ToString;

    fn doc() -> Document {
        Document {
            id: "p1".into(),
            abstract_sents: vec!["abs one here.".into()],
            body_sents: (0..8).map(|i| alloc::format!("sentence number {i}.")).collect(),
            sections: vec![
                Section { name: "introduction".into(), start: 0, end: 2 },
                Section { name: "method".into(), start: 2, end: 6 },
                Section { name: "conclusions".into(), start: 6, end: 8 },
            ],
            word_count: 24,
        }
    }

    #[test]
    fn condition_variants() {
        let d = doc();
        assert_eq!(build_condition(&d, ConditionVariant::None, None, None).unwrap(), "");
        assert_eq!(
            build_condition(&d, ConditionVariant::Ext, Some(&[2, 5]), None).unwrap(),
            "sentence number 2. sentence number 5."
        );
        let full = build_condition(&d, ConditionVariant::IntroExtConcl, Some(&[3]), None).unwrap();
        assert_eq!(
            full,
            "sentence number 0. sentence number 1. [SEP] sentence number 3. [SEP] sentence number 6. sentence number 7."
        );
        assert_eq!(
            build_condition(&d, ConditionVariant::IntroConcl, None, None).unwrap(),
            "sentence number 0. sentence number 1. [SEP] sentence number 6. sentence number 7."
        );
        let para = vec!["rephrased text".to_string()];
        assert_eq!(
            build_condition(&d, ConditionVariant::ExtParaphrased, None, Some(&para)).unwrap(),
            "rephrased text"
        );
    }

    #[test]
    fn missing_parts_are_errors() {
        let mut d = doc();
        let e = build_condition(&d, ConditionVariant::Ext, None, None).unwrap_err();
        assert!(matches!(e, Error::MissingConditionPart { variant: "EXT", .. }));
        d.sections.clear();
        let e = build_condition(&d, ConditionVariant::Intro, None, None).unwrap_err();
        assert!(matches!(e, Error::MissingConditionPart { variant: "INTRO", ref doc_id, .. } if doc_id == "p1"));
        assert!(build_condition(&d, ConditionVariant::ExtParaphrased, None, None).is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in ConditionVariant::ALL {
            assert_eq!(v.name().parse::<ConditionVariant>().unwrap(), v);
        }
        assert!("BOGUS".parse::<ConditionVariant>().is_err());
        assert_eq!("beam:3".parse::<Decoding>().unwrap(), Decoding::Beam(3));
        assert_eq!("greedy".parse::<Decoding>().unwrap(), Decoding::Greedy);
        assert!("beam:0".parse::<Decoding>().is_err());
    }

    #[test]
    fn bundle_masks_and_truncation() {
        let b = ConditioningBundle::from_ids(vec![1, 2], vec![3, 4, 5], 10).unwrap();
        assert_eq!(b.segment_mask, [0, 0, 1, 1, 1]);
        let b = ConditioningBundle::from_ids(vec![], vec![3, 4], 10).unwrap();
        assert_eq!(b.segment_mask, [1, 1]);
        let b = ConditioningBundle::from_ids(vec![7; 2000], vec![8; 200], 1024).unwrap();
        assert_eq!(b.condition_ids.len(), 824);
        assert_eq!(b.target_ids.len(), 200);
        assert_eq!(
            ConditioningBundle::from_ids(vec![], vec![1; 11], 10),
            Err(Error::TargetTooLong { target: 11, max_total: 10 })
        );
    }

    #[test]
    fn labeled_sequence_layout() {
        let b = ConditioningBundle::from_ids(vec![11, 12], vec![13, 14], 10).unwrap();
        let s = LabeledSequence::from_bundle(&b, 4, 5);
        assert_eq!(s.tokens, [11, 12, 4, 13, 14]);
        assert_eq!(s.labels, [12, 4, 13, 14, 5]);
        assert_eq!(s.loss_mask, [0, 0, 1, 1, 1]);
    }

    fn tiny_vocab(n: usize) -> Vocabulary {
        let mut toks: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        for i in 0..n - RESERVED.len() {
            toks.push(alloc::format!("w{i}"));
        }
        Vocabulary::from_tokens(toks).unwrap()
    }

    fn tiny(mode: ArchitectureMode, seed: u64) -> ReferenceSeq2Seq {
        ReferenceSeq2Seq::new(
            Seq2SeqConfig { vocab_size: 20, dim: 8, heads: 2, ff_dim: 16, encoder_layers: 2, decoder_layers: 2, max_positions: 16, mode, seed },
            2,
        )
    }

    #[test]
    fn distributions_sum_to_one() {
        for mode in [ArchitectureMode::EncoderDecoder, ArchitectureMode::DecoderOnly] {
            let m = tiny(mode, 1);
            let p = m.decode_step(&[11, 12, 13], &[4, 14]);
            assert_eq!(p.len(), 20);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            let p = m.decode_step(&[], &[4]);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn decoder_is_causal() {
        for mode in [ArchitectureMode::EncoderDecoder, ArchitectureMode::DecoderOnly] {
            let m = tiny(mode, 3);
            let run = |prefix: &[TokenId]| {
                let mut t = Tape::new(m.parameters());
                let mem = m.encode(&mut t, &[11, 15, 12]);
                let l = m.decode(&mut t, &mem, prefix);
                t.value(l).clone()
            };
            let a = run(&[4, 13, 14, 15, 16]);
            let b = run(&[4, 13, 19, 10, 18]);
            for r in 0..2 {
                assert_eq!(a.row(r), b.row(r));
            }
            assert_ne!(a.row(2), b.row(2));
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for mode in [ArchitectureMode::EncoderDecoder, ArchitectureMode::DecoderOnly] {
            let m = tiny(mode, 4);
            let b = ConditioningBundle::from_ids(vec![11, 12, 13], vec![14, 15], 12).unwrap();
            let s = LabeledSequence::from_bundle(&b, 4, 5);
            let p = m.parameters();
            let mut probes: Vec<(ParamId, usize)> = vec![(m.token_embedding, 8 * 14 + 1), (m.position_embedding, 9)];
            for (name, mat) in p.iter().enumerate().map(|(i, (n, mat))| ((i, n), mat)) {
                if name.1.contains("query.weight") || name.1.contains("ff.inner.weight") || name.1.contains("norm.gain") {
                    probes.push((ParamId(name.0), mat.data.len() / 2));
                }
            }
            assert!(probes.len() >= 5);
            let err = max_relative_error(p, &probes, 1e-4, |t| m.sequence_loss(t, &s));
            assert!(err <= 1e-3, "{mode:?}: relative error {err}");
        }
    }

    #[test]
    fn condition_labels_do_not_affect_loss() {
        for mode in [ArchitectureMode::EncoderDecoder, ArchitectureMode::DecoderOnly] {
            let m = tiny(mode, 5);
            let b = ConditioningBundle::from_ids(vec![11, 12, 13, 16], vec![14, 15], 12).unwrap();
            let s = LabeledSequence::from_bundle(&b, 4, 5);
            let mut rewritten = s.clone();
            for i in 0..s.condition_len {
                rewritten.labels[i] = 19 - s.labels[i] % 5;
            }
            let loss = |seq: &LabeledSequence| {
                let mut t = Tape::new(m.parameters());
                let l = m.sequence_loss(&mut t, seq);
                (t.scalar(l), t.backward(l))
            };
            let (l1, g1) = loss(&s);
            let (l2, g2) = loss(&rewritten);
            assert_eq!(l1.to_bits(), l2.to_bits());
            assert_eq!(g1, g2);
        }
    }

    /// Always predicts end-of-sequence.
    struct Mute(Parameters);
    impl HasParameters for Mute {
        fn parameters(&self) -> &Parameters {
            &self.0
        }
        fn parameters_mut(&mut self) -> &mut Parameters {
            &mut self.0
        }
    }
    impl Seq2SeqModel for Mute {
        fn mode(&self) -> ArchitectureMode {
            ArchitectureMode::EncoderDecoder
        }
        fn max_positions(&self) -> usize {
            64
        }
        fn encode(&self, _: &mut Tape<'_>, _: &[TokenId]) -> Memory {
            Memory::Prefix(Vec::new())
        }
        fn decode(&self, t: &mut Tape<'_>, _: &Memory, prefix: &[TokenId]) -> Var {
            let mut m = Matrix::zeros(prefix.len(), 20);
            for r in 0..prefix.len() {
                m.row_mut(r)[5] = 10.0;
            }
            t.constant(m)
        }
    }

    #[test]
    fn immediate_eos_gives_empty_summary() {
        let v = tiny_vocab(20);
        let m = Mute(Parameters::new());
        for d in [Decoding::Greedy, Decoding::Beam(3)] {
            assert_eq!(generate("w1 w2", &m, &v, d, 10, 32).unwrap(), "");
        }
        assert_eq!(generate("w1", &m, &v, Decoding::Greedy, 0, 32), Err(Error::InvalidMaxNewTokens));
    }

    #[test]
    fn beam_of_one_is_greedy() {
        let v = tiny_vocab(20);
        for mode in [ArchitectureMode::EncoderDecoder, ArchitectureMode::DecoderOnly] {
            for seed in 0..4 {
                let m = tiny(mode, seed);
                let g = generate_ids(&[11, 12], &m, &v, Decoding::Greedy, 8).unwrap();
                let b = generate_ids(&[11, 12], &m, &v, Decoding::Beam(1), 8).unwrap();
                assert_eq!(g, b);
                // greedy is deterministic
                assert_eq!(g, generate_ids(&[11, 12], &m, &v, Decoding::Greedy, 8).unwrap());
            }
        }
    }

    #[test]
    fn empty_targets_skipped() {
        let v = tiny_vocab(20);
        let mut m = tiny(ArchitectureMode::EncoderDecoder, 1);
        let bundles = [ConditioningBundle::from_ids(vec![11], vec![], 8).unwrap()];
        let cfg = TrainConfig { max_steps: 1, batch_size: 1, ..Default::default() };
        assert_eq!(train_abstractor(&bundles, &mut m, &v, &cfg), Err(Error::EmptyTrainingSet));
    }
}
