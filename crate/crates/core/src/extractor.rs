//! Sentence-pair scorer: input assembly, the reference model, training and
//! top-k selection.
//!
//! An input is `[CLS] anchor [CLS] candidate`, padded to `max_len`. The
//! scorer reads the first position and emits a probability that the
//! candidate belongs in the summary of the anchor.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autograd::{sigmoid, AttentionMask, ParamId, Parameters, Tape, Var};
use crate::document::Document;
use crate::error::{Error, Result};
use crate::nn::{EncoderBlock, LayerNorm, Linear, ParamBuilder};
use crate::optim::{train_loop, HasParameters, TrainConfig, TrainReport};
use crate::oracle::{top_k_indices, LabeledPair};
use crate::vocab::{TokenId, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorInput {
    pub token_ids: Vec<TokenId>,
    pub attention_mask: Vec<u8>,
}

impl ExtractorInput {
    pub fn real_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }
}

/// Assembles `[CLS] gt [CLS] candidate` from token ids. When too long the
/// candidate is truncated first, then the anchor; both `[CLS]` are kept.
pub fn assemble_ids(gt: &[TokenId], candidate: &[TokenId], vocab: &Vocabulary, max_len: usize) -> Result<ExtractorInput> {
    if max_len < 4 {
        return Err(Error::MaxLenTooSmall(max_len));
    }
    let room = max_len - 2;
    let gt_len = gt.len().min(room);
    let cand_len = candidate.len().min(room - gt_len);
    let cls = vocab.cls_id();
    let mut token_ids = Vec::with_capacity(max_len);
    token_ids.push(cls);
    token_ids.extend_from_slice(&gt[..gt_len]);
    token_ids.push(cls);
    token_ids.extend_from_slice(&candidate[..cand_len]);
    let real = token_ids.len();
    token_ids.resize(max_len, vocab.pad_id());
    let mut attention_mask = vec![1u8; real];
    attention_mask.resize(max_len, 0);
    Ok(ExtractorInput { token_ids, attention_mask })
}

pub fn build_extractor_input(gt_sent: &str, candidate: &str, vocab: &Vocabulary, max_len: usize) -> Result<ExtractorInput> {
    assemble_ids(&vocab.tokenize(gt_sent), &vocab.tokenize(candidate), vocab, max_len)
}

/// A trainable sentence-pair scorer.
pub trait ScorerModel: HasParameters {
    /// Records the pre-sigmoid score of `input` on `tape`.
    fn logit(&self, tape: &mut Tape<'_>, input: &ExtractorInput) -> Var;

    /// Probability in (0, 1).
    fn forward(&self, input: &ExtractorInput) -> f64 {
        let mut tape = Tape::new(self.parameters());
        let z = self.logit(&mut tape, input);
        sigmoid(tape.scalar(z))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub layers: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self { vocab_size: 0, dim: 32, heads: 2, ff_dim: 64, layers: 2, max_len: 512, seed: 0 }
    }
}

/// Token + learned position embeddings, pre-norm self-attention blocks,
/// first-position pooling and a two-layer head.
#[derive(Debug, Clone)]
pub struct ReferenceScorer {
    pub config: ScorerConfig,
    params: Parameters,
    token_embedding: ParamId,
    position_embedding: ParamId,
    blocks: Vec<EncoderBlock>,
    final_norm: LayerNorm,
    pooler: Linear,
    classifier: Linear,
}

impl ReferenceScorer {
    pub fn new(config: ScorerConfig) -> Self {
        let mut b = ParamBuilder::new(config.seed);
        let token_embedding = b.embedding("token_embedding".into(), config.vocab_size, config.dim);
        let position_embedding = b.embedding("position_embedding".into(), config.max_len, config.dim);
        let blocks = (0..config.layers)
            .map(|l| b.encoder_block(&alloc::format!("block{l}"), config.dim, config.heads, config.ff_dim))
            .collect();
        let final_norm = b.layer_norm("final_norm", config.dim);
        let pooler = b.linear("head.pooler", config.dim, config.dim);
        let classifier = b.linear("head.classifier", config.dim, 1);
        Self {
            config,
            params: b.params,
            token_embedding,
            position_embedding,
            blocks,
            final_norm,
            pooler,
            classifier,
        }
    }
}

/// The desk-scale default scorer: dim 32, 2 heads, feed-forward 64, 2 blocks.
pub fn reference_scorer_spec(vocab_size: usize, max_len: usize, seed: u64) -> ReferenceScorer {
    ReferenceScorer::new(ScorerConfig { vocab_size, max_len, seed, ..Default::default() })
}

impl HasParameters for ReferenceScorer {
    fn parameters(&self) -> &Parameters {
        &self.params
    }
    fn parameters_mut(&mut self) -> &mut Parameters {
        &mut self.params
    }
}

impl ScorerModel for ReferenceScorer {
    fn logit(&self, t: &mut Tape<'_>, input: &ExtractorInput) -> Var {
        let ids: Vec<usize> = input.token_ids.iter().map(|&i| i as usize).collect();
        let positions: Vec<usize> = (0..ids.len()).collect();
        let tok = t.param(self.token_embedding);
        let pos = t.param(self.position_embedding);
        let te = t.gather(tok, &ids);
        let pe = t.gather(pos, &positions);
        let mut x = t.add(te, pe);
        let mask = AttentionMask::Keys(input.attention_mask.iter().map(|&m| m == 1).collect());
        for block in &self.blocks {
            x = block.forward(t, x, &mask);
        }
        let x = self.final_norm.forward(t, x);
        let pooled = t.gather(x, &[0]);
        let h = self.pooler.forward(t, pooled);
        let h = t.tanh(h);
        self.classifier.forward(t, h)
    }
}

/// One supervised scorer example.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerExample {
    pub input: ExtractorInput,
    pub target: f64,
}

/// Resolves pairs against the corpus and assembles their inputs.
pub fn scorer_examples(
    pairs: &[LabeledPair],
    corpus: &[Document],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<Vec<ScorerExample>> {
    let by_id: BTreeMap<&str, &Document> = corpus.iter().map(|d| (d.id.as_str(), d)).collect();
    pairs
        .iter()
        .map(|p| {
            let doc = by_id
                .get(p.doc_id.as_str())
                .ok_or_else(|| Error::UnknownDocument(p.doc_id.clone()))?;
            let out_of_range = |index| Error::SentenceOutOfRange { doc_id: p.doc_id.clone(), index };
            let gt = doc.abstract_sents.get(p.abstract_idx).ok_or_else(|| out_of_range(p.abstract_idx))?;
            let cand = doc.body_sents.get(p.body_idx).ok_or_else(|| out_of_range(p.body_idx))?;
            Ok(ScorerExample {
                input: build_extractor_input(gt, cand, vocab, max_len)?,
                target: p.label.target(),
            })
        })
        .collect()
}

pub fn scorer_loss<M: ScorerModel>(model: &M, t: &mut Tape<'_>, ex: &ScorerExample) -> Var {
    let z = model.logit(t, &ex.input);
    t.bce_with_logits(z, ex.target)
}

/// Binary cross-entropy training with global-norm clipping.
pub fn train_scorer<M: ScorerModel>(
    pairs: &[LabeledPair],
    corpus: &[Document],
    model: &mut M,
    vocab: &Vocabulary,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let examples = scorer_examples(pairs, corpus, vocab, cfg.max_len)?;
    train_examples(model, &examples, cfg)
}

pub fn train_examples<M: ScorerModel>(model: &mut M, examples: &[ScorerExample], cfg: &TrainConfig) -> Result<TrainReport> {
    train_loop(model, examples, cfg, |m, t, ex| scorer_loss(m, t, ex))
}

/// Fraction of examples whose thresholded probability matches the label.
pub fn accuracy<M: ScorerModel>(model: &M, examples: &[ScorerExample]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let hits = examples
        .iter()
        .filter(|ex| (model.forward(&ex.input) >= 0.5) == (ex.target >= 0.5))
        .count();
    hits as f64 / examples.len() as f64
}

/// Top-`k` by score (ties to the lower index), returned in document order.
pub fn select_top_k(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k < 1 {
        return Err(Error::InvalidK);
    }
    let mut idx = top_k_indices(scores, k);
    idx.sort_unstable();
    Ok(idx)
}

/// Scores every body sentence against `anchor` and keeps the top `k`.
pub fn extract_summary<M: ScorerModel>(
    doc: &Document,
    anchor: &str,
    model: &M,
    k: usize,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<Vec<usize>> {
    if k < 1 {
        return Err(Error::InvalidK);
    }
    let anchor_ids = vocab.tokenize(anchor);
    let scores = doc
        .body_sents
        .iter()
        .map(|s| Ok(model.forward(&assemble_ids(&anchor_ids, &vocab.tokenize(s), vocab, max_len)?)))
        .collect::<Result<Vec<f64>>>()?;
    select_top_k(&scores, k)
}

/// Abstract-anchored selection: each reference abstract sentence nominates
/// its best-scoring body sentence; the `k` best nominees are kept. Uses the
/// reference summary at inference time.
pub fn extract_summary_abstract_anchored<M: ScorerModel>(
    doc: &Document,
    model: &M,
    k: usize,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<Vec<usize>> {
    if k < 1 {
        return Err(Error::InvalidK);
    }
    let body: Vec<Vec<TokenId>> = doc.body_sents.iter().map(|s| vocab.tokenize(s)).collect();
    let mut nominees: Vec<(usize, f64)> = Vec::new();
    for a in &doc.abstract_sents {
        let gt = vocab.tokenize(a);
        let scores = body
            .iter()
            .map(|c| Ok(model.forward(&assemble_ids(&gt, c, vocab, max_len)?)))
            .collect::<Result<Vec<f64>>>()?;
        let Some(&j) = top_k_indices(&scores, 1).first() else { continue };
        match nominees.iter_mut().find(|(i, _)| *i == j) {
            Some(n) => n.1 = n.1.max(scores[j]),
            None => nominees.push((j, scores[j])),
        }
    }
    nominees.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    nominees.truncate(k);
    let mut out: Vec<usize> = nominees.into_iter().map(|(j, _)| j).collect();
    out.sort_unstable();
    Ok(out)
}

/// What stands in for the ground-truth sentence at inference time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorProtocol {
    /// First sentence of the introduction section (first body sentence when
    /// the document has no sections).
    #[default]
    IntroFirstSentence,
    /// An empty anchor: `[CLS] [CLS] candidate`.
    Empty,
    /// Each reference abstract sentence in turn (leaks the target).
    AbstractAnchored,
}

impl AnchorProtocol {
    pub fn label(self) -> &'static str {
        match self {
            AnchorProtocol::IntroFirstSentence => "intro-first-sentence",
            AnchorProtocol::Empty => "empty",
            AnchorProtocol::AbstractAnchored => "abstract-anchored",
        }
    }
}

pub fn intro_anchor(doc: &Document) -> String {
    doc.introduction()
        .and_then(|s| doc.body_sents.get(s.start))
        .or_else(|| doc.body_sents.first())
        .cloned()
        .unwrap_or_default()
}

/// Runs selection under the given anchor protocol.
pub fn select_with_protocol<M: ScorerModel>(
    doc: &Document,
    protocol: AnchorProtocol,
    model: &M,
    k: usize,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<Vec<usize>> {
    match protocol {
        AnchorProtocol::IntroFirstSentence => extract_summary(doc, &intro_anchor(doc), model, k, vocab, max_len),
        AnchorProtocol::Empty => extract_summary(doc, "", model, k, vocab, max_len),
        AnchorProtocol::AbstractAnchored => extract_summary_abstract_anchored(doc, model, k, vocab, max_len),
    }
}

/// Mean abstract sentence count over `docs`, rounded, at least 1.
pub fn default_k<'a>(docs: impl IntoIterator<Item = &'a Document>) -> usize {
    let (n, total) = docs
        .into_iter()
        .fold((0usize, 0usize), |(n, t), d| (n + 1, t + d.abstract_sents.len()));
    if n == 0 {
        return 1;
    }
    (libm::round(total as f64 / n as f64) as usize).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::gradcheck::max_relative_error;
    use crate::vocab::RESERVED;
    use alloc::string::ToString;
    use proptest::prelude::*;

    fn vocab() -> Vocabulary {
        Vocabulary::build(["a b c d e f g h i j"], 100)
    }

    #[test]
    fn layout_matches_pair_scheme() {
        let v = vocab();
        let inp = build_extractor_input("a b", "c", &v, 8).unwrap();
        let ids = |s: &str| v.id(s).unwrap();
        assert_eq!(
            inp.token_ids,
            [ids("[CLS]"), ids("a"), ids("b"), ids("[CLS]"), ids("c"), ids("[PAD]"), ids("[PAD]"), ids("[PAD]")]
        );
        assert_eq!(inp.attention_mask, [1, 1, 1, 1, 1, 0, 0, 0]);
    }

    #[test]
    fn empty_candidate() {
        let v = vocab();
        let inp = build_extractor_input("a b", "", &v, 6).unwrap();
        assert_eq!(inp.token_ids[..4], [v.cls_id(), v.id("a").unwrap(), v.id("b").unwrap(), v.cls_id()]);
        assert_eq!(inp.real_len(), 4);
    }

    #[test]
    fn truncation_prefers_candidate() {
        let v = vocab();
        let gt = vec![v.id("a").unwrap(); 300];
        let cand = vec![v.id("b").unwrap(); 300];
        let inp = assemble_ids(&gt, &cand, &v, 512).unwrap();
        let b = v.id("b").unwrap();
        assert_eq!(inp.token_ids.iter().filter(|&&t| t == b).count(), 210);
        assert_eq!(inp.token_ids.iter().filter(|&&t| t == v.id("a").unwrap()).count(), 300);
        assert_eq!(inp.real_len(), 512);
        // anchor alone too long: anchor truncated, both CLS kept
        let inp = assemble_ids(&[v.id("a").unwrap(); 20], &cand, &v, 8).unwrap();
        assert_eq!(inp.token_ids.iter().filter(|&&t| t == v.cls_id()).count(), 2);
        assert_eq!(inp.token_ids[7], v.cls_id());
    }

    #[test]
    fn tiny_max_len_rejected() {
        assert_eq!(build_extractor_input("a", "b", &vocab(), 3), Err(Error::MaxLenTooSmall(3)));
    }

    proptest! {
        #[test]
        fn input_invariants(
            gt in proptest::collection::vec(10u32..20, 0..40),
            cand in proptest::collection::vec(10u32..20, 0..40),
            max_len in 4usize..64,
        ) {
            let v = vocab();
            let inp = assemble_ids(&gt, &cand, &v, max_len).unwrap();
            prop_assert_eq!(inp.token_ids.len(), max_len);
            prop_assert_eq!(inp.attention_mask.len(), max_len);
            prop_assert_eq!(inp.token_ids.iter().filter(|&&t| t == v.cls_id()).count(), 2);
            prop_assert_eq!(inp.token_ids[0], v.cls_id());
            let real = inp.real_len();
            prop_assert_eq!(real, (gt.len() + cand.len() + 2).min(max_len));
            for (i, (&t, &m)) in inp.token_ids.iter().zip(&inp.attention_mask).enumerate() {
                prop_assert_eq!(m == 0, i >= real);
                prop_assert_eq!(t == v.pad_id(), i >= real);
            }
        }
    }

    fn tiny(seed: u64) -> ReferenceScorer {
        ReferenceScorer::new(ScorerConfig { vocab_size: 20, dim: 8, heads: 2, ff_dim: 16, layers: 2, max_len: 12, seed })
    }

    fn tiny_vocab() -> Vocabulary {
        let mut toks: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        for c in ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"] {
            toks.push(c.to_string());
        }
        Vocabulary::from_tokens(toks).unwrap()
    }

    #[test]
    fn output_is_probability_and_pad_invariant() {
        let v = tiny_vocab();
        let m = tiny(1);
        let short = build_extractor_input("a b c", "d e", &v, 8).unwrap();
        let long = build_extractor_input("a b c", "d e", &v, 12).unwrap();
        let p = m.forward(&short);
        assert!(p > 0.0 && p < 1.0);
        assert_eq!(p, m.forward(&long));
        // junk in padded slots is ignored when masked
        let mut junk = long.clone();
        for (t, &mask) in junk.token_ids.iter_mut().zip(&long.attention_mask) {
            if mask == 0 {
                *t = 13;
            }
        }
        assert_eq!(p, m.forward(&junk));
        assert_eq!(p, m.forward(&short));
    }

    #[test]
    fn scorer_gradients_match_finite_differences() {
        let v = tiny_vocab();
        let m = tiny(2);
        let ex = ScorerExample { input: build_extractor_input("a b c", "d e f", &v, 10).unwrap(), target: 1.0 };
        let p = m.parameters();
        let probes: Vec<(ParamId, usize)> = [
            (m.token_embedding, 8 * 10 + 3),
            (m.position_embedding, 5),
            (m.blocks[0].attn.query.weight, 7),
            (m.blocks[1].ff.inner.weight, 20),
            (m.blocks[1].attn_norm.gain, 2),
            (m.pooler.weight, 9),
            (m.classifier.bias, 0),
        ]
        .into();
        let err = max_relative_error(p, &probes, 1e-4, |t| scorer_loss(&m, t, &ex));
        assert!(err <= 1e-3, "relative error {err}");
    }

    struct Fixed(Parameters, Vec<f64>);
    impl HasParameters for Fixed {
        fn parameters(&self) -> &Parameters {
            &self.0
        }
        fn parameters_mut(&mut self) -> &mut Parameters {
            &mut self.0
        }
    }
    impl ScorerModel for Fixed {
        fn logit(&self, t: &mut Tape<'_>, _: &ExtractorInput) -> Var {
            t.constant(crate::autograd::Matrix::filled(1, 1, 0.0))
        }
        fn forward(&self, input: &ExtractorInput) -> f64 {
            // candidate's first token picks a canned score
            let second_cls = input.token_ids.iter().skip(1).position(|&t| t == 2).unwrap() + 2;
            self.1[(input.token_ids[second_cls] as usize) - 10]
        }
    }

    fn doc3() -> Document {
        Document {
            id: "d".into(),
            abstract_sents: vec!["a".into()],
            body_sents: vec!["a".into(), "b".into(), "c".into()],
            sections: vec![],
            word_count: 3,
        }
    }

    #[test]
    fn selection_examples() {
        let v = tiny_vocab();
        let m = Fixed(Parameters::new(), vec![0.9, 0.2, 0.8]);
        assert_eq!(extract_summary(&doc3(), "x", &m, 2, &v, 16).unwrap(), [0, 2]);
        assert_eq!(extract_summary(&doc3(), "x", &m, 5, &v, 16).unwrap(), [0, 1, 2]);
        assert_eq!(extract_summary(&doc3(), "x", &m, 0, &v, 16), Err(Error::InvalidK));
        let flat = Fixed(Parameters::new(), vec![0.5, 0.5, 0.5]);
        assert_eq!(extract_summary(&doc3(), "x", &flat, 2, &v, 16).unwrap(), [0, 1]);
        assert_eq!(extract_summary_abstract_anchored(&doc3(), &m, 2, &v, 16).unwrap(), [0]);
    }

    #[test]
    fn k_defaults_to_mean_abstract_len() {
        let mut d = doc3();
        let d1 = d.clone();
        d.abstract_sents = vec!["a".into(); 4];
        assert_eq!(default_k([&d1, &d]), 3); // round(2.5)
        assert_eq!(default_k(core::iter::empty()), 1);
    }
}
