//! Subword vocabulary and greedy longest-match (WordPiece-style) tokenizer.
//!
//! Word-internal pieces carry a `##` prefix. Reserved tokens such as
//! `[math]` or `[SEP]` are atomic and may appear glued to neighbouring
//! characters.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

pub type TokenId = u32;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const BOS: &str = "[BOS]";
pub const EOS: &str = "[EOS]";

/// Reserved tokens, in id order, at the head of every vocabulary.
pub const RESERVED: [&str; 10] =
    [PAD, UNK, CLS, SEP, BOS, EOS, "[math]", "[graph]", "[table]", "[equation]"];

pub const DEFAULT_MAX_SIZE: usize = 30_525;

const CONTINUATION: &str = "##";
const MAX_WORD_CHARS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, TokenId>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VocabError {
    #[error("duplicate token {0:?}")]
    Duplicate(String),
    #[error("missing reserved token {0}")]
    MissingReserved(&'static str),
}

/// Segments of one whitespace-delimited word.
enum Segment<'a> {
    Special(&'a str),
    Text { text: &'a str, continuation: bool },
}

fn segments(word: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    let mut rest = word;
    let mut continuation = false;
    while !rest.is_empty() {
        let hit = RESERVED
            .iter()
            .filter_map(|t| rest.find(t).map(|p| (p, *t)))
            .min_by_key(|(p, _)| *p);
        match hit {
            Some((0, tok)) => {
                out.push(Segment::Special(&rest[..tok.len()]));
                rest = &rest[tok.len()..];
                continuation = true;
            }
            Some((p, _)) => {
                out.push(Segment::Text { text: &rest[..p], continuation });
                rest = &rest[p..];
                continuation = true;
            }
            None => {
                out.push(Segment::Text { text: rest, continuation });
                rest = "";
            }
        }
    }
    out
}

impl Vocabulary {
    /// Builds a vocabulary from tokens listed in id order. Reserved tokens
    /// must all be present.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, VocabError> {
        let mut index = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(VocabError::Duplicate(t.clone()));
            }
        }
        for r in RESERVED {
            if !index.contains_key(r) {
                return Err(VocabError::MissingReserved(r));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Reserved tokens, then every character seen (as word-initial and
    /// `##` continuation pieces), then whole words by descending frequency
    /// until `max_size` is reached.
    pub fn build<'a, I>(sentences: I, max_size: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut word_freq: BTreeMap<&'a str, usize> = BTreeMap::new();
        let mut chars: BTreeMap<String, ()> = BTreeMap::new();
        for sent in sentences {
            for word in sent.split_whitespace() {
                for seg in segments(word) {
                    if let Segment::Text { text, continuation } = seg {
                        for (k, c) in text.chars().enumerate() {
                            let piece = if k == 0 && !continuation {
                                c.to_string()
                            } else {
                                format!("{CONTINUATION}{c}")
                            };
                            chars.insert(piece, ());
                        }
                        if !continuation {
                            *word_freq.entry(text).or_insert(0) += 1;
                        }
                    }
                }
            }
        }
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut seen: BTreeMap<String, ()> = tokens.iter().map(|t| (t.clone(), ())).collect();
        let mut push = |t: String, tokens: &mut Vec<String>| {
            if tokens.len() < max_size.max(RESERVED.len()) && seen.insert(t.clone(), ()).is_none() {
                tokens.push(t);
            }
        };
        for (c, ()) in chars {
            push(c, &mut tokens);
        }
        let mut words: Vec<(&str, usize)> = word_freq.into_iter().collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        for (w, _) in words {
            if w.chars().count() > 1 {
                push(w.to_string(), &mut tokens);
            }
        }
        Self::from_tokens(tokens).expect("reserved tokens are inserted first")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    fn reserved(&self, token: &'static str) -> TokenId {
        self.index[token]
    }

    pub fn pad_id(&self) -> TokenId {
        self.reserved(PAD)
    }
    pub fn unk_id(&self) -> TokenId {
        self.reserved(UNK)
    }
    pub fn cls_id(&self) -> TokenId {
        self.reserved(CLS)
    }
    pub fn sep_id(&self) -> TokenId {
        self.reserved(SEP)
    }
    pub fn bos_id(&self) -> TokenId {
        self.reserved(BOS)
    }
    pub fn eos_id(&self) -> TokenId {
        self.reserved(EOS)
    }

    /// Greedy longest-match segmentation. A word with any unmatched span
    /// becomes a single `[UNK]`.
    pub fn tokenize(&self, sentence: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        for word in sentence.split_whitespace() {
            for seg in segments(word) {
                match seg {
                    Segment::Special(t) => out.push(self.id(t).unwrap_or(self.unk_id())),
                    Segment::Text { text, continuation } => {
                        self.tokenize_piece(text, continuation, &mut out)
                    }
                }
            }
        }
        out
    }

    fn tokenize_piece(&self, text: &str, continuation: bool, out: &mut Vec<TokenId>) {
        if text.chars().count() > MAX_WORD_CHARS {
            out.push(self.unk_id());
            return;
        }
        let boundaries: Vec<usize> = text
            .char_indices()
            .map(|(i, _)| i)
            .chain(core::iter::once(text.len()))
            .collect();
        let mut pieces = Vec::new();
        let mut start = 0;
        let mut buf = String::new();
        while start < boundaries.len() - 1 {
            let mut found = None;
            for end in (start + 1..boundaries.len()).rev() {
                let sub = &text[boundaries[start]..boundaries[end]];
                buf.clear();
                if start > 0 || continuation {
                    buf.push_str(CONTINUATION);
                }
                buf.push_str(sub);
                if let Some(id) = self.id(&buf) {
                    found = Some((id, end));
                    break;
                }
            }
            match found {
                Some((id, end)) => {
                    pieces.push(id);
                    start = end;
                }
                None => {
                    out.push(self.unk_id());
                    return;
                }
            }
        }
        out.extend(pieces);
    }

    /// Joins pieces, gluing `##` continuations to their predecessor.
    /// Padding is skipped.
    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for &id in ids {
            if id == self.pad_id() {
                continue;
            }
            let tok = self.token(id).unwrap_or(UNK);
            match tok.strip_prefix(CONTINUATION) {
                Some(rest) if !rest.is_empty() => out.push_str(rest),
                _ => {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(tok);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const CORPUS: &[&str] = &[
        "the model learns [math]. quickly",
        "we evaluate the models on arxiv papers.",
        "results improve with [equation]-based conditioning",
    ];

    #[test]
    fn reserved_ids_are_fixed_and_distinct() {
        let v = Vocabulary::build(CORPUS.iter().copied(), 1000);
        for (i, r) in RESERVED.iter().enumerate() {
            assert_eq!(v.id(r), Some(i as TokenId));
        }
        assert!(v.len() <= DEFAULT_MAX_SIZE);
    }

    #[test]
    fn special_tokens_atomic() {
        let v = Vocabulary::build(CORPUS.iter().copied(), 1000);
        assert_eq!(v.tokenize("[math]"), vec![v.id("[math]").unwrap()]);
        assert_eq!(v.tokenize("model"), vec![v.id("model").unwrap()]);
    }

    #[test]
    fn subword_fallback() {
        let v = Vocabulary::build(CORPUS.iter().copied(), 1000);
        let ids = v.tokenize("modelss");
        assert!(ids.len() > 1);
        assert_eq!(v.detokenize(&ids), "modelss");
    }

    #[test]
    fn unknown_character_gives_unk() {
        let v = Vocabulary::build(CORPUS.iter().copied(), 1000);
        assert_eq!(v.tokenize("zzz"), vec![v.unk_id()]);
    }

    #[test]
    fn round_trip_on_fixture_corpus() {
        let v = Vocabulary::build(CORPUS.iter().copied(), 1000);
        for s in CORPUS {
            assert_eq!(v.detokenize(&v.tokenize(s)), *s);
        }
    }

    #[test]
    fn round_trip_with_tiny_vocab() {
        // only characters fit, so every word is spelled out
        let v = Vocabulary::build(CORPUS.iter().copied(), 40);
        assert!(v.len() <= 40);
        for s in CORPUS {
            let back = v.detokenize(&v.tokenize(s));
            let unk_free: Vec<&str> = s.split_whitespace().collect();
            let got: Vec<&str> = back.split_whitespace().collect();
            assert_eq!(got.len(), unk_free.len());
            for (g, w) in got.iter().zip(&unk_free) {
                assert!(g == w || g.contains(UNK), "{g} vs {w}");
            }
        }
    }

    #[test]
    fn from_tokens_validates() {
        let mut toks: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        assert!(Vocabulary::from_tokens(toks.clone()).is_ok());
        toks.push("[PAD]".into());
        assert_eq!(Vocabulary::from_tokens(toks), Err(VocabError::Duplicate("[PAD]".into())));
        assert_eq!(
            Vocabulary::from_tokens(vec!["a".into()]),
            Err(VocabError::MissingReserved(PAD))
        );
    }
}
