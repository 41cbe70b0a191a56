//! Back-translation through a pivot language.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::text::{normalize_text, split_sentences};

pub trait Translator {
    /// Direction label, e.g. `en->de`.
    fn label(&self) -> &str;

    fn translate(&self, text: &str) -> core::result::Result<String, String>;
}

/// Translates each sentence forward then backward and normalizes the result.
pub fn back_translate_sentences<F, B>(sentences: &[String], forward: &F, backward: &B) -> Result<Vec<String>>
where
    F: Translator + ?Sized,
    B: Translator + ?Sized,
{
    sentences
        .iter()
        .enumerate()
        .map(|(index, s)| {
            let fail = |dir: &str, e: String| Error::Translation { index, message: alloc::format!("{dir}: {e}") };
            let pivot = forward.translate(s).map_err(|e| fail(forward.label(), e))?;
            let back = backward.translate(&pivot).map_err(|e| fail(backward.label(), e))?;
            Ok(normalize_text(&back))
        })
        .collect()
}

/// Sentence-by-sentence back-translation of `text`, rejoined with single spaces.
pub fn back_translate<F, B>(text: &str, forward: &F, backward: &B) -> Result<String>
where
    F: Translator + ?Sized,
    B: Translator + ?Sized,
{
    let sentences = split_sentences(text);
    Ok(back_translate_sentences(&sentences, forward, backward)?.join(" "))
}

pub struct Identity;

impl Translator for Identity {
    fn label(&self) -> &str {
        "identity"
    }
    fn translate(&self, text: &str) -> core::result::Result<String, String> {
        Ok(text.to_owned())
    }
}

/// Reverses whitespace token order; an involution.
pub struct Reverse;

impl Translator for Reverse {
    fn label(&self) -> &str {
        "reverse"
    }
    fn translate(&self, text: &str) -> core::result::Result<String, String> {
        let mut toks: Vec<&str> = text.split_whitespace().collect();
        toks.reverse();
        Ok(toks.join(" "))
    }
}

/// Word-for-word substitution; unmapped tokens pass through.
pub struct Lexicon {
    label: String,
    table: BTreeMap<String, String>,
}

impl Lexicon {
    pub fn new(label: impl Into<String>, table: BTreeMap<String, String>) -> Self {
        Self { label: label.into(), table }
    }

    /// Inverse mapping; when several sources share a target the
    /// lexicographically first source wins.
    pub fn inverse(&self, label: impl Into<String>) -> Self {
        let mut inv: BTreeMap<String, String> = BTreeMap::new();
        for (src, dst) in &self.table {
            inv.entry(dst.clone()).or_insert_with(|| src.clone());
        }
        Self::new(label, inv)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl Translator for Lexicon {
    fn label(&self) -> &str {
        &self.label
    }
    fn translate(&self, text: &str) -> core::result::Result<String, String> {
        let out: Vec<&str> = text
            .split_whitespace()
            .map(|w| self.table.get(w).map_or(w, String::as_str))
            .collect();
        Ok(out.join(" "))
    }
}

/// Fails on any sentence containing `marker`.
pub struct Failing {
    pub marker: String,
}

impl Translator for Failing {
    fn label(&self) -> &str {
        "failing"
    }
    fn translate(&self, text: &str) -> core::result::Result<String, String> {
        if text.contains(self.marker.as_str()) {
            Err(alloc::format!("cannot translate {:?}", self.marker))
        } else {
            Ok(text.to_owned())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rouge::avg_f;
    use crate::text::rouge_tokens;
    use alloc::vec;

    const FIXTURES: &[&str] = &[
        "the model learns quickly. results improve with more data.",
        "we evaluate large models on scientific papers. the method works well.",
        "a small network reads long documents. summaries become short.",
    ];

    /// Pairs of source words share one pivot word, so the inverse restores
    /// only the first of each pair.
    fn colliding_table() -> Lexicon {
        let pairs = [
            ("model", "x1"), ("network", "x1"),
            ("learns", "x2"), ("reads", "x2"),
            ("quickly", "x3"), ("well", "x3"),
            ("results", "x4"), ("summaries", "x4"),
            ("data", "x5"), ("method", "x6"),
        ];
        Lexicon::new("en->pivot", pairs.iter().map(|(a, b)| ((*a).into(), (*b).into())).collect())
    }

    #[test]
    fn identity_and_reverse_round_trip() {
        for text in FIXTURES {
            assert_eq!(back_translate(text, &Identity, &Identity).unwrap(), *text);
            assert_eq!(back_translate(text, &Reverse, &Reverse).unwrap(), *text);
        }
    }

    #[test]
    fn lossy_lexicon_keeps_half() {
        let fwd = colliding_table();
        let bwd = fwd.inverse("pivot->en");
        let mut changed = 0;
        for text in FIXTURES {
            let out = back_translate(text, &fwd, &bwd).unwrap();
            changed += usize::from(out != *text);
            let f = avg_f(&rouge_tokens(&out), &rouge_tokens(text));
            assert!(f >= 0.5, "{out:?}: {f}");
            assert_eq!(split_sentences(&out).len(), split_sentences(text).len());
        }
        assert!(changed > 0);
    }

    #[test]
    fn output_is_normalized() {
        let fwd = colliding_table();
        let bwd = fwd.inverse("back");
        for text in FIXTURES {
            let out = back_translate(text, &fwd, &bwd).unwrap();
            assert_eq!(normalize_text(&out), out);
        }
    }

    #[test]
    fn failure_reports_sentence_index() {
        let f = Failing { marker: "works".into() };
        let err = back_translate(FIXTURES[1], &Identity, &f).unwrap_err();
        assert!(matches!(err, Error::Translation { index: 1, .. }), "{err:?}");
        let sents = vec![String::from("fine text here.")];
        assert!(back_translate_sentences(&sents, &f, &Identity).is_ok());
    }
}
