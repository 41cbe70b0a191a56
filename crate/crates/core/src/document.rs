//! Corpus records, normalized documents and train/validation/test splits.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::text::{normalize_text, split_sentences};

/// A text field that the arxiv dump stores either as one string or as a
/// list of sentence strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TextField {
    One(String),
    Many(Vec<String>),
}

impl Default for TextField {
    fn default() -> Self {
        TextField::One(String::new())
    }
}

impl TextField {
    fn pieces(&self) -> Vec<&str> {
        match self {
            TextField::One(s) => alloc::vec![s.as_str()],
            TextField::Many(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

/// One line of the input dataset. `labels` and any other extra keys are
/// ignored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub article_id: String,
    #[serde(default)]
    pub abstract_text: TextField,
    #[serde(default)]
    pub article_text: TextField,
    #[serde(default)]
    pub section_names: Vec<String>,
    #[serde(default)]
    pub sections: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    /// Half-open range into `Document::body_sents`.
    pub start: usize,
    pub end: usize,
}

impl Section {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub abstract_sents: Vec<String>,
    pub body_sents: Vec<String>,
    pub sections: Vec<Section>,
    pub word_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub min_words: usize,
    pub max_words: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { min_words: 100, max_words: 20_000 }
    }
}

/// Why a record did not become a [`Document`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exclusion {
    EmptyAbstract,
    EmptyBody,
    TooShort(usize),
    TooLong(usize),
}

fn strip_sentence_tags(s: &str) -> String {
    s.replace("<S>", " ").replace("</S>", " ")
}

fn sentences_of(pieces: &[&str]) -> Vec<String> {
    pieces
        .iter()
        .flat_map(|p| split_sentences(&normalize_text(&strip_sentence_tags(p))))
        .collect()
}

impl Document {
    /// Normalizes and segments a raw record, applying the emptiness and
    /// length filters.
    pub fn from_record(raw: &RawRecord, filters: &FilterConfig) -> Result<Document, Exclusion> {
        let abstract_sents = sentences_of(&raw.abstract_text.pieces());
        if abstract_sents.is_empty() {
            return Err(Exclusion::EmptyAbstract);
        }

        let mut body_sents = Vec::new();
        let mut sections = Vec::new();
        for (name, paragraphs) in raw.section_names.iter().zip(&raw.sections) {
            let pieces: Vec<&str> = paragraphs.iter().map(String::as_str).collect();
            let sents = sentences_of(&pieces);
            if sents.is_empty() {
                continue;
            }
            let start = body_sents.len();
            body_sents.extend(sents);
            sections.push(Section {
                name: normalize_text(name),
                start,
                end: body_sents.len(),
            });
        }
        if body_sents.is_empty() {
            body_sents = sentences_of(&raw.article_text.pieces());
        }
        if body_sents.is_empty() {
            return Err(Exclusion::EmptyBody);
        }

        let word_count = body_sents.iter().map(|s| s.split_whitespace().count()).sum();
        if word_count < filters.min_words {
            return Err(Exclusion::TooShort(word_count));
        }
        if word_count > filters.max_words {
            return Err(Exclusion::TooLong(word_count));
        }

        Ok(Document {
            id: raw.article_id.clone(),
            abstract_sents,
            body_sents,
            sections,
            word_count,
        })
    }

    fn section_matching(&self, needle: &str) -> Option<&Section> {
        self.sections
            .iter()
            .find(|s| s.name.to_lowercase().contains(needle))
    }

    /// Section whose name contains "introduction", else the first section.
    pub fn introduction(&self) -> Option<&Section> {
        self.section_matching("introduction").or_else(|| self.sections.first())
    }

    /// Section whose name contains "conclusion", else the last section.
    pub fn conclusion(&self) -> Option<&Section> {
        self.section_matching("conclusion").or_else(|| self.sections.last())
    }

    pub fn section_text(&self, section: &Section) -> String {
        self.body_sents[section.range()].join(" ")
    }

    pub fn abstract_text(&self) -> String {
        self.abstract_sents.join(" ")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: BTreeSet<String>,
    pub validation: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

/// Share of documents held out for each of validation and test.
pub const HELD_OUT_FRACTION: f64 = 0.05;

impl SplitAssignment {
    /// Sorts ids, shuffles them with `seed`, and assigns the last
    /// `round(0.05 N)` + `round(0.05 N)` ids to validation and test.
    pub fn assign<S: AsRef<str>>(ids: &[S], seed: u64) -> SplitAssignment {
        let mut ids: Vec<String> = ids.iter().map(|s| String::from(s.as_ref())).collect();
        ids.sort();
        ids.dedup();
        let mut rng = rng::seeded(seed);
        ids.shuffle(&mut rng);

        let n = ids.len();
        let held = libm::round(HELD_OUT_FRACTION * n as f64) as usize;
        let train_len = n - 2 * held;
        let mut split = SplitAssignment::default();
        for (i, id) in ids.into_iter().enumerate() {
            if i < train_len {
                split.train.insert(id);
            } else if i < train_len + held {
                split.validation.insert(id);
            } else {
                split.test.insert(id);
            }
        }
        split
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::ToString;
    use alloc::vec;

    fn words(n: usize) -> String {
        let mut s = String::new();
        for i in 0..n {
            s.push_str(if i % 10 == 9 { "word. " } else { "word " });
        }
        s
    }

    fn record(id: &str, abs: &str, body: &str) -> RawRecord {
        RawRecord {
            article_id: id.to_string(),
            abstract_text: TextField::One(abs.to_string()),
            article_text: TextField::One(body.to_string()),
            ..Default::default()
        }
    }

    #[test]
    fn empty_abstract_excluded() {
        let r = record("a", "", &words(200));
        assert_eq!(Document::from_record(&r, &FilterConfig::default()), Err(Exclusion::EmptyAbstract));
    }

    #[test]
    fn short_body_excluded() {
        let r = record("a", "this is the abstract.", &words(10));
        assert_eq!(
            Document::from_record(&r, &FilterConfig::default()),
            Err(Exclusion::TooShort(10))
        );
    }

    #[test]
    fn long_body_excluded() {
        let r = record("a", "this is the abstract.", &words(300));
        let f = FilterConfig { min_words: 1, max_words: 100 };
        assert_eq!(Document::from_record(&r, &f), Err(Exclusion::TooLong(300)));
    }

    #[test]
    fn sections_give_ranges() {
        let r = RawRecord {
            article_id: "x".into(),
            abstract_text: TextField::Many(vec!["<S> we study cats here . </S>".into()]),
            article_text: TextField::One(String::new()),
            section_names: vec!["Introduction".into(), "empty".into(), "Conclusions".into()],
            sections: vec![
                vec!["cats are small animals. they like milk a lot.".into()],
                vec![],
                vec!["so cats are good pets.".into()],
            ],
        };
        let d = Document::from_record(&r, &FilterConfig { min_words: 1, max_words: 1000 }).unwrap();
        assert_eq!(d.abstract_sents, ["we study cats here ."]);
        assert_eq!(d.body_sents.len(), 3);
        assert_eq!(d.sections.len(), 2);
        assert_eq!(d.introduction().unwrap().range(), 0..2);
        assert_eq!(d.conclusion().unwrap().range(), 2..3);
        assert_eq!(d.word_count, 14);
    }

    #[test]
    fn section_fallbacks() {
        let d = Document {
            id: "d".into(),
            abstract_sents: vec!["a b c".into()],
            body_sents: vec!["x y z".into(); 4],
            sections: vec![
                Section { name: "background".into(), start: 0, end: 2 },
                Section { name: "results".into(), start: 2, end: 4 },
            ],
            word_count: 12,
        };
        assert_eq!(d.introduction().unwrap().name, "background");
        assert_eq!(d.conclusion().unwrap().name, "results");
    }

    #[test]
    fn hundred_docs_split_90_5_5() {
        let ids: Vec<String> = (0..100).map(|i| format!("doc{i:03}")).collect();
        let s = SplitAssignment::assign(&ids, 7);
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (90, 5, 5));
        assert!(s.train.is_disjoint(&s.validation));
        assert!(s.train.is_disjoint(&s.test));
        assert!(s.validation.is_disjoint(&s.test));
        assert_eq!(s, SplitAssignment::assign(&ids, 7));
        // input order does not matter
        let mut rev = ids.clone();
        rev.reverse();
        assert_eq!(s, SplitAssignment::assign(&rev, 7));
    }

    #[test]
    fn small_corpus_rounding() {
        let ids: Vec<String> = (0..50).map(|i| format!("d{i}")).collect();
        let s = SplitAssignment::assign(&ids, 1);
        // round(2.5) = 3
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (44, 3, 3));
        let one = SplitAssignment::assign(&["only"], 1);
        assert_eq!(one.train.len(), 1);
    }
}
