//! Corpus-level ROUGE evaluation over a split.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::document::Document;
use crate::error::{Error, Result};
use crate::rouge::{corpus_average, score_texts, RougeTriple};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocScore {
    pub doc_id: String,
    pub scores: RougeTriple,
}

fn split_docs<'a>(corpus: &'a [Document], split: &BTreeSet<String>) -> Result<Vec<&'a Document>> {
    let by_id: BTreeMap<&str, &Document> = corpus.iter().map(|d| (d.id.as_str(), d)).collect();
    split
        .iter()
        .map(|id| by_id.get(id.as_str()).copied().ok_or_else(|| Error::UnknownDocument(id.clone())))
        .collect()
}

/// Per-document scores of joined selected sentences against the joined abstract.
pub fn score_extractive(
    selections: &BTreeMap<String, Vec<usize>>,
    corpus: &[Document],
    split: &BTreeSet<String>,
) -> Result<Vec<DocScore>> {
    split_docs(corpus, split)?
        .into_iter()
        .map(|doc| {
            let sel = selections.get(&doc.id).ok_or_else(|| Error::MissingSelection(doc.id.clone()))?;
            let mut sents = Vec::with_capacity(sel.len());
            for &i in sel {
                let s = doc
                    .body_sents
                    .get(i)
                    .ok_or(Error::SentenceOutOfRange { doc_id: doc.id.clone(), index: i })?;
                sents.push(s.as_str());
            }
            Ok(DocScore { doc_id: doc.id.clone(), scores: score_texts(&sents.join(" "), &doc.abstract_text()) })
        })
        .collect()
}

/// Per-document scores of generated text against the joined abstract.
pub fn score_abstractive(
    generated: &BTreeMap<String, String>,
    corpus: &[Document],
    split: &BTreeSet<String>,
) -> Result<Vec<DocScore>> {
    split_docs(corpus, split)?
        .into_iter()
        .map(|doc| {
            let text = generated.get(&doc.id).ok_or_else(|| Error::MissingSelection(doc.id.clone()))?;
            Ok(DocScore { doc_id: doc.id.clone(), scores: score_texts(text, &doc.abstract_text()) })
        })
        .collect()
}

pub fn average(rows: &[DocScore]) -> Result<RougeTriple> {
    let triples: Vec<RougeTriple> = rows.iter().map(|r| r.scores).collect();
    corpus_average(&triples)
}

pub fn evaluate_extractive(
    selections: &BTreeMap<String, Vec<usize>>,
    corpus: &[Document],
    split: &BTreeSet<String>,
) -> Result<RougeTriple> {
    average(&score_extractive(selections, corpus, split)?)
}

pub fn evaluate_abstractive(
    generated: &BTreeMap<String, String>,
    corpus: &[Document],
    split: &BTreeSet<String>,
) -> Result<RougeTriple> {
    average(&score_abstractive(generated, corpus, split)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rouge::{lcs_len, rouge_n};
    use crate::text::rouge_tokens;
    use alloc::string::ToString;
    use alloc::vec;

    fn doc(id: &str, abs: &[&str], body: &[&str]) -> Document {
        Document {
            id: id.into(),
            abstract_sents: abs.iter().map(|s| s.to_string()).collect(),
            body_sents: body.iter().map(|s| s.to_string()).collect(),
            sections: vec![],
            word_count: 0,
        }
    }

    fn corpus() -> Vec<Document> {
        vec![
            doc("a", &["the cat sat on the mat."], &["intro words here.", "the cat sat on the mat.", "more text follows now."]),
            doc("b", &["dogs bark loudly.", "cats meow softly."], &["dogs bark loudly.", "birds sing.", "cats meow softly at night."]),
            doc("c", &["a short abstract text."], &["completely unrelated body text.", "a short text abstract."]),
        ]
    }

    fn ids(c: &[Document]) -> BTreeSet<String> {
        c.iter().map(|d| d.id.clone()).collect()
    }

    #[test]
    fn verbatim_selection_is_perfect() {
        let c = corpus();
        let split: BTreeSet<String> = ["a".to_string()].into();
        let sel: BTreeMap<String, Vec<usize>> = [("a".to_string(), vec![1])].into();
        let r = evaluate_extractive(&sel, &c, &split).unwrap();
        assert_eq!(r.r1.f1, 1.0);
        assert_eq!(r.rl.f1, 1.0);
    }

    #[test]
    fn empty_outputs_score_zero() {
        let c = corpus();
        let sel: BTreeMap<String, Vec<usize>> = c.iter().map(|d| (d.id.clone(), vec![])).collect();
        let r = evaluate_extractive(&sel, &c, &ids(&c)).unwrap();
        assert!(r.values().iter().all(|v| *v == 0.0));
        let gen: BTreeMap<String, String> = c.iter().map(|d| (d.id.clone(), String::new())).collect();
        let r = evaluate_abstractive(&gen, &c, &ids(&c)).unwrap();
        assert!(r.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn abstracts_score_one() {
        let c = corpus();
        let gen: BTreeMap<String, String> = c.iter().map(|d| (d.id.clone(), d.abstract_text())).collect();
        let r = evaluate_abstractive(&gen, &c, &ids(&c)).unwrap();
        assert_eq!((r.r1.f1, r.r2.f1, r.rl.f1), (1.0, 1.0, 1.0));
    }

    fn f1(overlap: usize, c: usize, r: usize) -> f64 {
        if overlap == 0 {
            return 0.0;
        }
        let (p, q) = (overlap as f64 / c as f64, overlap as f64 / r as f64);
        2.0 * p * q / (p + q)
    }

    #[test]
    fn three_docs_match_direct_metric_calls() {
        let c = corpus();
        let sel: BTreeMap<String, Vec<usize>> =
            [("a".to_string(), vec![0, 1]), ("b".to_string(), vec![2]), ("c".to_string(), vec![1])].into();
        let r = evaluate_extractive(&sel, &c, &ids(&c)).unwrap();
        let mut expect = [0.0; 3];
        for d in &c {
            let cand: Vec<&str> = sel[&d.id].iter().map(|&i| d.body_sents[i].as_str()).collect();
            let ct = rouge_tokens(&cand.join(" "));
            let rt = rouge_tokens(&d.abstract_text());
            expect[0] += rouge_n(&ct, &rt, 1).unwrap().f1 / 3.0;
            expect[1] += rouge_n(&ct, &rt, 2).unwrap().f1 / 3.0;
            expect[2] += f1(lcs_len(&ct, &rt), ct.len(), rt.len()) / 3.0;
        }
        assert!((r.r1.f1 - expect[0]).abs() < 1e-12);
        assert!((r.r2.f1 - expect[1]).abs() < 1e-12);
        assert!((r.rl.f1 - expect[2]).abs() < 1e-12);
    }

    #[test]
    fn two_docs_abstractive_matches_direct() {
        let c = corpus();
        let split: BTreeSet<String> = ["a".to_string(), "b".to_string()].into();
        let gen: BTreeMap<String, String> =
            [("a".to_string(), "the cat sat".to_string()), ("b".to_string(), "dogs bark softly".to_string())].into();
        let r = evaluate_abstractive(&gen, &c, &split).unwrap();
        let direct: Vec<RougeTriple> = ["a", "b"]
            .iter()
            .map(|id| {
                let d = c.iter().find(|d| d.id == *id).unwrap();
                score_texts(&gen[*id], &d.abstract_text())
            })
            .collect();
        let mean = (direct[0].r1.f1 + direct[1].r1.f1) / 2.0;
        assert!((r.r1.f1 - mean).abs() < 1e-12);
    }

    #[test]
    fn missing_selection_is_error() {
        let c = corpus();
        let sel: BTreeMap<String, Vec<usize>> = [("a".to_string(), vec![1])].into();
        assert_eq!(evaluate_extractive(&sel, &c, &ids(&c)), Err(Error::MissingSelection("b".into())));
        let unknown: BTreeSet<String> = ["zz".to_string()].into();
        assert_eq!(evaluate_extractive(&sel, &c, &unknown), Err(Error::UnknownDocument("zz".into())));
    }
}
