//! Label mining for the extractive scorer and the ROUGE-greedy gold extract.
//!
//! Every abstract sentence is scored against every body sentence with
//! [`avg_f`]. The two best body sentences of a row become positive pairs and
//! two randomly drawn others become negatives.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::document::Document;
use crate::rng;
use crate::rouge::avg_f;
use crate::text::rouge_tokens;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn target(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub doc_id: String,
    pub abstract_idx: usize,
    pub body_idx: usize,
    pub label: Label,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldExtract {
    pub doc_id: String,
    pub selected_body_idxs: Vec<usize>,
}

/// Which pairs compete for the two positive slots.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PositiveScope {
    /// Two positives and two negatives per abstract sentence.
    #[default]
    PerSentence,
    /// Two positives and two negatives per document.
    PerDocument,
}

/// `scores[i][j] = avg_f(body[j] as candidate, abstract[i] as reference)`.
pub fn score_all_pairs(doc: &Document) -> Vec<Vec<f64>> {
    let body: Vec<Vec<String>> = doc.body_sents.iter().map(|s| rouge_tokens(s)).collect();
    doc.abstract_sents
        .iter()
        .map(|a| {
            let reference = rouge_tokens(a);
            body.iter().map(|cand| avg_f(cand, &reference)).collect()
        })
        .collect()
}

/// Indices of the `k` largest values, ties broken by lower index, in rank order.
pub fn top_k_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Minimum body length for a document to yield pairs.
pub const MIN_BODY_FOR_PAIRS: usize = 4;

/// Builds the pair dataset for one document. Returns `None` (and logs a
/// warning) when the body has fewer than four sentences.
pub fn build_pair_dataset(doc: &Document, seed: u64, scope: PositiveScope) -> Option<Vec<LabeledPair>> {
    if doc.body_sents.len() < MIN_BODY_FOR_PAIRS {
        log::warn!(
            "skipping {}: {} body sentences, need {}",
            doc.id,
            doc.body_sents.len(),
            MIN_BODY_FOR_PAIRS
        );
        return None;
    }
    let scores = score_all_pairs(doc);
    let mut rng = rng::seeded(rng::derive_seed(seed, &doc.id));
    let pair = |i: usize, j: usize, label| LabeledPair {
        doc_id: doc.id.clone(),
        abstract_idx: i,
        body_idx: j,
        label,
        score: scores[i][j],
    };

    let mut out = Vec::new();
    match scope {
        PositiveScope::PerSentence => {
            for (i, row) in scores.iter().enumerate() {
                let positives = top_k_indices(row, 2);
                let pool: Vec<usize> = (0..row.len()).filter(|j| !positives.contains(j)).collect();
                let mut negatives: Vec<usize> =
                    index::sample(&mut rng, pool.len(), 2).into_iter().map(|p| pool[p]).collect();
                negatives.sort_unstable();
                out.extend(positives.into_iter().map(|j| pair(i, j, Label::Positive)));
                out.extend(negatives.into_iter().map(|j| pair(i, j, Label::Negative)));
            }
        }
        PositiveScope::PerDocument => {
            let cols = doc.body_sents.len();
            let flat: Vec<f64> = scores.iter().flatten().copied().collect();
            let positives = top_k_indices(&flat, 2);
            let pool: Vec<usize> = (0..flat.len()).filter(|p| !positives.contains(p)).collect();
            let take = pool.len().min(2);
            let mut negatives: Vec<usize> =
                index::sample(&mut rng, pool.len(), take).into_iter().map(|p| pool[p]).collect();
            negatives.sort_unstable();
            out.extend(positives.into_iter().map(|p| pair(p / cols, p % cols, Label::Positive)));
            out.extend(negatives.into_iter().map(|p| pair(p / cols, p % cols, Label::Negative)));
        }
    }
    Some(out)
}

/// Collects the argmax body sentence of every abstract sentence, keeps the
/// `k` best-scoring distinct ones and returns them in document order.
pub fn build_gold_extract(doc: &Document, k: usize) -> GoldExtract {
    let scores = score_all_pairs(doc);
    let mut best: Vec<(usize, f64)> = Vec::new();
    for row in &scores {
        let Some(&j) = top_k_indices(row, 1).first() else { continue };
        match best.iter_mut().find(|(idx, _)| *idx == j) {
            Some(entry) => entry.1 = entry.1.max(row[j]),
            None => best.push((j, row[j])),
        }
    }
    best.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    best.truncate(k);
    let mut selected: Vec<usize> = best.into_iter().map(|(j, _)| j).collect();
    selected.sort_unstable();
    GoldExtract { doc_id: doc.id.clone(), selected_body_idxs: selected }
}

/// The gold extract with `k` equal to the number of abstract sentences.
pub fn default_gold_extract(doc: &Document) -> GoldExtract {
    build_gold_extract(doc, doc.abstract_sents.len().max(1))
}
