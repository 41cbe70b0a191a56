//! Exact ROUGE-N and ROUGE-L over token lists.
//!
//! Tokens are compared verbatim; callers lowercase and whitespace-split
//! (see [`crate::text::rouge_tokens`]). No stemming, no stopword removal.
//! A zero denominator makes the affected component 0.

use alloc::collections::BTreeMap;
use alloc::vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::rouge_tokens;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    #[serde(rename = "p")]
    pub precision: f64,
    #[serde(rename = "r")]
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn from_counts(overlap: usize, cand_total: usize, ref_total: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        Self::from_pr(ratio(overlap, cand_total), ratio(overlap, ref_total))
    }

    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeTriple {
    pub r1: RougeScore,
    pub r2: RougeScore,
    pub rl: RougeScore,
}

impl RougeTriple {
    pub fn avg_f(&self) -> f64 {
        (self.r1.f1 + self.r2.f1 + self.rl.f1) / 3.0
    }

    pub fn values(&self) -> [f64; 9] {
        let s = [self.r1, self.r2, self.rl];
        let mut out = [0.0; 9];
        for (i, sc) in s.iter().enumerate() {
            out[3 * i] = sc.precision;
            out[3 * i + 1] = sc.recall;
            out[3 * i + 2] = sc.f1;
        }
        out
    }

    fn from_values(v: [f64; 9]) -> Self {
        let sc = |i: usize| RougeScore { precision: v[3 * i], recall: v[3 * i + 1], f1: v[3 * i + 2] };
        Self { r1: sc(0), r2: sc(1), rl: sc(2) }
    }
}

fn ngram_counts<T: Ord>(tokens: &[T], n: usize) -> BTreeMap<&[T], usize> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram overlap score.
pub fn rouge_n<T: Ord>(candidate: &[T], reference: &[T], n: usize) -> Result<RougeScore> {
    if n < 1 {
        return Err(Error::InvalidNgramOrder(n));
    }
    let cand = ngram_counts(candidate, n);
    let refc = ngram_counts(reference, n);
    let overlap: usize = cand
        .iter()
        .filter_map(|(g, c)| refc.get(g).map(|r| (*c).min(*r)))
        .sum();
    let grams = |len: usize| if len >= n { len - n + 1 } else { 0 };
    Ok(RougeScore::from_counts(overlap, grams(candidate.len()), grams(reference.len())))
}

/// Length of the longest common subsequence, two-row dynamic programme.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<T: PartialEq>(candidate: &[T], reference: &[T]) -> RougeScore {
    let l = lcs_len(candidate, reference);
    RougeScore::from_counts(l, candidate.len(), reference.len())
}

pub fn rouge_triple<T: Ord>(candidate: &[T], reference: &[T]) -> RougeTriple {
    RougeTriple {
        r1: rouge_n(candidate, reference, 1).expect("n = 1 is valid"),
        r2: rouge_n(candidate, reference, 2).expect("n = 2 is valid"),
        rl: rouge_l(candidate, reference),
    }
}

/// Mean of the ROUGE-1, ROUGE-2 and ROUGE-L f1 scores.
pub fn avg_f<T: Ord>(candidate: &[T], reference: &[T]) -> f64 {
    rouge_triple(candidate, reference).avg_f()
}

/// Scores two texts after lowercasing and whitespace tokenization.
pub fn score_texts(candidate: &str, reference: &str) -> RougeTriple {
    rouge_triple(&rouge_tokens(candidate), &rouge_tokens(reference))
}

/// Component-wise arithmetic mean of all nine numbers.
pub fn corpus_average(per_doc: &[RougeTriple]) -> Result<RougeTriple> {
    if per_doc.is_empty() {
        return Err(Error::EmptyAverage);
    }
    let mut sum = [0.0; 9];
    for t in per_doc {
        for (acc, v) in sum.iter_mut().zip(t.values()) {
            *acc += v;
        }
    }
    let n = per_doc.len() as f64;
    Ok(RougeTriple::from_values(sum.map(|s| s / n)))
}
