use exabs_core::oracle::{build_pair_dataset, LabeledPair, PositiveScope};

use crate::corpus::Corpus;

/// Labeled pairs for every training document, in document-id order.
/// Documents too short to sample from are skipped.
pub fn build_pairs(corpus: &Corpus, seed: u64, scope: PositiveScope) -> Vec<LabeledPair> {
    corpus
        .train()
        .into_iter()
        .filter_map(|d| build_pair_dataset(d, seed, scope))
        .flatten()
        .collect()
}
