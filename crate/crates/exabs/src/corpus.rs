//! Dataset ingest and the on-disk corpus directory.
//!
//! A corpus directory holds `documents.jsonl` (one normalized document per
//! line, sorted by id), `splits.json` and `vocab.txt` (one token per line,
//! line number = id).

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use exabs_core::document::{Document, Exclusion, FilterConfig, RawRecord, SplitAssignment};
use exabs_core::vocab::{Vocabulary, DEFAULT_MAX_SIZE};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io;

pub const DOCUMENTS_FILE: &str = "documents.jsonl";
pub const SPLITS_FILE: &str = "splits.json";
pub const VOCAB_FILE: &str = "vocab.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub splits: SplitAssignment,
    pub vocab: Vocabulary,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub records: usize,
    pub kept: usize,
    pub excluded: BTreeMap<&'static str, usize>,
}

fn exclusion_label(e: Exclusion) -> &'static str {
    match e {
        Exclusion::EmptyAbstract => "empty_abstract",
        Exclusion::EmptyBody => "empty_body",
        Exclusion::TooShort(_) => "too_short",
        Exclusion::TooLong(_) => "too_long",
    }
}

/// Reads a JSON-lines dataset, rejecting malformed lines, empty ids and
/// duplicate ids. Filtered-out records are counted, not errors.
pub fn ingest(path: &Path, filters: &FilterConfig) -> Result<(Vec<Document>, IngestReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut docs = Vec::new();
    let mut report = IngestReport::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { path: path.into(), line: line_no, message: e.to_string() })?;
        if raw.article_id.trim().is_empty() {
            return Err(Error::EmptyId { path: path.into(), line: line_no });
        }
        if seen.insert(raw.article_id.clone(), line_no).is_some() {
            return Err(Error::DuplicateId { path: path.into(), id: raw.article_id, line: line_no });
        }
        report.records += 1;
        match Document::from_record(&raw, filters) {
            Ok(doc) => docs.push(doc),
            Err(e) => {
                log::info!("excluding {}: {e:?}", raw.article_id);
                *report.excluded.entry(exclusion_label(e)).or_insert(0) += 1;
            }
        }
    }
    if docs.is_empty() {
        return Err(Error::NoDocuments(path.into()));
    }
    docs.sort_by(|a, b| a.id.cmp(&b.id));
    report.kept = docs.len();
    Ok((docs, report))
}

impl Corpus {
    /// Assigns splits and builds the vocabulary from training documents.
    pub fn from_documents(documents: Vec<Document>, seed: u64) -> Self {
        let ids: Vec<&str> = documents.iter().map(|d| d.id.as_str()).collect();
        let splits = SplitAssignment::assign(&ids, seed);
        let vocab = Vocabulary::build(
            documents
                .iter()
                .filter(|d| splits.train.contains(&d.id))
                .flat_map(|d| d.abstract_sents.iter().chain(&d.body_sents))
                .map(String::as_str),
            DEFAULT_MAX_SIZE,
        );
        Self { documents, splits, vocab }
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents
            .binary_search_by(|d| d.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.documents[i])
    }

    /// Documents of `ids` in id order.
    pub fn subset(&self, ids: &BTreeSet<String>) -> Vec<&Document> {
        self.documents.iter().filter(|d| ids.contains(&d.id)).collect()
    }

    pub fn train(&self) -> Vec<&Document> {
        self.subset(&self.splits.train)
    }

    pub fn test(&self) -> Vec<&Document> {
        self.subset(&self.splits.test)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        io::write_jsonl(&dir.join(DOCUMENTS_FILE), &self.documents)?;
        io::write_json(&dir.join(SPLITS_FILE), &self.splits)?;
        io::write_lines(&dir.join(VOCAB_FILE), self.vocab.tokens())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mut documents: Vec<Document> = io::read_jsonl(&dir.join(DOCUMENTS_FILE))?;
        documents.sort_by(|a, b| a.id.cmp(&b.id));
        let splits: SplitAssignment = io::read_json(&dir.join(SPLITS_FILE))?;
        let vocab_path = dir.join(VOCAB_FILE);
        let vocab = Vocabulary::from_tokens(io::read_lines(&vocab_path)?)
            .map_err(|e| Error::Parse { path: vocab_path, line: 0, message: e.to_string() })?;
        let known: BTreeSet<&str> = documents.iter().map(|d| d.id.as_str()).collect();
        for id in splits.train.iter().chain(&splits.validation).chain(&splits.test) {
            if !known.contains(id.as_str()) {
                return Err(Error::Config(format!("split manifest names unknown document {id:?}")));
            }
        }
        Ok(Self { documents, splits, vocab })
    }
}

/// Ingest, split, build the vocabulary and write the corpus directory.
pub fn preprocess(input: &Path, out_dir: &Path, filters: &FilterConfig, seed: u64) -> Result<(Corpus, IngestReport)> {
    let (docs, report) = ingest(input, filters)?;
    let corpus = Corpus::from_documents(docs, seed);
    corpus.save(out_dir)?;
    log::info!(
        "preprocessed {} of {} records: {} train / {} validation / {} test, vocabulary {}",
        report.kept,
        report.records,
        corpus.splits.train.len(),
        corpus.splits.validation.len(),
        corpus.splits.test.len(),
        corpus.vocab.len()
    );
    Ok((corpus, report))
}
