//! The end-to-end pipeline and its evaluation report.
//!
//! Each stage writes into `out_dir/stages/<stage>-<key>/`, where the key is
//! a hash of the stage's inputs chained from upstream keys. A stage directory
//! with a `DONE` marker is reused as is.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use exabs_core::abstractor::{
    build_bundle, build_condition, generate, train_abstractor, ConditionVariant, ConditioningBundle, ReferenceSeq2Seq,
};
use exabs_core::document::Document;
use exabs_core::eval::{average, score_abstractive, score_extractive, DocScore};
use exabs_core::extractor::{default_k, select_with_protocol, train_scorer, ReferenceScorer};
use exabs_core::oracle::{build_gold_extract, LabeledPair};
use exabs_core::optim::TrainConfig;
use exabs_core::paraphrase::back_translate_sentences;
use exabs_core::rng::derive_seed;
use exabs_core::rouge::RougeTriple;
use exabs_core::vocab::Vocabulary;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::{self, config_hash};
use crate::config::RunConfig;
use crate::corpus::Corpus;
use crate::error::{Error, Result, StageContext};
use crate::io;
use crate::pairs::build_pairs;
use crate::plot;
use crate::registry::{DynTranslator, Registry};

pub const SCHEMA_VERSION: u32 = 1;
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");
pub const ORACLE: &str = "ORACLE";
pub const EXTRACTIVE: &str = "EXTRACTIVE";

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_PLOT: &str = "comparison.svg";
const DONE: &str = "DONE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemRow {
    pub system: String,
    pub scores: RougeTriple,
    pub avg_f: f64,
}

impl SystemRow {
    fn new(system: impl Into<String>, scores: RougeTriple) -> Self {
        Self { system: system.into(), avg_f: scores.avg_f(), scores }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRow {
    pub variant: ConditionVariant,
    pub scores: RougeTriple,
    pub avg_f: f64,
    /// Metrics (`r1`, `r2`, `rl`) whose f1 exceeds the oracle's.
    pub exceeds_oracle: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocRow {
    pub system: String,
    pub doc_id: String,
    pub scores: RougeTriple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub config_hash: String,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: String,
    pub anchor_protocol: String,
    pub decode: String,
    pub architecture: String,
    pub k: usize,
    pub corpus_documents: usize,
    pub test_documents: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checks {
    pub oracle_dominates_extractive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub metadata: Metadata,
    pub oracle: SystemRow,
    pub extractive: SystemRow,
    pub variants: Vec<VariantRow>,
    pub per_document: Vec<DocRow>,
    pub checks: Checks,
}

impl EvaluationReport {
    /// The report with timestamps blanked, for run-to-run comparison.
    pub fn without_timestamps(&self) -> Self {
        let mut r = self.clone();
        r.metadata.started_at.clear();
        r.metadata.finished_at.clear();
        r
    }

    /// Corpus rows recomputed from the per-document rows of `system`.
    pub fn reaggregate(&self, system: &str) -> Result<RougeTriple> {
        let rows: Vec<DocScore> = self
            .per_document
            .iter()
            .filter(|r| r.system == system)
            .map(|r| DocScore { doc_id: r.doc_id.clone(), scores: r.scores })
            .collect();
        Ok(average(&rows)?)
    }
}

/// One extractive selection, with its sentences for downstream tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractRecord {
    pub doc_id: String,
    pub selected_body_idxs: Vec<usize>,
    pub sentences: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseRecord {
    pub doc_id: String,
    pub sentences: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub doc_id: String,
    pub summary: String,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

struct Stages {
    root: PathBuf,
}

impl Stages {
    fn dir(&self, name: &str, key: &str) -> PathBuf {
        self.root.join(format!("{name}-{}", &key[..16]))
    }

    fn is_done(dir: &Path) -> bool {
        dir.join(DONE).exists()
    }

    fn mark_done(dir: &Path) -> Result<()> {
        io::write_bytes(&dir.join(DONE), b"")
    }
}

fn with_seed(cfg: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig { seed, ..cfg.clone() }
}

fn extract_records(corpus: &Corpus, selections: &BTreeMap<String, Vec<usize>>) -> Vec<ExtractRecord> {
    selections
        .iter()
        .map(|(id, idxs)| {
            let doc = corpus.get(id).expect("selection of a corpus document");
            ExtractRecord {
                doc_id: id.clone(),
                selected_body_idxs: idxs.clone(),
                sentences: idxs.iter().map(|&i| doc.body_sents[i].clone()).collect(),
            }
        })
        .collect()
}

/// Runs extractive selection on `docs` in parallel.
pub fn extract_all(
    docs: &[&Document],
    cfg: &RunConfig,
    scorer: &ReferenceScorer,
    vocab: &Vocabulary,
    k: usize,
) -> Result<BTreeMap<String, Vec<usize>>> {
    let max_len = cfg.extractor_train.max_len;
    docs.par_iter()
        .map(|d| {
            select_with_protocol(d, cfg.anchor, scorer, k, vocab, max_len)
                .map(|s| (d.id.clone(), s))
                .map_err(|e| Error::in_doc(&d.id, e))
        })
        .collect()
}

/// Condition text for `doc` under `variant`.
pub fn condition_for(
    doc: &Document,
    variant: ConditionVariant,
    selections: &BTreeMap<String, Vec<usize>>,
    paraphrased: &BTreeMap<String, Vec<String>>,
) -> Result<String> {
    build_condition(
        doc,
        variant,
        selections.get(&doc.id).map(Vec::as_slice),
        paraphrased.get(&doc.id).map(Vec::as_slice),
    )
    .map_err(|e| Error::in_doc(&doc.id, e))
}

pub fn training_bundles(
    docs: &[&Document],
    variant: ConditionVariant,
    selections: &BTreeMap<String, Vec<usize>>,
    paraphrased: &BTreeMap<String, Vec<String>>,
    vocab: &Vocabulary,
    max_total: usize,
) -> Result<Vec<ConditioningBundle>> {
    docs.iter()
        .map(|d| {
            let cond = condition_for(d, variant, selections, paraphrased)?;
            build_bundle(&cond, &d.abstract_text(), vocab, max_total).map_err(|e| Error::in_doc(&d.id, e))
        })
        .collect()
}

pub fn paraphrase_all(
    records: &[ExtractRecord],
    forward: &DynTranslator,
    backward: &DynTranslator,
) -> Result<Vec<ParaphraseRecord>> {
    records
        .par_iter()
        .map(|r| {
            back_translate_sentences(&r.sentences, forward.as_ref(), backward.as_ref())
                .map(|sentences| ParaphraseRecord { doc_id: r.doc_id.clone(), sentences })
                .map_err(|e| Error::in_doc(&r.doc_id, e))
        })
        .collect()
}

fn resolve_translators(cfg: &RunConfig) -> Result<(DynTranslator, DynTranslator)> {
    let p = cfg.paraphrase.as_ref().ok_or_else(|| Error::Config("no [paraphrase] section".into()))?;
    let registry = match &p.registry {
        Some(path) => Registry::load(path)?,
        None => Registry::default(),
    };
    Ok((registry.resolve(&p.forward)?, registry.resolve(&p.backward)?))
}

fn load_corpus(cfg: &RunConfig, stages: &Stages) -> Result<(Corpus, String)> {
    let (mut corpus, mut key) = if let Some(input) = &cfg.input {
        let key = config_hash(&("corpus", file_sha256(input)?, &cfg.filters, cfg.seed));
        let dir = stages.dir("corpus", &key);
        if Stages::is_done(&dir) {
            (Corpus::load(&dir)?, key)
        } else {
            let (corpus, report) = crate::corpus::preprocess(input, &dir, &cfg.filters, cfg.seed)?;
            io::write_json(&dir.join("ingest.json"), &report)?;
            Stages::mark_done(&dir)?;
            (corpus, key)
        }
    } else {
        let dir = cfg.corpus_dir.as_ref().expect("validated");
        let corpus = Corpus::load(dir)?;
        let parts = [crate::corpus::DOCUMENTS_FILE, crate::corpus::SPLITS_FILE, crate::corpus::VOCAB_FILE]
            .iter()
            .map(|f| file_sha256(&dir.join(f)))
            .collect::<Result<Vec<_>>>()?;
        (corpus, config_hash(&("corpus-dir", parts)))
    };
    if let Some(manifest) = &cfg.split_manifest {
        corpus.splits = io::read_json(manifest)?;
        key = config_hash(&(key, file_sha256(manifest)?));
    }
    if corpus.splits.test.is_empty() {
        return Err(Error::Config("the test split is empty".into()));
    }
    Ok((corpus, key))
}

/// preprocess → build-pairs → train/load extractor → extract → paraphrase →
/// per-variant conditions → train/load abstractor → generate → evaluate.
/// Writes `report.json`, `report.csv` and `comparison.svg` into `out_dir`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<EvaluationReport> {
    cfg.validate()?;
    let started_at = chrono::Utc::now().to_rfc3339();
    let decoding = cfg.decoding()?;
    let out = &cfg.out_dir;
    let stages = Stages { root: out.join("stages") };

    let (corpus, corpus_key) = load_corpus(cfg, &stages).stage("preprocess")?;
    let vocab = &corpus.vocab;
    let train_docs = corpus.train();
    let test_docs = corpus.test();
    let all_docs: Vec<&Document> = corpus.documents.iter().collect();

    let pairs_key = config_hash(&("pairs", &corpus_key, cfg.seed, cfg.positive_scope));
    let pairs_dir = stages.dir("pairs", &pairs_key);
    let pairs_path = pairs_dir.join("pairs.jsonl");
    let pairs: Vec<LabeledPair> = if Stages::is_done(&pairs_dir) {
        io::read_jsonl(&pairs_path).stage("build-pairs")?
    } else {
        let pairs = build_pairs(&corpus, cfg.seed, cfg.positive_scope);
        io::write_jsonl(&pairs_path, &pairs).stage("build-pairs")?;
        Stages::mark_done(&pairs_dir).stage("build-pairs")?;
        pairs
    };

    let max_len = cfg.extractor_train.max_len;
    let (scorer, extractor_key) = match &cfg.extractor_checkpoint {
        Some(path) => {
            let model = checkpoint::load_scorer(path, vocab).stage("train-ext")?;
            (model, file_sha256(path).stage("train-ext")?)
        }
        None => {
            let train = with_seed(&cfg.extractor_train, derive_seed(cfg.seed, "extractor-train"));
            let model_cfg = cfg.scorer.config(vocab.len(), max_len, derive_seed(cfg.seed, "extractor-init"));
            let key = config_hash(&("extractor", &pairs_key, &train, &model_cfg));
            let dir = stages.dir("extractor", &key);
            let ckpt = dir.join("scorer.json");
            if Stages::is_done(&dir) {
                (checkpoint::load_scorer(&ckpt, vocab).stage("train-ext")?, key)
            } else {
                let mut model = ReferenceScorer::new(model_cfg);
                let report = train_scorer(&pairs, &corpus.documents, &mut model, vocab, &train).stage("train-ext")?;
                io::write_json(&dir.join("train_report.json"), &report).stage("train-ext")?;
                checkpoint::save_scorer(&ckpt, &model, vocab).stage("train-ext")?;
                Stages::mark_done(&dir).stage("train-ext")?;
                (model, key)
            }
        }
    };

    let k = cfg.k.unwrap_or_else(|| default_k(train_docs.iter().copied()));
    let extract_key = config_hash(&("extract", &extractor_key, k, cfg.anchor, max_len));
    let extract_dir = stages.dir("extract", &extract_key);
    let extract_path = extract_dir.join("extracts.jsonl");
    let extracts: Vec<ExtractRecord> = if Stages::is_done(&extract_dir) {
        io::read_jsonl(&extract_path).stage("extract")?
    } else {
        let selections = extract_all(&all_docs, cfg, &scorer, vocab, k).stage("extract")?;
        let records = extract_records(&corpus, &selections);
        io::write_jsonl(&extract_path, &records).stage("extract")?;
        Stages::mark_done(&extract_dir).stage("extract")?;
        records
    };
    let selections: BTreeMap<String, Vec<usize>> =
        extracts.iter().map(|r| (r.doc_id.clone(), r.selected_body_idxs.clone())).collect();

    let mut paraphrase_key = String::new();
    let mut paraphrased: BTreeMap<String, Vec<String>> = BTreeMap::new();
    if cfg.variants.iter().any(|v| v.needs_paraphrase()) {
        let p = cfg.paraphrase.as_ref().expect("validated");
        let registry_hash = match &p.registry {
            Some(r) => file_sha256(r).stage("paraphrase")?,
            None => String::new(),
        };
        paraphrase_key = config_hash(&("paraphrase", &extract_key, &p.forward, &p.backward, registry_hash));
        let dir = stages.dir("paraphrase", &paraphrase_key);
        let path = dir.join("paraphrased.jsonl");
        let records: Vec<ParaphraseRecord> = if Stages::is_done(&dir) {
            io::read_jsonl(&path).stage("paraphrase")?
        } else {
            let (fwd, bwd) = resolve_translators(cfg).stage("paraphrase")?;
            let records = paraphrase_all(&extracts, &fwd, &bwd).stage("paraphrase")?;
            io::write_jsonl(&path, &records).stage("paraphrase")?;
            Stages::mark_done(&dir).stage("paraphrase")?;
            records
        };
        paraphrased = records.into_iter().map(|r| (r.doc_id, r.sentences)).collect();
    }

    let mut per_document: Vec<DocRow> = Vec::new();
    let mut push_rows = |system: &str, rows: &[DocScore]| {
        per_document.extend(rows.iter().map(|r| DocRow { system: system.to_owned(), doc_id: r.doc_id.clone(), scores: r.scores }));
    };

    let gold: BTreeMap<String, Vec<usize>> = test_docs
        .iter()
        .map(|d| (d.id.clone(), build_gold_extract(d, d.abstract_sents.len().max(1)).selected_body_idxs))
        .collect();
    io::write_jsonl(&out.join("gold.jsonl"), &extract_records(&corpus, &gold)).stage("evaluate")?;
    let oracle_rows = score_extractive(&gold, &corpus.documents, &corpus.splits.test).stage("evaluate")?;
    let oracle = SystemRow::new(ORACLE, average(&oracle_rows).stage("evaluate")?);
    push_rows(ORACLE, &oracle_rows);
    let ext_rows = score_extractive(&selections, &corpus.documents, &corpus.splits.test).stage("evaluate")?;
    let extractive = SystemRow::new(EXTRACTIVE, average(&ext_rows).stage("evaluate")?);
    push_rows(EXTRACTIVE, &ext_rows);

    let mut variants = Vec::with_capacity(cfg.variants.len());
    for &variant in &cfg.variants {
        let upstream = match variant {
            v if v.needs_paraphrase() => paraphrase_key.as_str(),
            v if v.needs_extract() => extract_key.as_str(),
            _ => "",
        };
        let (model, model_key) = match cfg.abstractor_checkpoints.get(&variant) {
            Some(path) => {
                let (model, trained_on) = checkpoint::load_seq2seq(path, vocab).stage("train-abs")?;
                if trained_on != variant {
                    log::warn!("{}: checkpoint was trained on {trained_on}, used for {variant}", path.display());
                }
                (model, file_sha256(path).stage("train-abs")?)
            }
            None => {
                let train = with_seed(&cfg.abstractor_train, derive_seed(cfg.seed, &format!("abstractor-train-{variant}")));
                let model_cfg = cfg.seq2seq.config(vocab.len(), cfg.max_total, derive_seed(cfg.seed, "abstractor-init"));
                let key = config_hash(&("abstractor", variant, &corpus_key, upstream, &train, &model_cfg, cfg.max_total));
                let dir = stages.dir(&format!("abstractor-{variant}"), &key);
                let ckpt = dir.join("seq2seq.json");
                if Stages::is_done(&dir) {
                    (checkpoint::load_seq2seq(&ckpt, vocab).stage("train-abs")?.0, key)
                } else {
                    let bundles = training_bundles(&train_docs, variant, &selections, &paraphrased, vocab, cfg.max_total)
                        .stage("train-abs")?;
                    let mut model = ReferenceSeq2Seq::new(model_cfg, vocab.cls_id());
                    let report = train_abstractor(&bundles, &mut model, vocab, &train).stage("train-abs")?;
                    io::write_json(&dir.join("train_report.json"), &report).stage("train-abs")?;
                    checkpoint::save_seq2seq(&ckpt, &model, variant, vocab).stage("train-abs")?;
                    Stages::mark_done(&dir).stage("train-abs")?;
                    (model, key)
                }
            }
        };

        let gen_key = config_hash(&("summaries", &model_key, upstream, &cfg.decode, cfg.max_new_tokens, cfg.max_total, &corpus.splits.test));
        let dir = stages.dir(&format!("summaries-{variant}"), &gen_key);
        let path = dir.join("summaries.jsonl");
        let summaries: Vec<SummaryRecord> = if Stages::is_done(&dir) {
            io::read_jsonl(&path).stage("summarize")?
        } else {
            let summaries = test_docs
                .par_iter()
                .map(|d| {
                    let cond = condition_for(d, variant, &selections, &paraphrased)?;
                    let summary = generate(&cond, &model, vocab, decoding, cfg.max_new_tokens, cfg.max_total)
                        .map_err(|e| Error::in_doc(&d.id, e))?;
                    Ok(SummaryRecord { doc_id: d.id.clone(), summary })
                })
                .collect::<Result<Vec<_>>>()
                .stage("summarize")?;
            io::write_jsonl(&path, &summaries).stage("summarize")?;
            Stages::mark_done(&dir).stage("summarize")?;
            summaries
        };
        let generated: BTreeMap<String, String> = summaries.into_iter().map(|s| (s.doc_id, s.summary)).collect();
        let rows = score_abstractive(&generated, &corpus.documents, &corpus.splits.test).stage("evaluate")?;
        let scores = average(&rows).stage("evaluate")?;
        push_rows(variant.name(), &rows);
        let mut exceeds_oracle = Vec::new();
        for (name, mine, theirs) in [
            ("r1", scores.r1.f1, oracle.scores.r1.f1),
            ("r2", scores.r2.f1, oracle.scores.r2.f1),
            ("rl", scores.rl.f1, oracle.scores.rl.f1),
        ] {
            if mine > theirs {
                log::info!("{variant} exceeds the oracle on {name}: {mine:.4} > {theirs:.4}");
                exceeds_oracle.push(name.to_owned());
            }
        }
        variants.push(VariantRow { variant, avg_f: scores.avg_f(), scores, exceeds_oracle });
    }

    let checks = Checks { oracle_dominates_extractive: oracle.scores.r1.f1 >= extractive.scores.r1.f1 };
    if !checks.oracle_dominates_extractive {
        log::warn!("extractive r1 f1 {} exceeds the oracle's {}", extractive.scores.r1.f1, oracle.scores.r1.f1);
    }
    let report = EvaluationReport {
        schema_version: SCHEMA_VERSION,
        metadata: Metadata {
            config_hash: cfg.hash(),
            seed: cfg.seed,
            started_at,
            finished_at: chrono::Utc::now().to_rfc3339(),
            anchor_protocol: cfg.anchor.label().to_owned(),
            decode: decoding.to_string(),
            architecture: cfg.seq2seq.mode.label().to_owned(),
            k,
            corpus_documents: corpus.documents.len(),
            test_documents: test_docs.len(),
        },
        oracle,
        extractive,
        variants,
        per_document,
        checks,
    };
    write_report(out, &report).stage("report")?;
    Ok(report)
}

pub fn write_report(dir: &Path, report: &EvaluationReport) -> Result<()> {
    io::write_json(&dir.join(REPORT_JSON), report)?;
    io::write_bytes(&dir.join(REPORT_CSV), &report_csv(report))?;
    plot::comparison_svg(&dir.join(REPORT_PLOT), report)
}

const CSV_HEADER: [&str; 13] =
    ["system", "doc_id", "r1_p", "r1_r", "r1_f1", "r2_p", "r2_r", "r2_f1", "rl_p", "rl_r", "rl_f1", "avg_f", "anchor_protocol"];

/// Corpus rows (empty `doc_id`) followed by per-document rows.
pub fn report_csv(report: &EvaluationReport) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    let mut row = |system: &str, doc_id: &str, s: &RougeTriple, anchor: &str| {
        let mut rec = vec![system.to_owned(), doc_id.to_owned()];
        rec.extend(s.values().iter().map(|v| v.to_string()));
        rec.push(s.avg_f().to_string());
        rec.push(anchor.to_owned());
        w.write_record(&rec).expect("in-memory write");
    };
    let anchor = report.metadata.anchor_protocol.as_str();
    row(ORACLE, "", &report.oracle.scores, "");
    row(EXTRACTIVE, "", &report.extractive.scores, anchor);
    for v in &report.variants {
        row(v.variant.name(), "", &v.scores, "");
    }
    for d in &report.per_document {
        row(&d.system, &d.doc_id, &d.scores, if d.system == EXTRACTIVE { anchor } else { "" });
    }
    w.into_inner().expect("in-memory flush")
}
