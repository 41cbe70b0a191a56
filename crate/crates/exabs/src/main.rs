use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use exabs::checkpoint;
use exabs::config::RunConfig;
use exabs::corpus::{preprocess, Corpus};
use exabs::harness::{self, ExtractRecord, ParaphraseRecord, SummaryRecord};
use exabs::io;
use exabs::pairs::build_pairs;
use exabs::registry::Registry;
use exabs::toy::toy_corpus;
use exabs_core::abstractor::{generate, train_abstractor, ConditionVariant, Decoding, ReferenceSeq2Seq};
use exabs_core::document::FilterConfig;
use exabs_core::eval::{evaluate_abstractive, evaluate_extractive};
use exabs_core::extractor::{default_k, train_scorer, AnchorProtocol, ReferenceScorer};
use exabs_core::oracle::{LabeledPair, PositiveScope};
use exabs_core::rng::derive_seed;
use exabs_core::optim::TrainConfig;
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "exabs", version, about = "Extract-then-abstract summarization of long scientific documents")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for `run`; overrides `out_dir` from the config.
    #[arg(long = "out", id = "out_dir")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Normalize, filter and split a JSON-lines dataset into a corpus directory.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        min_words: Option<usize>,
        #[arg(long)]
        max_words: Option<usize>,
    },
    /// Build the labeled sentence-pair dataset for the training split.
    BuildPairs {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_parser = parse_scope)]
        scope: Option<PositiveScope>,
    },
    /// Train the sentence scorer.
    TrainExt {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select top-k sentences per document with a trained scorer.
    Extract {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_parser = parse_anchor)]
        anchor: Option<AnchorProtocol>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Back-translate extracted sentences through a pivot language.
    Paraphrase {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        forward: String,
        #[arg(long)]
        backward: String,
        /// Translator registry (TOML).
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the conditional abstractor for one conditioning variant.
    TrainAbs {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        variant: ConditionVariant,
        /// Extractive selections (from `extract`).
        #[arg(long)]
        ext: Option<PathBuf>,
        /// Paraphrased extracts (from `paraphrase`).
        #[arg(long)]
        paraphrased: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate summaries for the test split.
    Summarize {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        variant: Option<ConditionVariant>,
        #[arg(long)]
        ext: Option<PathBuf>,
        #[arg(long)]
        paraphrased: Option<PathBuf>,
        #[arg(long)]
        decode: Option<Decoding>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score extracts or summaries against the test-split abstracts.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, conflicts_with = "summaries", required_unless_present = "summaries")]
        extracts: Option<PathBuf>,
        #[arg(long)]
        summaries: Option<PathBuf>,
    },
    /// Run the full pipeline and write the report.
    Run,
    /// Write a synthetic JSON-lines dataset.
    ToyCorpus {
        #[arg(long, default_value_t = 50)]
        docs: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Print the report JSON schema.
    Schema,
}

fn parse_scope(s: &str) -> Result<PositiveScope, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("expected per-sentence or per-document, got {s:?}"))
}

fn parse_anchor(s: &str) -> Result<AnchorProtocol, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| format!("expected intro-first-sentence, empty or abstract-anchored, got {s:?}"))
}

fn run_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn selections_from(path: Option<&Path>) -> anyhow::Result<BTreeMap<String, Vec<usize>>> {
    let Some(path) = path else { return Ok(BTreeMap::new()) };
    let records: Vec<ExtractRecord> = io::read_jsonl(path)?;
    Ok(records.into_iter().map(|r| (r.doc_id, r.selected_body_idxs)).collect())
}

fn paraphrases_from(path: Option<&Path>) -> anyhow::Result<BTreeMap<String, Vec<String>>> {
    let Some(path) = path else { return Ok(BTreeMap::new()) };
    let records: Vec<ParaphraseRecord> = io::read_jsonl(path)?;
    Ok(records.into_iter().map(|r| (r.doc_id, r.sentences)).collect())
}

fn seeded(train: &TrainConfig, seed: u64, key: &str) -> TrainConfig {
    TrainConfig { seed: derive_seed(seed, key), ..train.clone() }
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    let cfg = run_config(cli)?;
    match &cli.command {
        Cmd::Preprocess { input, output, min_words, max_words } => {
            let filters = FilterConfig {
                min_words: min_words.unwrap_or(cfg.filters.min_words),
                max_words: max_words.unwrap_or(cfg.filters.max_words),
            };
            let (_, report) = preprocess(input, output, &filters, cfg.seed)?;
            print_json(&report);
        }
        Cmd::BuildPairs { corpus, output, scope } => {
            let corpus = Corpus::load(corpus)?;
            let pairs = build_pairs(&corpus, cfg.seed, scope.unwrap_or(cfg.positive_scope));
            io::write_jsonl(output, &pairs)?;
            eprintln!("{} pairs written to {}", pairs.len(), output.display());
        }
        Cmd::TrainExt { pairs, corpus, out } => {
            let corpus = Corpus::load(corpus)?;
            let pairs: Vec<LabeledPair> = io::read_jsonl(pairs)?;
            let train = seeded(&cfg.extractor_train, cfg.seed, "extractor-train");
            let model_cfg = cfg.scorer.config(corpus.vocab.len(), train.max_len, derive_seed(cfg.seed, "extractor-init"));
            let mut model = ReferenceScorer::new(model_cfg);
            let report = train_scorer(&pairs, &corpus.documents, &mut model, &corpus.vocab, &train)?;
            checkpoint::save_scorer(out, &model, &corpus.vocab)?;
            eprintln!("final loss {:.4}", report.losses.last().copied().unwrap_or(f64::NAN));
        }
        Cmd::Extract { ckpt, corpus, k, anchor, out } => {
            let corpus = Corpus::load(corpus)?;
            let model = checkpoint::load_scorer(ckpt, &corpus.vocab)?;
            let k = k.or(cfg.k).unwrap_or_else(|| default_k(corpus.train()));
            let mut cfg = cfg.clone();
            cfg.anchor = anchor.unwrap_or(cfg.anchor);
            cfg.extractor_train.max_len = model.config.max_len;
            let docs: Vec<_> = corpus.documents.iter().collect();
            let selections = harness::extract_all(&docs, &cfg, &model, &corpus.vocab, k)?;
            let records: Vec<ExtractRecord> = selections
                .into_iter()
                .map(|(doc_id, idxs)| {
                    let doc = corpus.get(&doc_id).expect("corpus document");
                    ExtractRecord { sentences: idxs.iter().map(|&i| doc.body_sents[i].clone()).collect(), doc_id, selected_body_idxs: idxs }
                })
                .collect();
            io::write_jsonl(out, &records)?;
        }
        Cmd::Paraphrase { input, forward, backward, registry, out } => {
            let registry = match registry.as_ref().or(cfg.paraphrase.as_ref().and_then(|p| p.registry.as_ref())) {
                Some(path) => Registry::load(path)?,
                None => Registry::default(),
            };
            let records: Vec<ExtractRecord> = io::read_jsonl(input)?;
            let out_records = harness::paraphrase_all(&records, &registry.resolve(forward)?, &registry.resolve(backward)?)?;
            io::write_jsonl(out, &out_records)?;
        }
        Cmd::TrainAbs { corpus, variant, ext, paraphrased, out } => {
            let corpus = Corpus::load(corpus)?;
            let selections = selections_from(ext.as_deref())?;
            let paraphrased = paraphrases_from(paraphrased.as_deref())?;
            let bundles = harness::training_bundles(&corpus.train(), *variant, &selections, &paraphrased, &corpus.vocab, cfg.max_total)?;
            let train = seeded(&cfg.abstractor_train, cfg.seed, &format!("abstractor-train-{variant}"));
            let model_cfg = cfg.seq2seq.config(corpus.vocab.len(), cfg.max_total, derive_seed(cfg.seed, "abstractor-init"));
            let mut model = ReferenceSeq2Seq::new(model_cfg, corpus.vocab.cls_id());
            let report = train_abstractor(&bundles, &mut model, &corpus.vocab, &train)?;
            checkpoint::save_seq2seq(out, &model, *variant, &corpus.vocab)?;
            eprintln!("final loss {:.4}", report.losses.last().copied().unwrap_or(f64::NAN));
        }
        Cmd::Summarize { ckpt, corpus, variant, ext, paraphrased, decode, out } => {
            let corpus = Corpus::load(corpus)?;
            let (model, trained_on) = checkpoint::load_seq2seq(ckpt, &corpus.vocab)?;
            let variant = variant.unwrap_or(trained_on);
            let decoding = match decode {
                Some(d) => *d,
                None => cfg.decoding()?,
            };
            let selections = selections_from(ext.as_deref())?;
            let paraphrased = paraphrases_from(paraphrased.as_deref())?;
            let summaries = corpus
                .test()
                .par_iter()
                .map(|d| {
                    let cond = harness::condition_for(d, variant, &selections, &paraphrased)?;
                    let summary = generate(&cond, &model, &corpus.vocab, decoding, cfg.max_new_tokens, cfg.max_total)?;
                    Ok(SummaryRecord { doc_id: d.id.clone(), summary })
                })
                .collect::<exabs::Result<Vec<_>>>()?;
            io::write_jsonl(out, &summaries)?;
        }
        Cmd::Evaluate { corpus, extracts, summaries } => {
            let corpus = Corpus::load(corpus)?;
            let scores = if let Some(path) = extracts {
                evaluate_extractive(&selections_from(Some(path))?, &corpus.documents, &corpus.splits.test)?
            } else {
                let path = summaries.as_ref().context("--summaries or --extracts")?;
                let records: Vec<SummaryRecord> = io::read_jsonl(path)?;
                let generated = records.into_iter().map(|r| (r.doc_id, r.summary)).collect();
                evaluate_abstractive(&generated, &corpus.documents, &corpus.splits.test)?
            };
            print_json(&scores);
        }
        Cmd::Run => {
            if cli.config.is_none() {
                bail!("run needs --config");
            }
            let report = harness::run_pipeline(&cfg)?;
            eprintln!("report written to {}", cfg.out_dir.join(harness::REPORT_JSON).display());
            for v in &report.variants {
                eprintln!("{:<16} avg_f {:.4}", v.variant.name(), v.avg_f);
            }
        }
        Cmd::ToyCorpus { docs, output } => {
            io::write_jsonl(output, &toy_corpus(*docs, cfg.seed))?;
        }
        Cmd::Schema => print!("{}", harness::REPORT_SCHEMA),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
