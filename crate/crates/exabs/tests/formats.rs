mod common;

use std::path::Path;

use exabs::checkpoint::{load_scorer, load_seq2seq, save_scorer, save_seq2seq, Checkpoint};
use exabs::config::RunConfig;
use exabs::corpus::{ingest, preprocess, Corpus};
use exabs::harness::run_pipeline;
use exabs::registry::Registry;
use exabs::toy::toy_record;
use exabs::{io, Error};
use exabs_core::abstractor::{ArchitectureMode, ConditionVariant, ReferenceSeq2Seq, Seq2SeqConfig, Seq2SeqModel};
use exabs_core::document::FilterConfig;
use exabs_core::extractor::{build_extractor_input, ReferenceScorer, ScorerConfig, ScorerModel};
use exabs_core::paraphrase::back_translate;
use exabs_core::vocab::Vocabulary;

fn record_line(i: usize, id: &str) -> String {
    let mut raw = toy_record(i, 0);
    raw.article_id = id.to_owned();
    serde_json::to_string(&raw).unwrap()
}

fn write(dir: &Path, name: &str, lines: &[String]) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, lines.join("\n")).unwrap();
    p
}

#[test]
fn ingest_reports_malformed_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "in.jsonl", &[record_line(0, "a"), String::new(), "{not json".into()]);
    match ingest(&p, &FilterConfig::default()) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn ingest_rejects_duplicate_and_empty_ids() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "dup.jsonl", &[record_line(0, "a"), record_line(1, "b"), record_line(2, "a")]);
    match ingest(&p, &FilterConfig::default()) {
        Err(Error::DuplicateId { id, line, .. }) => assert_eq!((id.as_str(), line), ("a", 3)),
        other => panic!("expected a duplicate-id error, got {other:?}"),
    }
    let p = write(dir.path(), "empty.jsonl", &[record_line(0, "a"), record_line(1, "  ")]);
    assert!(matches!(ingest(&p, &FilterConfig::default()), Err(Error::EmptyId { line: 2, .. })));
}

#[test]
fn ingest_with_nothing_left_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "in.jsonl", &[record_line(0, "a"), record_line(1, "b")]);
    let strict = FilterConfig { min_words: 1_000_000, ..FilterConfig::default() };
    assert!(matches!(ingest(&p, &strict), Err(Error::NoDocuments(_))));
    let (docs, report) = ingest(&p, &FilterConfig::default()).unwrap();
    assert_eq!((docs.len(), report.records, report.kept), (2, 2, 2));
}

#[test]
fn corpus_round_trips_through_its_directory() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("toy.jsonl");
    io::write_jsonl(&input, &exabs::toy::toy_corpus(40, 1)).unwrap();
    let (corpus, report) = preprocess(&input, &dir.path().join("corpus"), &FilterConfig::default(), 9).unwrap();
    assert_eq!(report.kept, 40);
    assert_eq!(corpus.splits.len(), 40);
    assert_eq!((corpus.splits.validation.len(), corpus.splits.test.len()), (2, 2));
    let loaded = Corpus::load(&dir.path().join("corpus")).unwrap();
    assert_eq!(loaded, corpus);
    let first = &corpus.documents[0];
    assert_eq!(loaded.get(&first.id), Some(first));
    assert_eq!(loaded.get("missing"), None);
    assert!(loaded.documents.windows(2).all(|w| w[0].id < w[1].id));
}

fn vocab(extra: &[&str]) -> Vocabulary {
    Vocabulary::build(["alpha beta gamma delta", "epsilon zeta"].into_iter().chain(extra.iter().copied()), 100)
}

fn seq2seq(v: &Vocabulary) -> ReferenceSeq2Seq {
    ReferenceSeq2Seq::new(
        Seq2SeqConfig { vocab_size: v.len(), dim: 8, heads: 2, ff_dim: 16, encoder_layers: 1, decoder_layers: 1, max_positions: 16, mode: ArchitectureMode::EncoderDecoder, seed: 4 },
        v.cls_id(),
    )
}

#[test]
fn checkpoints_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let v = vocab(&[]);
    let scorer = ReferenceScorer::new(ScorerConfig { vocab_size: v.len(), dim: 8, heads: 2, ff_dim: 16, layers: 1, max_len: 12, seed: 2 });
    let path = dir.path().join("scorer.json");
    save_scorer(&path, &scorer, &v).unwrap();
    let loaded = load_scorer(&path, &v).unwrap();
    let input = build_extractor_input("alpha beta", "gamma zeta", &v, 12).unwrap();
    assert_eq!(scorer.forward(&input).to_bits(), loaded.forward(&input).to_bits());

    let model = seq2seq(&v);
    let path = dir.path().join("seq2seq.json");
    save_seq2seq(&path, &model, ConditionVariant::IntroExtConcl, &v).unwrap();
    let (loaded, variant) = load_seq2seq(&path, &v).unwrap();
    assert_eq!(variant, ConditionVariant::IntroExtConcl);
    let cond = v.tokenize("alpha gamma");
    assert_eq!(model.decode_step(&cond, &[v.bos_id()]), loaded.decode_step(&cond, &[v.bos_id()]));
}

#[test]
fn checkpoint_mismatches_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let v = vocab(&[]);
    let path = dir.path().join("seq2seq.json");
    save_seq2seq(&path, &seq2seq(&v), ConditionVariant::Ext, &v).unwrap();

    let other = vocab(&["eta theta"]);
    assert!(matches!(load_seq2seq(&path, &other), Err(Error::Checkpoint { .. })));
    assert!(matches!(load_scorer(&path, &v), Err(Error::Checkpoint { .. })));

    let mut ckpt: Checkpoint = io::read_json(&path).unwrap();
    ckpt.config["model"]["seed"] = serde_json::json!(99);
    io::write_json(&path, &ckpt).unwrap();
    let err = load_seq2seq(&path, &v).err().expect("rejected").to_string();
    assert!(err.contains("config hash mismatch"), "{err}");

    let mut ckpt: Checkpoint = io::read_json(&path).unwrap();
    ckpt.format_version += 1;
    io::write_json(&path, &ckpt).unwrap();
    let err = load_seq2seq(&path, &v).err().expect("rejected").to_string();
    assert!(err.contains("format version"), "{err}");
}

#[test]
fn registry_resolves_builtins_lexicons_and_inverses() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("registry.toml");
    std::fs::write(&path, common::REGISTRY).unwrap();
    let reg = Registry::load(&path).unwrap();
    let (fwd, back) = (reg.resolve("syn").unwrap(), reg.resolve("syn-back").unwrap());
    assert_eq!(fwd.translate("we propose a model").unwrap(), "we present a model");
    assert_eq!(back_translate("We propose a model. We study it.", fwd.as_ref(), back.as_ref()).unwrap(), "We propose a model. We study it.");
    let rev = reg.resolve("reverse").unwrap();
    assert_eq!(rev.translate("a b c").unwrap(), "c b a");
    assert!(reg.resolve("identity").is_ok());
    assert!(matches!(reg.resolve("nope"), Err(Error::UnknownTranslator(_))));
}

#[cfg(unix)]
#[test]
fn command_translators_run_one_process_per_sentence() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("registry.toml");
    std::fs::write(
        &path,
        "[translators.up]\nkind = \"command\"\nprogram = \"tr\"\nargs = [\"a-z\", \"A-Z\"]\n\n[translators.broken]\nkind = \"command\"\nprogram = \"sh\"\nargs = [\"-c\", \"cat >/dev/null; exit 3\"]\n",
    )
    .unwrap();
    let reg = Registry::load(&path).unwrap();
    assert_eq!(reg.resolve("up").unwrap().translate("shout this").unwrap(), "SHOUT THIS");
    let err = reg.resolve("broken").unwrap().translate("x").unwrap_err();
    assert!(err.contains("exited"), "{err}");
    let ids = reg.resolve("identity").unwrap();
    let broken = reg.resolve("broken").unwrap();
    assert!(back_translate("one two three.", ids.as_ref(), broken.as_ref()).is_err());
}

#[test]
fn config_paths_resolve_against_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = common::tiny_setup(dir.path());
    let cfg = RunConfig::load(&config).unwrap();
    assert_eq!(cfg.input.as_deref(), Some(dir.path().join("toy.jsonl").as_path()));
    assert_eq!(cfg.out_dir, dir.path().join("out"));
    assert_eq!(cfg.paraphrase.as_ref().unwrap().registry.as_deref(), Some(dir.path().join("registry.toml").as_path()));
    cfg.validate().unwrap();
}

#[test]
fn config_hash_ignores_only_the_output_directory() {
    let cfg = RunConfig::default();
    let moved = RunConfig { out_dir: "elsewhere".into(), ..cfg.clone() };
    let reseeded = RunConfig { seed: 1, ..cfg.clone() };
    assert_eq!(cfg.hash(), moved.hash());
    assert_ne!(cfg.hash(), reseeded.hash());
}

#[test]
fn invalid_configs_fail_before_any_stage_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = common::tiny_setup(dir.path());
    let base = RunConfig::load(&config).unwrap();
    let out = dir.path().join("never");
    let cases: Vec<(&str, RunConfig)> = vec![
        ("empty", RunConfig { variants: vec![], ..base.clone() }),
        ("twice", RunConfig { variants: vec![ConditionVariant::Ext, ConditionVariant::Ext], ..base.clone() }),
        ("paraphrase", RunConfig { paraphrase: None, ..base.clone() }),
        ("decode", RunConfig { decode: "beam:0".into(), ..base.clone() }),
        ("input", RunConfig { input: Some(dir.path().join("missing.jsonl")), ..base.clone() }),
        ("both", RunConfig { corpus_dir: Some(dir.path().to_path_buf()), ..base.clone() }),
    ];
    for (what, cfg) in cases {
        let cfg = RunConfig { out_dir: out.clone(), ..cfg };
        let err = run_pipeline(&cfg).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{what}: {err}");
        assert!(!out.exists(), "{what}: output directory was created");
    }
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "varients = [\"EXT\"]\n").unwrap();
    assert!(RunConfig::load(&p).is_err());
    std::fs::write(&p, "variants = [\"EXTRA\"]\n").unwrap();
    assert!(RunConfig::load(&p).is_err());
}
