#![allow(dead_code)]

use std::path::{Path, PathBuf};

use exabs::io;
use exabs::toy::toy_corpus;

pub const TOY_DOCS: usize = 30;

/// A run config small enough for a few seconds of training.
pub const TINY_CONFIG: &str = r#"
input = "toy.jsonl"
variants = ["NONE", "EXT", "EXT_PARAPHRASED"]
decode = "greedy"
max_new_tokens = 12
max_total = 96
seed = 3
out_dir = "out"

[paraphrase]
registry = "registry.toml"
forward = "syn"
backward = "syn-back"

[extractor_train]
learning_rate = 0.003
batch_size = 4
max_len = 32
max_steps = 20

[scorer]
dim = 8
heads = 2
ff_dim = 16
layers = 1

[abstractor_train]
learning_rate = 0.003
batch_size = 4
max_len = 96
max_steps = 20

[seq2seq]
dim = 8
heads = 2
ff_dim = 16
encoder_layers = 1
decoder_layers = 1
"#;

pub const REGISTRY: &str = r#"
[translators.syn]
kind = "lexicon"
table = { propose = "present", study = "examine" }

[translators.syn-back]
kind = "inverse"
of = "syn"
"#;

/// Writes the toy corpus, registry and tiny config into `dir`; returns the config path.
pub fn tiny_setup(dir: &Path) -> PathBuf {
    io::write_jsonl(&dir.join("toy.jsonl"), &toy_corpus(TOY_DOCS, 3)).unwrap();
    std::fs::write(dir.join("registry.toml"), REGISTRY).unwrap();
    let config = dir.join("tiny.toml");
    std::fs::write(&config, TINY_CONFIG).unwrap();
    config
}
