//! Declarative run configuration (TOML).

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use exabs_core::abstractor::{ArchitectureMode, ConditionVariant, Decoding, Seq2SeqConfig, DEFAULT_MAX_TOTAL};
use exabs_core::document::FilterConfig;
use exabs_core::extractor::{AnchorProtocol, ScorerConfig};
use exabs_core::optim::TrainConfig;
use exabs_core::oracle::PositiveScope;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerShape {
    pub dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub layers: usize,
}

impl Default for ScorerShape {
    fn default() -> Self {
        let d = ScorerConfig::default();
        Self { dim: d.dim, heads: d.heads, ff_dim: d.ff_dim, layers: d.layers }
    }
}

impl ScorerShape {
    pub fn config(&self, vocab_size: usize, max_len: usize, seed: u64) -> ScorerConfig {
        ScorerConfig { vocab_size, dim: self.dim, heads: self.heads, ff_dim: self.ff_dim, layers: self.layers, max_len, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seq2SeqShape {
    pub dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub mode: ArchitectureMode,
}

impl Default for Seq2SeqShape {
    fn default() -> Self {
        let d = Seq2SeqConfig::default();
        Self {
            dim: d.dim,
            heads: d.heads,
            ff_dim: d.ff_dim,
            encoder_layers: d.encoder_layers,
            decoder_layers: d.decoder_layers,
            mode: d.mode,
        }
    }
}

impl Seq2SeqShape {
    /// Positions cover `[CLS]`/`[BOS]` plus the full token budget.
    pub fn config(&self, vocab_size: usize, max_total: usize, seed: u64) -> Seq2SeqConfig {
        Seq2SeqConfig {
            vocab_size,
            dim: self.dim,
            heads: self.heads,
            ff_dim: self.ff_dim,
            encoder_layers: self.encoder_layers,
            decoder_layers: self.decoder_layers,
            max_positions: max_total + 2,
            mode: self.mode,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParaphraseConfig {
    /// Registry file; `identity` and `reverse` need none.
    #[serde(default)]
    pub registry: Option<PathBuf>,
    pub forward: String,
    pub backward: String,
}

/// Every knob of a full pipeline run. Seeds inside the training and model
/// sections are replaced by seeds derived from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Raw JSON-lines dataset; mutually exclusive with `corpus_dir`.
    pub input: Option<PathBuf>,
    /// Already preprocessed corpus directory.
    pub corpus_dir: Option<PathBuf>,
    /// Replaces the corpus directory's `splits.json`.
    pub split_manifest: Option<PathBuf>,
    pub filters: FilterConfig,
    pub variants: Vec<ConditionVariant>,
    pub positive_scope: PositiveScope,
    pub anchor: AnchorProtocol,
    /// Sentences per extractive summary; the mean training-abstract length when unset.
    pub k: Option<usize>,
    pub extractor_checkpoint: Option<PathBuf>,
    /// Pretrained abstractor per variant name.
    pub abstractor_checkpoints: BTreeMap<ConditionVariant, PathBuf>,
    pub extractor_train: TrainConfig,
    pub scorer: ScorerShape,
    pub abstractor_train: TrainConfig,
    pub seq2seq: Seq2SeqShape,
    /// `greedy` or `beam:<width>`.
    pub decode: String,
    pub max_new_tokens: usize,
    /// Token budget for condition plus target.
    pub max_total: usize,
    pub paraphrase: Option<ParaphraseConfig>,
    pub seed: u64,
    /// Excluded from the config hash.
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            corpus_dir: None,
            split_manifest: None,
            filters: FilterConfig::default(),
            variants: vec![ConditionVariant::None, ConditionVariant::Ext, ConditionVariant::IntroExtConcl],
            positive_scope: PositiveScope::default(),
            anchor: AnchorProtocol::default(),
            k: None,
            extractor_checkpoint: None,
            abstractor_checkpoints: BTreeMap::new(),
            extractor_train: TrainConfig::default(),
            scorer: ScorerShape::default(),
            abstractor_train: TrainConfig::default(),
            seq2seq: Seq2SeqShape::default(),
            decode: Decoding::default().to_string(),
            max_new_tokens: 128,
            max_total: DEFAULT_MAX_TOTAL,
            paraphrase: None,
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn must_exist(what: &str, p: &Path) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} {} does not exist", p.display())))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = io::read_toml(path)?;
        cfg.resolve_relative_to(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Makes relative paths, `out_dir` included, relative to the config file's directory.
    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.input, &mut self.corpus_dir, &mut self.split_manifest, &mut self.extractor_checkpoint]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        fix(&mut self.out_dir);
        self.abstractor_checkpoints.values_mut().for_each(fix);
        if let Some(p) = self.paraphrase.as_mut().and_then(|p| p.registry.as_mut()) {
            fix(p);
        }
    }

    pub fn decoding(&self) -> Result<Decoding> {
        self.decode.parse().map_err(Error::Config)
    }

    /// Hash of everything except `out_dir`.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("serializable config");
        v.as_object_mut().expect("struct").remove("out_dir");
        crate::checkpoint::config_hash(&v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::Config("variant list is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for v in &self.variants {
            if !seen.insert(v) {
                return Err(Error::Config(format!("variant {v} listed twice")));
            }
        }
        match (&self.input, &self.corpus_dir) {
            (Some(p), None) => must_exist("input", p)?,
            (None, Some(p)) => must_exist("corpus_dir", p)?,
            _ => return Err(Error::Config("set exactly one of input and corpus_dir".into())),
        }
        if let Some(p) = &self.split_manifest {
            must_exist("split_manifest", p)?;
        }
        if let Some(p) = &self.extractor_checkpoint {
            must_exist("extractor_checkpoint", p)?;
        }
        for (v, p) in &self.abstractor_checkpoints {
            must_exist(&format!("abstractor checkpoint for {v}"), p)?;
        }
        if self.variants.contains(&ConditionVariant::ExtParaphrased) {
            let p = self
                .paraphrase
                .as_ref()
                .ok_or_else(|| Error::Config("EXT_PARAPHRASED needs a [paraphrase] section".into()))?;
            if let Some(r) = &p.registry {
                must_exist("paraphrase registry", r)?;
            }
        }
        self.decoding()?;
        if self.max_new_tokens == 0 {
            return Err(Error::Config("max_new_tokens must be positive".into()));
        }
        if self.max_total < 2 {
            return Err(Error::Config("max_total must be at least 2".into()));
        }
        if self.k == Some(0) {
            return Err(Error::Config("k must be positive".into()));
        }
        for (name, dim, heads) in [("scorer", self.scorer.dim, self.scorer.heads), ("seq2seq", self.seq2seq.dim, self.seq2seq.heads)] {
            if heads == 0 || dim == 0 || dim % heads != 0 {
                return Err(Error::Config(format!("{name}: dim {dim} must be a positive multiple of heads {heads}")));
            }
        }
        self.extractor_train.validate()?;
        self.abstractor_train.validate()?;
        Ok(())
    }
}
