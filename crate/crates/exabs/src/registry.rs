//! Named translator plugins for back-translation.
//!
//! ```toml
//! [translators.en-de]
//! kind = "command"
//! program = "python3"
//! args = ["translate.py", "--to", "de"]
//!
//! [translators.syn]
//! kind = "lexicon"
//! table = { model = "network", learns = "reads" }
//!
//! [translators.syn-back]
//! kind = "inverse"
//! of = "syn"
//! ```
//!
//! `identity` and `reverse` resolve without a registry file.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use exabs_core::paraphrase::{Identity, Lexicon, Reverse, Translator};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PluginSpec {
    Identity,
    Reverse,
    Lexicon { table: BTreeMap<String, String> },
    Inverse { of: String },
    /// Runs `program args..` once per sentence: sentence on stdin, translation on stdout.
    Command { program: PathBuf, #[serde(default)] args: Vec<String> },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Registry {
    #[serde(default)]
    pub translators: BTreeMap<String, PluginSpec>,
}

pub type DynTranslator = Box<dyn Translator + Send + Sync>;

pub struct CommandTranslator {
    label: String,
    program: PathBuf,
    args: Vec<String>,
}

impl Translator for CommandTranslator {
    fn label(&self) -> &str {
        &self.label
    }

    fn translate(&self, text: &str) -> std::result::Result<String, String> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| format!("{}: {e}", self.program.display()))?;
        child
            .stdin
            .take()
            .expect("piped stdin")
            .write_all(text.as_bytes())
            .map_err(|e| e.to_string())?;
        let out = child.wait_with_output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{} exited with {}: {}", self.program.display(), out.status, String::from_utf8_lossy(&out.stderr).trim()));
        }
        String::from_utf8(out.stdout).map(|s| s.trim().to_owned()).map_err(|e| e.to_string())
    }
}

impl Registry {
    pub fn load(path: &Path) -> Result<Self> {
        io::read_toml(path)
    }

    pub fn resolve(&self, name: &str) -> Result<DynTranslator> {
        self.resolve_depth(name, 0)
    }

    fn lexicon(&self, name: &str, depth: usize) -> Result<Lexicon> {
        match self.translators.get(name) {
            Some(PluginSpec::Lexicon { table }) => Ok(Lexicon::new(name, table.clone())),
            Some(PluginSpec::Inverse { of }) if depth < 8 => Ok(self.lexicon(of, depth + 1)?.inverse(name)),
            Some(_) => Err(Error::Config(format!("translator {name:?} is not invertible"))),
            None => Err(Error::UnknownTranslator(name.to_owned())),
        }
    }

    fn resolve_depth(&self, name: &str, depth: usize) -> Result<DynTranslator> {
        let spec = match self.translators.get(name) {
            Some(spec) => spec.clone(),
            None if name == "identity" => PluginSpec::Identity,
            None if name == "reverse" => PluginSpec::Reverse,
            None => return Err(Error::UnknownTranslator(name.to_owned())),
        };
        Ok(match spec {
            PluginSpec::Identity => Box::new(Identity),
            PluginSpec::Reverse => Box::new(Reverse),
            PluginSpec::Lexicon { .. } | PluginSpec::Inverse { .. } => Box::new(self.lexicon(name, depth)?),
            PluginSpec::Command { program, args } => Box::new(CommandTranslator { label: name.to_owned(), program, args }),
        })
    }
}
