//! Core of an extract-then-abstract summarizer for long scientific documents.
//!
//! Everything here is `no_std` + `alloc`: text normalization and sentence
//! segmentation, exact ROUGE, oracle label mining, a WordPiece-style
//! tokenizer, a small reverse-mode autograd with two reference transformer
//! models, back-translation plumbing and corpus-level evaluation. File
//! formats, the CLI and the pipeline live in the `exabs` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod abstractor;
pub mod autograd;
pub mod document;
pub mod error;
pub mod eval;
pub mod extractor;
pub mod nn;
pub mod optim;
pub mod oracle;
pub mod paraphrase;
pub mod rng;
pub mod rouge;
pub mod text;
pub mod vocab;

pub use error::{Error, Result};
