//! File formats, configuration, the evaluation harness and the `exabs` CLI
//! on top of [`exabs_core`].

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod error;
pub mod harness;
pub mod io;
pub mod pairs;
pub mod plot;
pub mod registry;
pub mod toy;

pub use error::{Error, Result};
pub use exabs_core as core;
