//! Attribute-value generation framework.
//!
//! Given product text, the task is to produce the set of attribute-value
//! pairs it expresses. Three strategies are provided: a two-model pipeline
//! (value extraction, then attribute generation per value), a single
//! multitask model distinguishing the two sub-tasks by input prefix, and an
//! end-to-end model generating all pairs in one flattened string.
//!
//! The crate is organized by lifecycle stage: [`ingest`] loads and splits
//! corpora, [`serdes`] converts records to and from seq2seq strings,
//! [`backend`] trains and runs the underlying models, [`strategies`]
//! orchestrates per-strategy corpus building and inference, and [`eval`]
//! scores predictions.

pub mod backend;
pub mod digest;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod record;
pub mod serdes;
pub mod strategies;

pub use error::{Error, Result};
pub use record::{AttrValuePair, ProductRecord};
