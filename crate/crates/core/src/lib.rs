//! Filtering toolkit for noisy web-mined parallel corpora.
//!
//! The pipeline stages map onto modules:
//!
//! - [`heuristic`] drops pairs where a side is only numbers and/or punctuation
//! - [`mining`] builds balanced sentence-pair classifier data from clean
//!   positives and lowest-alignment-score negatives
//! - [`scoring`] attaches quality probabilities with pluggable scorers
//! - [`analysis`] applies thresholds and reports retention, overlap and F1
//!
//! [`ingest`] and [`manifest`] handle the file formats, [`pipeline`] runs
//! per-record stages over sharded chunks, and [`cli`] wires it all together.

pub mod analysis;
pub mod cli;
pub mod heuristic;
pub mod ingest;
pub mod manifest;
pub mod mining;
pub mod model;
pub mod pipeline;
pub mod scoring;
pub mod synth;

pub use model::{
    validate_pair, CorpusCategory, FilterPolicy, Label, LabeledPair, LanguagePair, ScoreKind, ScoredPair, SentencePair,
    Split,
};
