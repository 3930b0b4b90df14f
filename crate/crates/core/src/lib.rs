//! Detection of machine-generated tweets.
//!
//! The crate covers the whole experiment path: CSV ingestion and stratified
//! splitting ([`corpus`]), tweet-aware tokenization and preprocessing
//! ([`textprep`]), feature extraction ([`features`]), self-contained
//! classifiers behind a name-keyed registry ([`models`]), evaluation and
//! reporting ([`eval`]), synthetic corpora ([`synth`]) and config-driven
//! experiment runs ([`experiment`]).

pub mod corpus;
pub mod seed;
pub mod textprep;
pub mod features;
pub mod models;
pub mod eval;
pub mod synth;
pub mod experiment;
