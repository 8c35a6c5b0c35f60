//! Corpus ingestion, tokenization, vocabularies, batching and synthetic tasks.

pub mod batch;
pub mod glove;
pub mod split;
pub mod squad;
pub mod synth;
pub mod tokenize;
pub mod vocab;
