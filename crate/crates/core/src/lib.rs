//! Offline-reproducible experiment harness for prompt-based rare-disease NER.
//!
//! The crate covers the full loop: corpus ingestion, text embeddings with a
//! replayable disk cache, in-context exemplar selection, retrieval of knowledge
//! snippets, byte-exact prompt construction, a provider-agnostic LLM gateway
//! with record/replay modes, exact-match scoring with an error taxonomy, and
//! cost-performance curve fitting.

pub mod corpus;
pub mod costfit;
pub mod embedding;
pub mod eval;
pub mod experiment;
pub mod gateway;
pub mod prompt;
pub mod rag;
pub mod selection;
pub mod tokenizer;
pub mod transport;
