//! Token counting under named tokenizers.
//!
//! Two families are registered: byte-pair encodings with vendored vocabularies
//! (`o200k_base`, the GPT-4o family encoding, and `cl100k_base`) and a
//! `whitespace` fallback for environments where BPE counts are not needed.

use std::sync::OnceLock;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("unknown tokenizer id: {0}")]
    UnknownTokenizer(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    O200k,
    Cl100k,
    Whitespace,
}

/// A named, deterministic token counter.
#[derive(Clone, Copy, Debug)]
pub struct Tokenizer {
    kind: Kind,
}

impl Tokenizer {
    /// Looks up a tokenizer by id. Ids: `o200k_base`, `cl100k_base`,
    /// `whitespace`.
    pub fn by_id(tokenizer_id: &str) -> Result<Tokenizer, TokenizerError> {
        let kind = match tokenizer_id {
            "o200k_base" => Kind::O200k,
            "cl100k_base" => Kind::Cl100k,
            "whitespace" => Kind::Whitespace,
            other => return Err(TokenizerError::UnknownTokenizer(other.to_string())),
        };
        Ok(Tokenizer { kind })
    }

    pub fn count(&self, text: &str) -> usize {
        match self.kind {
            Kind::O200k => o200k().encode_ordinary(text).len(),
            Kind::Cl100k => cl100k().encode_ordinary(text).len(),
            Kind::Whitespace => text.split_whitespace().count(),
        }
    }
}

fn o200k() -> &'static tiktoken_rs::CoreBPE {
    static BPE: OnceLock<tiktoken_rs::CoreBPE> = OnceLock::new();
    BPE.get_or_init(|| tiktoken_rs::o200k_base().expect("vendored o200k_base vocabulary"))
}

fn cl100k() -> &'static tiktoken_rs::CoreBPE {
    static BPE: OnceLock<tiktoken_rs::CoreBPE> = OnceLock::new();
    BPE.get_or_init(|| tiktoken_rs::cl100k_base().expect("vendored cl100k_base vocabulary"))
}

/// Deterministic token count of `text` under the named tokenizer.
pub fn count_tokens(text: &str, tokenizer_id: &str) -> Result<usize, TokenizerError> {
    Ok(Tokenizer::by_id(tokenizer_id)?.count(text))
}
