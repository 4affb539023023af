//! Nested-attention hybrid word/character sequence-to-sequence models for
//! grammatical error correction, with the surrounding training, decoding,
//! language-model reranking and evaluation machinery.

pub mod corpus;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod lm;
pub mod model;
pub mod numcore;
pub mod records;
pub mod trainer;

pub use error::{Error, Result};
