//! Hybrid word/character encoder-decoder with nested attention.

mod hybrid;
mod params;
mod word;

pub use hybrid::{
    char_decode_step_basic, char_decode_step_nested, char_memory, char_sequence_loglik, compose_oov_embedding,
    encode_sentence, hard_attention_index, sentence_terms, separate_path_init, total_loss, CharEncoding, CharStep,
    LossBreakdown, SentenceTerms, SourceEncoding,
};
pub use params::{AttentionParams, CharParams, ModelDims, ModelParams, NestedParams, Variant, WordParams};
pub use word::{
    attend, decode_step, embed_source, encode_source, initial_state, teacher_force, word_loss, Attended,
    AttentionMemory, EncodedSource, WordStep,
};
