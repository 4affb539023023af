//! Parallel corpora, vocabularies, batches and M2 gold annotations.

mod batch;
mod m2;
mod parallel;
mod vocab;

pub use batch::{decode_side, encode_batch, make_batches, Batch, EncodedSide, Example};
pub use m2::{parse_m2, parse_m2_str, M2Document, M2Sentence};
pub use parallel::{load_parallel_corpus, load_sentences, parse_parallel, tokenize, CorpusFilter, SentencePair};
pub use vocab::{
    build_vocab, CharVocabulary, VocabMode, VocabPair, Vocabulary, BOS, BOW, CHAR_PAD, CHAR_UNK, EOS, EOW, PAD,
    UNK,
};
