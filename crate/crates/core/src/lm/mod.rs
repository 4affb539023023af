//! Modified Kneser-Ney n-gram language model and n-best reranking.

mod kn;
mod rerank;

pub use kn::{train_kn_lm, NgramModel, LM_MAGIC, LM_VERSION};
pub use rerank::{default_grid, rerank, rerank_scored, tune_lambda, tune_lambda_scored, Reranked, Tuning};
