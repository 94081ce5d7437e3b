//! Residual product quantization, the per-document record layout and the
//! query-time distance tables.

pub mod codec;
pub mod compressed;
pub mod tables;

pub use codec::{residual_sample, train_pq, PqCodec, PqConfig};
pub use compressed::{decompress, encode, record_words, CompressedCorpus, DocRecord};
pub use tables::{
    centroid_scores_into, score_tokens, score_tokens_into, score_tokens_naive_into, DistanceTables, NaiveTables,
};
