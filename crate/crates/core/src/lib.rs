//! Training objective, evaluation metrics, corpus statistics and curation
//! for humorous image-caption generation, exercised through a tiny
//! conditional caption generator.

pub mod batch;
pub mod corpus;
pub mod curate;
pub mod error;
pub mod floatrows;
pub mod loss;
pub mod manifest;
pub mod toycap;
pub mod vocab;

pub use batch::{pad_batch, TokenBatch};
pub use error::{Error, Result};
pub use loss::{
    position_loss, position_loss_grad, weight, KernelSpec, KernelVariant, LossConfig, Reduction,
};
pub use manifest::{load_manifest, save_manifest, CaptionRecord, CorpusManifest, Split};
pub use vocab::{tokenize, TokenId, Vocabulary, BOS, EOS, PAD, UNK};
pub mod metrics;
pub mod sweep;
pub mod synth;
