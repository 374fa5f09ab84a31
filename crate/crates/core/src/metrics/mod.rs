//! Evaluation: semantic diversity, a trainable humour classifier, and
//! pluggable external scorers.

pub mod classifier;
pub mod diversity;
pub mod embedding;
pub mod negatives;
pub mod report;
pub mod scorers;

pub use classifier::{
    humour_score, train_humour_classifier, ClassifierConfig, HumourClassifierParams,
};
pub use diversity::diversity_score;
pub use embedding::{EmbeddingProvider, HashEmbedder, SplitProvider, TableEmbedder};
pub use negatives::{negative_samples, NegativeSamplingSpec};
pub use report::{ScoreItem, ScoreReport};
pub use scorers::{external_score, Scorer, ScorerRegistry};
