//! Unsupervised, similarity-based aspect and category extraction.
//!
//! Attention over the words of a sentence is emulated with embedding
//! similarity instead of a trained network: each token is compared with
//! the reference words of every category, and a softmax over those
//! similarities gives per-category attention weights. Aggregated
//! similarities decide the sentence category, and the highest-attention
//! words of categorized sentences form per-category aspect lexicons.
//!
//! The stages, in pipeline order:
//!
//! - [`corpus`]: sentence splitting, tokenization, normalization and
//!   keyword filtering of raw reviews.
//! - [`embedding`]: CBOW word embeddings with negative sampling, the
//!   word2vec text format, cosine similarity and nearest neighbours.
//! - [`attention`]: similarity and attention values per token and category.
//! - [`classify`]: category attribution and aspect extraction.
//! - [`eval`]: precision/recall/F1 and stage timing.

pub mod attention;
pub mod classify;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod synthetic;

pub use attention::{
    annotate, attention_weights, expand_references, group_similarity, AnnotatedSentence,
    AttentionScorer, CategoryScores, GroupCombine, ReferenceGroup, SimilarityMode,
};
pub use classify::{
    assign_all, assign_category, extract_aspects, sentence_score, AggregationMode, AspectLexicon,
    AspectWeighting, CategoryAssignment,
};
pub use corpus::{
    filter_corpus, normalize, split_sentences, tokenize, KeywordFilter, PreprocessConfig,
    RawDocument, Sentence, StemmerKind,
};
pub use embedding::{cosine, load_model, save_model, train_cbow, EmbeddingModel, TrainConfig};
pub use error::{Error, Result};
pub use eval::{
    confusion_counts, evaluate, macro_average, precision_recall_f1, runtime_report,
    ConfusionCounts, Counts, EvalReport, LabelUnion, MetricRow, TimingReport,
};
