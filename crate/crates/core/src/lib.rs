//! Sensitive-information detection over parse-tree corpora.
//!
//! * [`corpus`]: dataset records, cleaning, silver sampling, splits, annotator agreement
//! * [`embeddings`]: pretrained word vectors with a total lookup
//! * [`keyword`]: count-based baselines (inference rules, PMI thresholding, Keyword-Max)
//! * [`recnn`]: the recursive neural network over binarized trees
//! * [`selective`]: cluster-based training-set reduction and routed prediction
//! * [`evalkit`]: metrics and synthetic corpora
//! * [`container`]: the on-disk model format shared by all model kinds
//! * [`text`]: raw-text sentence splitting for documents without parser output

pub mod container;
pub mod corpus;
pub mod embeddings;
mod error;
pub mod evalkit;
pub mod keyword;
pub mod recnn;
pub mod selective;
mod serde_util;
pub mod text;

pub use error::{Error, Result};
