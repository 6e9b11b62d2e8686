//! Dynamic target-vocabulary selection for sequence-to-sequence translation.
//!
//! The crate learns word-level and sentence-level selection functions from a
//! parallel corpus (co-occurrence counts, PMI, Hellinger PCA embeddings,
//! word alignments, phrase pairs and per-word linear SVMs), aggregates them
//! into per-sentence and per-batch target-vocabulary subsets, and measures
//! coverage, subset size and output-layer scoring cost.

pub mod align;
pub mod bench;
mod binio;
pub mod cooccur;
pub mod corpus;
pub mod error;
pub mod pca;
pub mod phrase;
pub mod select;
pub mod svm;
pub mod synth;

pub use error::{Error, Result};
