//! Weakly-labeled audio tagging.
//!
//! A chunk-level multi-label tagger built on a pyramid feed-forward network
//! that reads a long stack of MFCC frames plus a background-noise estimate,
//! together with two baselines: per-tag GMM log-likelihood ratios and a
//! multiple-instance linear SVM. Evaluation is per-tag equal error rate over
//! five cross-validation folds.

pub mod audio_io;
pub mod config;
pub mod dnn;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod gmm;
pub mod misvm;
pub mod systems;
pub mod tags;

pub use error::{Error, Result};
pub use tags::{TagSet, TagVector, NUM_TAGS, TAG_LETTERS};
