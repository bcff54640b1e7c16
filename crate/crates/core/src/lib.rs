//! Named entity recognition with a linear-chain CRF over hand-built
//! lexical features, word-embedding clusters and gazetteers.
//!
//! The pieces, bottom up:
//!
//! - [`conll`]: column-format corpora, BIO labels, corpus statistics.
//! - [`features`]: feature templates and the feature index.
//! - [`clustering`]: embedding tables and k-means word clusters.
//! - [`gazetteer`]: typed entity lists and longest-match lookup.
//! - [`crf`]: the model, inference, training and serialization.
//! - [`eval`]: span-level precision, recall and F1.
//! - [`pipeline`] and [`cli`]: end-to-end commands.

pub mod cli;
pub mod clustering;
pub mod conll;
pub mod crf;
pub mod error;
pub mod eval;
pub mod features;
pub mod gazetteer;
pub mod pipeline;

pub use error::{Error, Result};
