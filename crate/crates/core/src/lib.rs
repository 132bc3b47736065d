//! Training-free sentence encoders built from pre-trained (or random) word
//! embeddings, plus the harness that evaluates them with a trained linear head.
//!
//! The pipeline: a word-embedding table ([`embeddings`]) feeds one of four
//! frozen encoder families ([`encoders`]) — bag of embeddings, bag of random
//! embedding projections, random bidirectional LSTM, bidirectional echo state
//! network — whose pooled sentence vectors are consumed by a logistic-regression
//! or KL-trained head ([`classifier`]). The [`harness`] module runs the
//! seed-averaged, grid-tuned evaluation protocol and [`diagnostics`] covers the
//! analysis tooling (dimension sweeps, random re-projection, padded-pooling
//! statistics, synthetic probing tasks).
//!
//! All randomness flows through labeled, platform-independent streams
//! ([`numerics::SeededRng`]) so every artifact is reproducible bit-for-bit from
//! a seed.

pub mod classifier;
pub mod diagnostics;
pub mod embeddings;
pub mod encoders;
mod error;
pub mod harness;
pub mod numerics;
pub mod oracle;
pub mod selfcheck;
pub mod vecio;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
