//! One-tier and two-tier text embedding toolkit.
//!
//! The lower tier turns words into vectors (skipgram, subword skipgram,
//! GloVe, or Poincaré-ball embeddings). The optional upper tier turns the
//! word vectors of a sentence into one sentence vector (pooling or a
//! seq2seq autoencoder's context vector). A fixed CNN+GRU classifier is then
//! trained on either representation so the embeddings can be compared on a
//! reaction-annotated sentiment task.

pub mod checkpoint;
pub mod classifier;
pub mod config;
pub mod corpus;
pub mod error;
pub mod euclid;
pub mod harness;
pub mod hyperbolic;
pub mod layers;
pub mod numeric;
pub mod rng;
pub mod sentence;
pub mod wordvec;

pub use error::{Error, Result};
