//! SC2T: self-supervised character- and context-level token embeddings for
//! plain-text tables.
//!
//! The pipeline in reading order:
//!
//! 1. [`grid`] — tokenize a message into a 2-D grid and one-hot encode tokens.
//! 2. [`context`] — build per-token horizontal/vertical context samples.
//! 3. [`nn`] — the deterministic feed-forward framework underneath.
//! 4. [`model`] — the five-subnetwork embedding model and its training loop.
//! 5. [`cluster`] — k-means++ over embeddings plus homogeneity scoring.
//! 6. [`dataset`] — retail CSV ingestion, corpus synthesis and disruption.
//! 7. [`realign`] — rebuild ragged tables against a reference line.

pub mod cluster;
pub mod context;
pub mod dataset;
pub mod error;
pub mod grid;
pub mod model;
pub mod nn;
pub mod realign;

pub use cluster::ClusterAssignment;
pub use context::{build_samples, ContextSample, WindowConfig};
pub use error::{Error, Result};
pub use grid::{tokenize_document, CharCodec, Token, TokenGrid};
pub use model::{Sc2tConfig, Sc2tModel, TrainOptions, TrainReport};
pub use nn::Tensor;
