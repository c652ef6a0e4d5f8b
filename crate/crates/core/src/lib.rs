//! Neural-collapse coreset sampling for two-class (real/fake) detection data.
//!
//! The pipeline: score samples with a trained detector, keep the correctly
//! classified ones, measure class geometry of their embeddings, pick the
//! samples nearest their class mean (or nearest their cluster mean for the
//! multi-modal fake class), merge, retrain and evaluate.

pub mod collapse;
pub mod embedding_io;
pub mod error;
pub mod eval_metrics;
pub mod features;
pub mod kmeans;
pub mod sampler;
pub mod toy_model;

pub use embedding_io::{EmbeddingRecord, EmbeddingTable, Label, ScoreTable, SelectionManifest};
pub use error::{Error, Result};
