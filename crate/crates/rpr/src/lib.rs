//! Unsupervised radar place recognition: spin- and video-sampled
//! instance discrimination over radar sequences, plus the retrieval
//! evaluation suite and a synthetic radar world for desk-scale checks.

pub mod config;
pub mod embedder;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod ingest;
pub mod loss;
pub mod nn;
pub mod sampling;
pub mod simworld;
pub mod trainer;

pub use error::{Error, Result};
