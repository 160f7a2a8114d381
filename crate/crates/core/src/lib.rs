//! Training-free video temporal grounding.
//!
//! Given per-frame embeddings of a video and an embedding of a text query,
//! the pipeline
//!
//! 1. smooths the frame features with a sliding-window average ([`pooling`]),
//! 2. clusters the smoothed frames with a temporally windowed k-means
//!    ([`clustering`]),
//! 3. turns cluster-label changes into candidate intervals ([`proposals`]),
//! 4. de-skews the per-frame query similarities with a fitted power transform
//!    ([`similarity`]),
//! 5. and picks the interval whose inside-minus-outside mean similarity is
//!    largest ([`selection`]).
//!
//! [`metrics`] holds the evaluation harness and [`io`] the on-disk formats.

pub mod clustering;
pub mod config;
pub mod error;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod pooling;
pub mod proposals;
pub mod selection;
pub mod similarity;

pub use config::{load_config, PipelineConfig};
pub use error::{Error, Result};
pub use io::{FeatureSequence, QueryEmbedding};
pub use pipeline::{analyze_video, ground, GroundingResult, VideoAnalysis};
