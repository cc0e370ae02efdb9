//! Self-supervised clustering (SSC) with path integral clustering (PIC)
//! for speaker diarization.
//!
//! The pipeline ingests fixed-window embedding sequences (one row per
//! segment window), alternates graph-structural clustering with
//! triplet-based representation refinement, and emits speaker-labeled
//! segments scored with diarization error rate.
//!
//! Modules:
//! - [`data`]: recordings, segment grids, RTTM/embedding IO, synthetic data
//! - [`similarity`]: cosine scoring, whitening, PCA, temporal reweighting
//! - [`ahc`]: agglomerative clustering with selectable linkage
//! - [`pic`]: k-NN digraph, path integrals, graph-structural merging
//! - [`repnet`]: two-layer representation network and triplet training
//! - [`ssc`]: the iterative representation-learning + clustering engine
//! - [`scoring`]: DER with collar, speaker mapping, F-ratio diagnostic

pub mod ahc;
pub mod data;
pub mod error;
pub mod partition;
pub mod pic;
pub mod repnet;
pub mod scoring;
pub mod similarity;
pub mod ssc;

pub use error::{Error, Result};
pub use partition::Partition;
