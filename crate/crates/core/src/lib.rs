//! Grayscale images as phase-encoded multimode coherent states.
//!
//! A source coherent state is split into `T` equal daughters by a beam
//! splitter network, each daughter picks up a phase proportional to its
//! pixel's intensity, and the image is read back by interfering each mode with
//! an auxiliary state and counting dark-port photons. Interfering two encoded
//! images mode by mode gives their cosine similarity directly.

pub mod codec;
pub mod error;
pub mod experiments;
pub mod network;
pub mod optics;
pub mod pgm;
pub mod registry;
pub mod report;
pub mod rng;
pub mod similarity;

pub use codec::{
    decode_phase, encode_image, encode_with, expected_pixel_signal, optimal_amplitude,
    retrieve_image, sample_pixel_signal, EncodingParams, GrayImage, NormalizedImage, PhaseImage,
    ReadoutMode,
};
pub use error::{Error, Result};
pub use network::{
    build_balanced_tree, build_gamma_chain, chop, chop_registry, effective_unitary, ChopStrategy,
    NetworkPlan,
};
pub use optics::{
    apply_unitary, bs_matrix, compose, overlap, CoherentField, GateElement, ModeUnitary,
};
pub use registry::Registry;
pub use similarity::{
    cosine_similarity, cosine_similarity_measured, mse, rank_registry, ImageDatabase, RankStrategy,
    SimilarityReport,
};
