pub mod config;
pub mod dataset_io;
pub mod embedding;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod learners;
pub mod pipeline;
pub mod report;
pub mod scalar;
pub mod seed;
pub mod source_select;
pub mod synth;
pub mod transfer;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision instantiations.
pub type PairF64 = encoder::EncodedPair<f64>;
pub type ModelF64 = transfer::TransferModel<f64>;
pub type LearnerModelF64 = learners::LearnerModel<f64>;
pub type EmbeddingsF64 = embedding::EmbeddingStore<f64>;

/// Single-precision instantiations.
pub type PairF32 = encoder::EncodedPair<f32>;
pub type ModelF32 = transfer::TransferModel<f32>;
pub type LearnerModelF32 = learners::LearnerModel<f32>;
pub type EmbeddingsF32 = embedding::EmbeddingStore<f32>;
