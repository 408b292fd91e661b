//! Measures how biased associations in image-embedding spaces change between
//! a pretrained and a finetuned model.
//!
//! The numerical routines are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision for common use. Embedding files are always
//! binary32 on disk.

pub mod association;
pub mod bts;
pub mod rng;
pub mod scalar;
pub mod similarity;
pub mod store;

pub use association::{
    association_s, differential_association, effect_size, permutation_test, AssociationError,
    AssociationResult, PermutationConfig, PermutationMode,
};
pub use bts::{
    build_profiles, bts, bts_with, spearman, BtsError, BtsMethod, BtsResult, ProfileKey, Sidedness,
    SimilarityProfile,
};
pub use scalar::Scalar;
pub use similarity::{
    cosine_similarity, exact_inter_mean, exact_intra_mean, inter_class_similarity,
    intra_class_similarity, EstimateKind, SamplingConfig, SimilarityError, SimilarityEstimate,
};
pub use store::{read_embeddings, read_manifest, write_embeddings, AnalysisSetManifest, ClassEmbeddings, StoreError};

pub type ClassEmbeddingsF32 = ClassEmbeddings<f32>;
pub type ClassEmbeddingsF64 = ClassEmbeddings<f64>;
pub type SimilarityEstimateF32 = SimilarityEstimate<f32>;
pub type SimilarityEstimateF64 = SimilarityEstimate<f64>;
pub type AssociationResultF64 = AssociationResult<f64>;
pub type SimilarityProfileF64 = SimilarityProfile<f64>;
pub type BtsResultF64 = BtsResult<f64>;
