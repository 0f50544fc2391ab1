//! Benchmarking of LLM pipelines (plain, retrieval-augmented, few-shot) and
//! cost-aware deployment planning over the measured runs.
//!
//! Numeric kernels (vector store, latency and cost scaling, Pareto front) are
//! generic over [`Scalar`]; the aliases below fix the precision.

pub mod backends;
pub mod config;
pub mod corpus;
pub mod evaluators;
pub mod monitor;
pub mod num;
pub mod recommender;
pub mod vectorstore;

pub use num::Scalar;

pub type VectorIndexF32 = vectorstore::VectorIndex<f32>;
pub type VectorIndexF64 = vectorstore::VectorIndex<f64>;
pub type ScalarQuantParamsF32 = vectorstore::ScalarQuantParams<f32>;
pub type ScalarQuantParamsF64 = vectorstore::ScalarQuantParams<f64>;
pub type ProductQuantParamsF32 = vectorstore::ProductQuantParams<f32>;
pub type ProductQuantParamsF64 = vectorstore::ProductQuantParams<f64>;
pub type SearchHitF32 = vectorstore::SearchHit<f32>;
pub type SearchHitF64 = vectorstore::SearchHit<f64>;
