//! Embedding vectors, named stores, and the geometry every other module builds on.
//!
//! Stores are immutable once loaded and all operations here are pure, so they can be
//! shared freely across threads.

mod projection;
mod store;
mod vector;

pub use projection::{jl_project, JlProjection};
pub use store::{load_store, save_store, EmbeddingStore, PromptKey, StoreKind};
pub use vector::{cosine, embedding_distance, vector_sum, EmbeddingVector, UNIT_TOLERANCE};
