//! Multimodal retrieval-augmented generation over biomedical literature.
//!
//! The crate is organised as a pipeline:
//!
//! - [`ingest`] fetches PubMed / PMC records, cleans them and cuts them into
//!   [`ingest::Chunk`]s.
//! - [`embed`] turns chunk text and figures into vectors through pluggable
//!   providers, and carries the fine-tuning job descriptors.
//! - [`fusion`] blends text and image embeddings with single-head scaled
//!   dot-product cross-modal attention (plus the concatenation baseline).
//! - [`store`] holds the vector indexes (exact and HNSW) and the object store.
//! - [`orchestrator`] answers queries: embed, retrieve, prompt, generate.
//! - [`eval`] scores retrieval and QA runs and reproduces the clinical
//!   scenario statistics.
//!
//! Data-parallel loops go through [`Execution`]; with the `parallel` feature
//! disabled every path runs sequentially.

pub mod embed;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod http;
pub mod ingest;
pub mod llm;
pub mod orchestrator;
mod par;
pub mod store;

pub use error::{Error, Result};
pub use par::Execution;
