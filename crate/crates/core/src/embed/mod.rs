//! Text and image embeddings, figure captioning, and fine-tuning job
//! descriptors.

mod deterministic;
mod finetune;
mod provider;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use deterministic::{deterministic_raw, deterministic_test_embedding, l2_normalize};
pub use finetune::{emit_finetune_job, parse_finetune_job, FineTuneSpec};
pub use provider::{EmbeddingProvider, ProviderConfig, ProviderKind, DEFAULT_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    Image,
}

/// An embedding tagged with the id of what it encodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub source_id: String,
    pub modality: Modality,
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Produces a caption for a PNG figure.
pub trait ImageCaptioner: Send + Sync {
    fn caption(&self, png: &[u8]) -> Result<String>;
}

impl ImageCaptioner for EmbeddingProvider {
    fn caption(&self, png: &[u8]) -> Result<String> {
        self.caption_image(png)
    }
}
