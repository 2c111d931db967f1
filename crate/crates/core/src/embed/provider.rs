use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::deterministic::{deterministic_raw, l2_normalize};
use super::{EmbeddingVector, Modality};
use crate::error::{Error, Result};
use crate::http::{
    ChatMessage, ChatRequest, ChatResponse, ContentPart, EmbeddingsRequest, EmbeddingsResponse,
    ImageUrl, JsonClient, MessageContent,
};
use crate::par::Execution;

pub const DEFAULT_DIM: usize = 64;

const CAPTION_PROMPT: &str =
    "Describe this biomedical figure in one or two sentences for a literature search index.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    RemoteText,
    RemoteImage,
    RemoteCaption,
    DeterministicTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub model_name: String,
    pub dim: usize,
    pub timeout_ms: u64,
    pub normalize: bool,
    pub seed: u64,
    pub max_in_flight: usize,
    pub batch_size: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::DeterministicTest,
            endpoint: None,
            model_name: "deterministic".into(),
            dim: DEFAULT_DIM,
            timeout_ms: 30_000,
            normalize: true,
            seed: 0,
            max_in_flight: 4,
            batch_size: 32,
        }
    }
}

impl ProviderConfig {
    pub fn deterministic(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            seed,
            ..Self::default()
        }
    }

    pub fn remote(kind: ProviderKind, endpoint: &str, model_name: &str, dim: usize) -> Self {
        Self {
            kind,
            endpoint: Some(endpoint.to_string()),
            model_name: model_name.to_string(),
            dim,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::validation("dim", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size", "must be at least 1"));
        }
        if self.max_in_flight == 0 {
            return Err(Error::validation("max_in_flight", "must be at least 1"));
        }
        if self.kind != ProviderKind::DeterministicTest {
            match self.endpoint.as_deref() {
                Some(e) if e.starts_with("http://") || e.starts_with("https://") => {}
                Some(e) => {
                    return Err(Error::validation(
                        "endpoint",
                        format!("`{e}` is not an http(s) URL"),
                    ))
                }
                None => {
                    return Err(Error::validation("endpoint", "required for remote providers"))
                }
            }
            if self.model_name.trim().is_empty() {
                return Err(Error::validation("model_name", "must not be empty"));
            }
        }
        Ok(())
    }
}

/// Embeds text and images, and captions figures, through one configured
/// backend.
#[derive(Debug)]
pub struct EmbeddingProvider {
    config: ProviderConfig,
    client: Option<JsonClient>,
    execution: Execution,
}

impl EmbeddingProvider {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        config.validate()?;
        let client = config.endpoint.as_deref().and_then(|endpoint| {
            (config.kind != ProviderKind::DeterministicTest).then(|| {
                JsonClient::new(
                    endpoint,
                    Duration::from_millis(config.timeout_ms),
                    config.max_in_flight,
                )
            })
        });
        Ok(Self {
            config,
            client,
            execution: Execution::default(),
        })
    }

    /// Execution strategy for local (deterministic) batches.
    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    /// Embeds `(source_id, text)` pairs, preserving order.
    pub fn embed_texts(&self, items: &[(&str, &str)]) -> Result<Vec<EmbeddingVector>> {
        match self.config.kind {
            ProviderKind::DeterministicTest => Ok(self.local(items, Modality::Text, |t| {
                t.as_bytes().to_vec()
            })),
            ProviderKind::RemoteText => {
                self.remote(items, Modality::Text, |t| t.to_string())
            }
            other => Err(wrong_kind(other, "text embedding")),
        }
    }

    /// Embeds `(source_id, png_bytes)` pairs, preserving order.
    pub fn embed_images(&self, items: &[(&str, &[u8])]) -> Result<Vec<EmbeddingVector>> {
        match self.config.kind {
            ProviderKind::DeterministicTest => {
                Ok(self.local(items, Modality::Image, |b| b.to_vec()))
            }
            ProviderKind::RemoteImage => self.remote(items, Modality::Image, |b| {
                base64::engine::general_purpose::STANDARD.encode(b)
            }),
            other => Err(wrong_kind(other, "image embedding")),
        }
    }

    pub fn caption_image(&self, png: &[u8]) -> Result<String> {
        match self.config.kind {
            ProviderKind::DeterministicTest => {
                let digest = Sha256::digest(png);
                let hex: String = digest[..4].iter().map(|b| format!("{b:02x}")).collect();
                Ok(format!("image:{hex}"))
            }
            ProviderKind::RemoteCaption => {
                let client = self.client()?;
                let data = base64::engine::general_purpose::STANDARD.encode(png);
                let request = ChatRequest {
                    model: &self.config.model_name,
                    messages: vec![ChatMessage {
                        role: "user".into(),
                        content: MessageContent::Parts(vec![
                            ContentPart::Text {
                                text: CAPTION_PROMPT.into(),
                            },
                            ContentPart::ImageUrl {
                                image_url: ImageUrl {
                                    url: format!("data:image/png;base64,{data}"),
                                },
                            },
                        ]),
                    }],
                };
                let response: ChatResponse = client.post("/chat/completions", &request)?;
                let caption = response.into_text()?.trim().to_string();
                if caption.is_empty() {
                    return Err(Error::Protocol("caption backend returned empty text".into()));
                }
                Ok(caption)
            }
            other => Err(wrong_kind(other, "captioning")),
        }
    }

    fn client(&self) -> Result<&JsonClient> {
        self.client
            .as_ref()
            .ok_or_else(|| Error::Config("remote provider has no endpoint".into()))
    }

    fn local<T: ?Sized + Sync>(
        &self,
        items: &[(&str, &T)],
        modality: Modality,
        bytes: impl Fn(&T) -> Vec<u8> + Sync,
    ) -> Vec<EmbeddingVector> {
        self.execution.map(items, |(id, content)| {
            let mut values = deterministic_raw(&bytes(content), self.config.dim, self.config.seed);
            if self.config.normalize {
                l2_normalize(&mut values);
            }
            EmbeddingVector {
                source_id: id.to_string(),
                modality,
                values,
            }
        })
    }

    fn remote<T: ?Sized>(
        &self,
        items: &[(&str, &T)],
        modality: Modality,
        encode: impl Fn(&T) -> String,
    ) -> Result<Vec<EmbeddingVector>> {
        let client = self.client()?;
        let mut out = Vec::with_capacity(items.len());
        for batch in items.chunks(self.config.batch_size) {
            let request = EmbeddingsRequest {
                model: &self.config.model_name,
                input: batch.iter().map(|(_, c)| encode(c)).collect(),
            };
            let response: EmbeddingsResponse = client.post("/embeddings", &request)?;
            if response.data.len() != batch.len() {
                return Err(Error::Protocol(format!(
                    "embedding backend returned {} vectors for {} inputs",
                    response.data.len(),
                    batch.len()
                )));
            }
            for ((id, _), datum) in batch.iter().zip(response.data) {
                let mut values = datum.embedding;
                if values.len() != self.config.dim {
                    return Err(Error::Protocol(format!(
                        "embedding for `{id}` has dimension {}, expected {}",
                        values.len(),
                        self.config.dim
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Protocol(format!(
                        "embedding for `{id}` contains non-finite values"
                    )));
                }
                if self.config.normalize {
                    l2_normalize(&mut values);
                }
                out.push(EmbeddingVector {
                    source_id: id.to_string(),
                    modality,
                    values,
                });
            }
        }
        Ok(out)
    }
}

fn wrong_kind(kind: ProviderKind, what: &str) -> Error {
    Error::Config(format!("provider kind {kind:?} does not support {what}"))
}
