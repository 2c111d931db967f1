//! Query answering: embed, retrieve, build a prompt, generate, cite.

mod kb;
mod pipeline;
mod prompt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Chunk;
use crate::store::ScoredHit;

pub use kb::{KbManifest, KbSettings, KnowledgeBase, MANIFEST_FILE, FUSION_FILE};
pub use pipeline::{extract_citations, generate_answer, Answer, Pipeline, PipelineConfig};
pub use prompt::{assemble_prompt, ContextBlock, PromptBundle, PromptTemplate, DEFAULT_TEMPLATE, NO_SOURCES};

pub const DEFAULT_TOP_K: usize = 10;

/// Retrieval configurations compared in the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    /// Cross-modal attention fused index.
    Full,
    /// Text and image embeddings concatenated without attention.
    NoFusionConcat,
    /// Text embeddings only.
    TextOnly,
}

impl QueryMode {
    pub const ALL: [QueryMode; 3] = [QueryMode::Full, QueryMode::NoFusionConcat, QueryMode::TextOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryMode::Full => "full",
            QueryMode::NoFusionConcat => "no_fusion_concat",
            QueryMode::TextOnly => "text_only",
        }
    }

    /// Parses a comma-separated list such as `full,text_only`.
    pub fn parse_list(s: &str) -> Result<Vec<QueryMode>> {
        let mut modes = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let mode = part.parse()?;
            if !modes.contains(&mode) {
                modes.push(mode);
            }
        }
        if modes.is_empty() {
            return Err(Error::validation("modes", "at least one mode is required"));
        }
        Ok(modes)
    }
}

impl std::fmt::Display for QueryMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for QueryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        QueryMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::validation("mode", format!("`{s}` is not one of full, no_fusion_concat, text_only"))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub question: String,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_mode")]
    pub mode: QueryMode,
}

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

fn default_mode() -> QueryMode {
    QueryMode::Full
}

impl Query {
    pub fn new(question: impl Into<String>, top_k: usize, mode: QueryMode) -> Result<Self> {
        let q = Self {
            question: question.into(),
            top_k,
            mode,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.question.trim().is_empty() {
            return Err(Error::validation("question", "must not be empty"));
        }
        if self.top_k == 0 {
            return Err(Error::validation("top_k", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedHit {
    pub hit: ScoredHit,
    pub chunk: Chunk,
    pub image_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub question: String,
    pub mode: QueryMode,
    pub hits: Vec<RetrievedHit>,
}

impl RetrievalResult {
    pub fn chunk_ids(&self) -> Vec<&str> {
        self.hits.iter().map(|h| h.chunk.chunk_id.as_str()).collect()
    }
}
