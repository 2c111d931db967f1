use std::sync::{Arc, LazyLock};
use std::time::Instant;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::prompt::{assemble_prompt, PromptBundle, PromptTemplate};
use super::{KnowledgeBase, Query, QueryMode, RetrievalResult};
use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::llm::Generator;

static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[S(\d+):([^\]\s]+)\]").unwrap());

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub template: PromptTemplate,
    /// Maximum characters of context placed in the prompt.
    pub context_budget: usize,
    /// Passages listed in a degraded extractive answer.
    pub extractive_passages: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            template: PromptTemplate::default(),
            context_budget: 8000,
            extractive_passages: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub question: String,
    pub text: String,
    pub cited_chunk_ids: Vec<String>,
    pub image_ids: Vec<String>,
    pub mode: QueryMode,
    pub latency_ms: u64,
    /// Set when the text is an extractive fallback rather than generated.
    pub degraded: bool,
    pub warnings: Vec<String>,
    pub retrieval: RetrievalResult,
}

/// Chunk ids of the source tags in `text` that name a context block, in
/// order of first appearance.
pub fn extract_citations(text: &str, prompt: &PromptBundle) -> Vec<String> {
    let mut cited: Vec<String> = Vec::new();
    for cap in TAG.captures_iter(text) {
        let rank: usize = match cap[1].parse() {
            Ok(r) => r,
            Err(_) => continue,
        };
        let id = &cap[2];
        let known = prompt
            .blocks
            .get(rank.wrapping_sub(1))
            .is_some_and(|b| b.chunk_id == id);
        if known && !cited.iter().any(|c| c == id) {
            cited.push(id.to_string());
        }
    }
    cited
}

/// Calls the backend. On failure the retrieval is handed back inside the
/// error so the caller can still show sources.
pub fn generate_answer(backend: &dyn Generator, prompt: &PromptBundle, retrieval: &RetrievalResult) -> Result<String> {
    backend.complete(&prompt.text).map_err(|e| Error::Generation {
        message: e.to_string(),
        retrieval: Box::new(retrieval.clone()),
    })
}

pub struct Pipeline {
    kb: Arc<KnowledgeBase>,
    embedder: EmbeddingProvider,
    generator: Option<Box<dyn Generator>>,
    config: PipelineConfig,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("modes", &self.kb.modes())
            .field("embedder", self.embedder.config())
            .field("generator", &self.generator.is_some())
            .finish()
    }
}

impl Pipeline {
    pub fn new(
        kb: Arc<KnowledgeBase>,
        embedder: EmbeddingProvider,
        generator: Option<Box<dyn Generator>>,
        config: PipelineConfig,
    ) -> Result<Self> {
        if embedder.dim() != kb.dim() {
            return Err(Error::Config(format!(
                "query embedder has dim {} but the knowledge base was built with dim {}",
                embedder.dim(),
                kb.dim()
            )));
        }
        if config.context_budget == 0 {
            return Err(Error::validation("context_budget", "must be positive"));
        }
        Ok(Self {
            kb,
            embedder,
            generator,
            config,
        })
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn has_generator(&self) -> bool {
        self.generator.is_some()
    }

    pub fn retrieve(&self, query: &Query) -> Result<RetrievalResult> {
        query.validate()?;
        if !self.kb.has_mode(query.mode) {
            return Err(Error::Config(format!("no index was built for mode {}", query.mode)));
        }
        let embedded = self.embedder.embed_texts(&[("query", query.question.as_str())])?;
        let raw = &embedded
            .first()
            .ok_or_else(|| Error::Protocol("embedder returned no vector for the query".into()))?
            .values;
        let vector = self.kb.encode_query(raw, query.mode)?;
        let hits = self.kb.search(query.mode, &vector, query.top_k)?;
        Ok(RetrievalResult {
            question: query.question.clone(),
            mode: query.mode,
            hits,
        })
    }

    pub fn assemble(&self, query: &Query, retrieval: &RetrievalResult) -> PromptBundle {
        assemble_prompt(&query.question, retrieval, &self.config.template, self.config.context_budget)
    }

    pub fn answer_query(&self, query: &Query) -> Result<Answer> {
        let started = Instant::now();
        let retrieval = self.retrieve(query)?;
        let prompt = self.assemble(query, &retrieval);
        let mut warnings = prompt.warnings.clone();

        let generated = match &self.generator {
            None => {
                warnings.push("no generation backend configured; returning retrieved passages".into());
                None
            }
            Some(g) => match generate_answer(g.as_ref(), &prompt, &retrieval) {
                Ok(text) => Some(text),
                Err(e) => {
                    log::warn!("{e}");
                    warnings.push(format!("{e}; returning retrieved passages"));
                    None
                }
            },
        };
        let degraded = generated.is_none();
        let text = generated.unwrap_or_else(|| self.extractive(&prompt));
        let cited_chunk_ids = extract_citations(&text, &prompt);
        let image_ids = match query.mode {
            QueryMode::TextOnly => Vec::new(),
            _ => prompt.image_ids.clone(),
        };
        Ok(Answer {
            question: query.question.clone(),
            text,
            cited_chunk_ids,
            image_ids,
            mode: query.mode,
            latency_ms: started.elapsed().as_millis() as u64,
            degraded,
            warnings,
            retrieval,
        })
    }

    fn extractive(&self, prompt: &PromptBundle) -> String {
        if prompt.blocks.is_empty() {
            return "No relevant passages were found.".into();
        }
        let mut out = String::from("Most relevant passages:");
        for b in prompt.blocks.iter().take(self.config.extractive_passages) {
            out.push_str("\n\n");
            out.push_str(&b.tag);
            out.push(' ');
            out.push_str(&b.text);
        }
        out
    }
}
