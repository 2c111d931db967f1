use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::RetrievalResult;
use crate::error::{Error, Result};

pub const DEFAULT_TEMPLATE: &str = "You are a clinical literature assistant for Alzheimer's disease care.\n\
Answer the question using only the sources below. After each statement, cite the \
supporting source by repeating its bracketed tag exactly as written.\n\n\
Sources:\n{context}\n\n\
Question: {question}\n\n\
Answer:";

/// Context text used when no source fits or none was retrieved.
pub const NO_SOURCES: &str = "(no sources retrieved)";

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([A-Za-z_]+)\}").unwrap());

/// A prompt template with `{question}` and `{context}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self> {
        let mut seen_q = false;
        let mut seen_c = false;
        for cap in PLACEHOLDER.captures_iter(text) {
            match &cap[1] {
                "question" => seen_q = true,
                "context" => seen_c = true,
                other => return Err(Error::Template(format!("unknown placeholder {{{other}}}"))),
            }
        }
        if !seen_q || !seen_c {
            return Err(Error::Template(
                "template must contain both {question} and {context}".into(),
            ));
        }
        Ok(Self { text: text.into() })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Template(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn render(&self, question: &str, context: &str) -> String {
        // Single pass so placeholder-like text inside the inputs survives.
        PLACEHOLDER
            .replace_all(&self.text, |cap: &regex::Captures| match &cap[1] {
                "question" => question.to_string(),
                _ => context.to_string(),
            })
            .into_owned()
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::parse(DEFAULT_TEMPLATE).expect("default template is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBlock {
    pub tag: String,
    pub chunk_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub text: String,
    pub blocks: Vec<ContextBlock>,
    pub image_ids: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn source_tag(rank: usize, chunk_id: &str) -> String {
    format!("[S{rank}:{chunk_id}]")
}

/// Renders the template with tagged context blocks in retrieval order.
/// Blocks are dropped whole once `budget_chars` would be exceeded.
pub fn assemble_prompt(
    question: &str,
    result: &RetrievalResult,
    template: &PromptTemplate,
    budget_chars: usize,
) -> PromptBundle {
    const SEP: &str = "\n\n";
    let mut blocks = Vec::new();
    let mut context = String::new();
    let mut used = 0usize;
    let mut warnings = Vec::new();
    for (i, h) in result.hits.iter().enumerate() {
        let tag = source_tag(i + 1, &h.chunk.chunk_id);
        let block = format!("{tag} {}", h.chunk.text);
        let cost = block.chars().count() + if blocks.is_empty() { 0 } else { SEP.len() };
        if used + cost > budget_chars {
            warnings.push(format!(
                "context budget of {budget_chars} chars reached; kept {} of {} sources",
                blocks.len(),
                result.hits.len()
            ));
            break;
        }
        if !blocks.is_empty() {
            context.push_str(SEP);
        }
        context.push_str(&block);
        used += cost;
        blocks.push(ContextBlock {
            tag,
            chunk_id: h.chunk.chunk_id.clone(),
            text: h.chunk.text.clone(),
        });
    }
    let mut image_ids: Vec<String> = Vec::new();
    for h in &result.hits[..blocks.len()] {
        for id in &h.image_ids {
            if !image_ids.contains(id) {
                image_ids.push(id.clone());
            }
        }
    }
    let context_text = if blocks.is_empty() { NO_SOURCES } else { context.as_str() };
    PromptBundle {
        text: template.render(question, context_text),
        blocks,
        image_ids,
        warnings,
    }
}
