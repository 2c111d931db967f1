use serde::{Deserialize, Serialize};

use super::{Chunk, ChunkKind, RawArticle};
use crate::error::{Error, Result};
use crate::ingest::flatten_table;

/// Sliding-window chunking limits, measured in whitespace-delimited tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkPolicy {
    pub max_tokens: usize,
    pub overlap_tokens: usize,
    pub min_tokens: usize,
}

impl Default for ChunkPolicy {
    fn default() -> Self {
        Self {
            max_tokens: 512,
            overlap_tokens: 64,
            min_tokens: 32,
        }
    }
}

impl ChunkPolicy {
    pub fn new(max_tokens: usize, overlap_tokens: usize, min_tokens: usize) -> Result<Self> {
        let policy = Self {
            max_tokens,
            overlap_tokens,
            min_tokens,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_tokens == 0 {
            return Err(Error::validation("max_tokens", "must be at least 1"));
        }
        if self.overlap_tokens >= self.max_tokens {
            return Err(Error::validation(
                "overlap_tokens",
                format!(
                    "{} must be smaller than max_tokens {}",
                    self.overlap_tokens, self.max_tokens
                ),
            ));
        }
        if self.min_tokens > self.max_tokens {
            return Err(Error::validation(
                "min_tokens",
                format!(
                    "{} exceeds max_tokens {}",
                    self.min_tokens, self.max_tokens
                ),
            ));
        }
        Ok(())
    }

    /// Token ranges `[start, end)` for a body of `n` tokens.
    ///
    /// Windows advance by `max - overlap`, so each window after the first
    /// repeats exactly `overlap` tokens of its predecessor. A trailing window
    /// shorter than `min_tokens` is folded into the one before it.
    fn windows(&self, n: usize) -> Vec<(usize, usize)> {
        if n == 0 {
            return Vec::new();
        }
        let step = self.max_tokens - self.overlap_tokens;
        let mut out = Vec::new();
        let mut start = 0;
        loop {
            let end = (start + self.max_tokens).min(n);
            out.push((start, end));
            if end == n {
                break;
            }
            start += step;
        }
        if out.len() >= 2 {
            let (s, e) = out[out.len() - 1];
            if e - s < self.min_tokens {
                out.pop();
                out.last_mut().unwrap().1 = n;
            }
        }
        out
    }
}

/// Cuts a cleaned article into chunks.
///
/// Text sections (the abstract first, titled `Abstract`, then the body
/// sections) are split with the policy's sliding window. Each table becomes
/// one `table_summary` chunk and each figure one `figure_caption` chunk.
/// Ids are `{pmid}:s{section}:b{block}`, `{pmid}:t{table}` and
/// `{pmid}:f{figure}`; section indices count empty sections too, so ids stay
/// stable when a section has no text.
pub fn chunk_article(article: &RawArticle, policy: &ChunkPolicy) -> Vec<Chunk> {
    let mut chunks = Vec::new();
    let mut order = 0u32;
    let mut push = |chunks: &mut Vec<Chunk>, chunk: Chunk| {
        chunks.push(Chunk { order, ..chunk });
        order += 1;
    };

    let abstract_section = (!article.abstract_text.is_empty())
        .then_some(("Abstract", article.abstract_text.as_str()));
    let sections = abstract_section
        .into_iter()
        .chain(article.sections.iter().map(|s| (s.title.as_str(), s.body.as_str())));

    for (si, (title, body)) in sections.enumerate() {
        let tokens: Vec<&str> = body.split_whitespace().collect();
        for (bi, (start, end)) in policy.windows(tokens.len()).into_iter().enumerate() {
            push(
                &mut chunks,
                Chunk {
                    chunk_id: format!("{}:s{si}:b{bi}", article.pmid),
                    pmid: article.pmid.clone(),
                    section_title: title.to_string(),
                    kind: ChunkKind::Text,
                    text: tokens[start..end].join(" "),
                    order: 0,
                    linked_image_id: None,
                },
            );
        }
    }

    for (ti, table) in article.tables.iter().enumerate() {
        let text = match &table.summary {
            Some(summary) => summary.trim().to_string(),
            None => flatten_table(&table.caption, &table.rows),
        };
        if text.is_empty() {
            continue;
        }
        push(
            &mut chunks,
            Chunk {
                chunk_id: format!("{}:t{ti}", article.pmid),
                pmid: article.pmid.clone(),
                section_title: "Tables".to_string(),
                kind: ChunkKind::TableSummary,
                text,
                order: 0,
                linked_image_id: None,
            },
        );
    }

    for (fi, figure) in article.figures.iter().enumerate() {
        let caption = figure.caption.trim();
        let text = if caption.is_empty() {
            format!("Figure {}", fi + 1)
        } else {
            caption.to_string()
        };
        push(
            &mut chunks,
            Chunk {
                chunk_id: format!("{}:f{fi}", article.pmid),
                pmid: article.pmid.clone(),
                section_title: "Figures".to_string(),
                kind: ChunkKind::FigureCaption,
                text,
                order: 0,
                linked_image_id: Some(article.image_id(fi)),
            },
        );
    }

    chunks
}

/// Undoes the window overlap: joins one section's text chunks, dropping the
/// first `overlap_tokens` tokens of every chunk after the first.
pub fn reconstruct_section(chunks: &[&Chunk], overlap_tokens: usize) -> String {
    let mut tokens: Vec<&str> = Vec::new();
    for (i, chunk) in chunks.iter().enumerate() {
        let skip = if i == 0 { 0 } else { overlap_tokens };
        tokens.extend(chunk.text.split_whitespace().skip(skip));
    }
    tokens.join(" ")
}
