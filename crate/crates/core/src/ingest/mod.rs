//! Literature ingestion: E-utilities client, record parsing, cleaning,
//! figure normalisation and chunking.

mod chunk;
mod clean;
mod corpus;
mod eutils;
mod figure;
mod parse;
mod rate_limit;
mod table;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use chunk::{chunk_article, reconstruct_section, ChunkPolicy};
pub use clean::{clean_article, clean_text};
pub use corpus::{build_corpus, BuildOptions, Corpus, CorpusBuild, CHUNKS_FILE, IMAGES_DIR};
pub use eutils::{search_pubmed, EutilsClient, EutilsConfig, FetchOutcome};
pub use figure::{detect_format, normalize_figure, NormalizedImage, SUPPORTED_FORMATS};
pub use parse::{parse_article_set, ParsedSet};
pub use rate_limit::RateLimiter;
pub use table::{flatten_table, summarize_table, TableSummary};

/// A search hit: PubMed id plus title when the source reported one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleRef {
    pub pmid: String,
    pub title: String,
}

impl ArticleRef {
    pub fn new(pmid: impl Into<String>, title: impl Into<String>) -> Result<Self> {
        let pmid = pmid.into();
        validate_pmid(&pmid)?;
        Ok(Self {
            pmid,
            title: title.into(),
        })
    }
}

pub(crate) fn validate_pmid(pmid: &str) -> Result<()> {
    if pmid.is_empty() || !pmid.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::validation("pmid", format!("`{pmid}` is not a numeric id")));
    }
    Ok(())
}

/// A titled body of text in document order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub title: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub caption: String,
    pub rows: Vec<Vec<String>>,
    /// Filled in by [`summarize_table`] when a generation backend is used;
    /// otherwise chunking falls back to [`flatten_table`].
    pub summary: Option<String>,
}

/// Where a figure's pixels live.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageRef {
    Inline(Vec<u8>),
    Href(String),
    Missing,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Figure {
    pub caption: String,
    pub image: ImageRef,
    /// Declared format (`PNG`, `JPEG`, ...); empty when unknown.
    pub format: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawArticle {
    pub pmid: String,
    pub title: String,
    pub abstract_text: String,
    pub sections: Vec<Section>,
    pub tables: Vec<Table>,
    pub figures: Vec<Figure>,
}

impl RawArticle {
    /// Object-store id of the `index`-th figure.
    pub fn image_id(&self, index: usize) -> String {
        image_id(&self.pmid, index)
    }
}

pub fn image_id(pmid: &str, figure_index: usize) -> String {
    format!("{pmid}-fig{figure_index}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkKind {
    Text,
    TableSummary,
    FigureCaption,
}

/// One indexable unit of content.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub pmid: String,
    pub section_title: String,
    pub kind: ChunkKind,
    pub text: String,
    pub order: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linked_image_id: Option<String>,
}

/// A per-article failure recorded without aborting the batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArticleError {
    pub pmid: String,
    pub message: String,
}
