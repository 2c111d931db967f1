use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{
    chunk_article, clean_article, detect_format, normalize_figure, summarize_table, ArticleError,
    Chunk, ChunkPolicy, ImageRef, RawArticle,
};
use crate::embed::ImageCaptioner;
use crate::error::{Error, Result};
use crate::llm::Generator;
use crate::Execution;

pub const CHUNKS_FILE: &str = "chunks.jsonl";
pub const IMAGES_DIR: &str = "images";

/// Chunks plus normalised PNG figures keyed by image id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub chunks: Vec<Chunk>,
    pub images: BTreeMap<String, Vec<u8>>,
}

impl Corpus {
    /// Writes `chunks.jsonl` and `images/<id>.png` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join(IMAGES_DIR))?;
        let mut out = BufWriter::new(fs::File::create(dir.join(CHUNKS_FILE))?);
        for chunk in &self.chunks {
            serde_json::to_writer(&mut out, chunk)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        for (id, png) in &self.images {
            fs::write(dir.join(IMAGES_DIR).join(format!("{id}.png")), png)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let chunks_path = dir.join(CHUNKS_FILE);
        if !chunks_path.is_file() {
            return Err(Error::NotFound(format!(
                "corpus file {} does not exist",
                chunks_path.display()
            )));
        }
        let reader = BufReader::new(fs::File::open(&chunks_path)?);
        let mut chunks = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let chunk: Chunk = serde_json::from_str(&line).map_err(|e| Error::Parse {
                field: format!("{}:{}", CHUNKS_FILE, lineno + 1),
                message: e.to_string(),
            })?;
            chunks.push(chunk);
        }
        let mut images = BTreeMap::new();
        let image_dir = dir.join(IMAGES_DIR);
        if image_dir.is_dir() {
            for entry in fs::read_dir(&image_dir)? {
                let path = entry?.path();
                if path.extension().and_then(|e| e.to_str()) != Some("png") {
                    continue;
                }
                if let Some(id) = path.file_stem().and_then(|s| s.to_str()) {
                    images.insert(id.to_string(), fs::read(&path)?);
                }
            }
        }
        let corpus = Self { chunks, images };
        corpus.validate()?;
        Ok(corpus)
    }

    /// Chunk ids are unique and every chunk has text.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for chunk in &self.chunks {
            if !seen.insert(chunk.chunk_id.as_str()) {
                return Err(Error::validation(
                    "chunk_id",
                    format!("duplicate id {}", chunk.chunk_id),
                ));
            }
            if chunk.text.trim().is_empty() {
                return Err(Error::validation(
                    "text",
                    format!("chunk {} is empty", chunk.chunk_id),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct CorpusBuild {
    pub corpus: Corpus,
    pub warnings: Vec<String>,
    pub errors: Vec<ArticleError>,
}

/// Knobs for [`build_corpus`].
#[derive(Clone, Copy, Default)]
pub struct BuildOptions<'a> {
    pub policy: ChunkPolicy,
    pub table_backend: Option<&'a dyn Generator>,
    pub captioner: Option<&'a dyn ImageCaptioner>,
    pub execution: Execution,
}

struct ArticleOutput {
    chunks: Vec<Chunk>,
    images: Vec<(String, Vec<u8>)>,
    warnings: Vec<String>,
    errors: Vec<ArticleError>,
}

fn process_article(mut article: RawArticle, opts: &BuildOptions<'_>) -> ArticleOutput {
    let mut warnings = Vec::new();
    let mut errors = Vec::new();
    let mut images = Vec::new();

    clean_article(&mut article);

    if let Some(backend) = opts.table_backend {
        for table in &mut article.tables {
            let summary = summarize_table(table, Some(backend));
            if let Some(w) = summary.warning {
                warnings.push(format!("pmid {}: {w}", article.pmid));
            }
            table.summary = Some(summary.text);
        }
    }

    for i in 0..article.figures.len() {
        let id = article.image_id(i);
        let figure = &mut article.figures[i];
        let ImageRef::Inline(bytes) = &figure.image else {
            warnings.push(format!("pmid {}: figure {i} has no image data", article.pmid));
            continue;
        };
        let declared = if figure.format.is_empty() {
            detect_format(bytes).unwrap_or_default().to_string()
        } else {
            figure.format.clone()
        };
        let normalized = match normalize_figure(bytes, &declared, &article.pmid, i) {
            Ok(n) => n,
            Err(e) => {
                errors.push(ArticleError {
                    pmid: article.pmid.clone(),
                    message: e.to_string(),
                });
                figure.image = ImageRef::Missing;
                continue;
            }
        };
        if let Some(captioner) = opts.captioner {
            match captioner.caption(&normalized.png) {
                Ok(caption) => figure.caption = caption,
                Err(e) => warnings.push(format!(
                    "pmid {}: captioning figure {i} failed, keeping parsed caption: {e}",
                    article.pmid
                )),
            }
        }
        images.push((id, normalized.png));
    }

    ArticleOutput {
        chunks: chunk_article(&article, &opts.policy),
        images,
        warnings,
        errors,
    }
}

/// Cleans, summarises, captions, normalises and chunks articles. Articles
/// are processed independently (in parallel when allowed); results keep the
/// input order.
pub fn build_corpus(articles: Vec<RawArticle>, opts: &BuildOptions<'_>) -> CorpusBuild {
    let mut seen_pmids = HashSet::new();
    let mut build = CorpusBuild::default();
    let unique: Vec<RawArticle> = articles
        .into_iter()
        .filter(|a| {
            let fresh = seen_pmids.insert(a.pmid.clone());
            if !fresh {
                build
                    .warnings
                    .push(format!("pmid {}: duplicate record skipped", a.pmid));
            }
            fresh
        })
        .collect();

    let outputs = opts
        .execution
        .map(&unique, |article| process_article(article.clone(), opts));
    for output in outputs {
        build.corpus.chunks.extend(output.chunks);
        build.corpus.images.extend(output.images);
        build.warnings.extend(output.warnings);
        build.errors.extend(output.errors);
    }
    build
}
