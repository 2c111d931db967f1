//! Subcommand implementations. Each returns data; printing is left to the
//! caller.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use medrag_core::embed::{emit_finetune_job, EmbeddingProvider, FineTuneSpec, ImageCaptioner};
use medrag_core::eval::{run_ablation_matrix, write_report, GoldSet, RunOptions, RunReport};
use medrag_core::ingest::{build_corpus, ArticleError, BuildOptions, Corpus, EutilsClient};
use medrag_core::llm::{ChatGenerator, EchoGenerator, Generator};
use medrag_core::orchestrator::{
    Answer, KbSettings, KnowledgeBase, Pipeline, PipelineConfig, PromptTemplate, Query, QueryMode,
};
use medrag_core::store::ObjectStore;
use medrag_core::Execution;

use crate::config::{AppConfig, LlmBackend, LlmSection};
use crate::error::ApiError;

pub fn build_generator(llm: &LlmSection) -> Result<Option<Box<dyn Generator>>, ApiError> {
    Ok(match llm.backend {
        LlmBackend::None => None,
        LlmBackend::Echo => Some(Box::new(EchoGenerator)),
        LlmBackend::Chat => {
            let endpoint = llm
                .endpoint
                .as_deref()
                .ok_or_else(|| ApiError::new(crate::error::ErrorCode::BadRequest, "llm.endpoint is not set"))?;
            let mut g = ChatGenerator::new(
                endpoint,
                llm.model.clone(),
                Duration::from_millis(llm.timeout_ms),
                llm.max_in_flight,
            );
            if let Some(prompt) = &llm.system_prompt {
                g = g.with_system_prompt(prompt.clone());
            }
            Some(Box::new(g))
        }
    })
}

#[derive(Debug, Default)]
pub struct IngestSummary {
    pub articles: usize,
    pub chunks: usize,
    pub images: usize,
    pub errors: Vec<ArticleError>,
    pub warnings: Vec<String>,
}

/// search -> fetch -> clean -> chunk -> normalise, then writes the corpus.
pub fn cmd_ingest(config: &AppConfig) -> Result<IngestSummary, ApiError> {
    let ingest = &config.ingest;
    let client = EutilsClient::new(ingest.eutils.clone())?;
    let refs = client.search(&ingest.term, ingest.max_results, ingest.batch_size)?;
    let mut fetched = client.fetch(&refs, ingest.batch_size);
    let mut warnings = fetched.warnings;
    warnings.extend(client.resolve_figures(&mut fetched.articles));

    let generator = if ingest.summarize_tables {
        build_generator(&config.llm)?
    } else {
        None
    };
    let captioner = if ingest.caption_figures {
        Some(EmbeddingProvider::new(config.embed.image.clone())?)
    } else {
        None
    };
    let articles = fetched.articles.len();
    let build = build_corpus(
        fetched.articles,
        &BuildOptions {
            table_backend: generator.as_deref(),
            captioner: captioner.as_ref().map(|c| c as &dyn ImageCaptioner),
            ..BuildOptions::default()
        },
    );
    replace_dir(&config.paths.corpus_dir, |dir| Ok(build.corpus.save(dir)?))?;
    warnings.extend(build.warnings);
    let mut errors = fetched.errors;
    errors.extend(build.errors);
    Ok(IngestSummary {
        articles,
        chunks: build.corpus.chunks.len(),
        images: build.corpus.images.len(),
        errors,
        warnings,
    })
}

/// Writes into a sibling staging directory, then moves it over `dir`, so a
/// failed write leaves the previous contents and no stale files survive.
fn replace_dir(dir: &Path, write: impl FnOnce(&Path) -> Result<(), ApiError>) -> Result<(), ApiError> {
    let staging = dir.with_extension("staging");
    if staging.exists() {
        std::fs::remove_dir_all(&staging)?;
    }
    if let Some(parent) = dir.parent() {
        std::fs::create_dir_all(parent)?;
    }
    write(&staging)?;
    if dir.exists() {
        std::fs::remove_dir_all(dir)?;
    }
    std::fs::rename(&staging, dir)?;
    Ok(())
}

fn providers(config: &AppConfig) -> Result<(EmbeddingProvider, EmbeddingProvider), ApiError> {
    Ok((
        EmbeddingProvider::new(config.embed.text.clone())?,
        EmbeddingProvider::new(config.embed.image.clone())?,
    ))
}

fn build_kb(config: &AppConfig, corpus_dir: &Path, settings: KbSettings) -> Result<KnowledgeBase, ApiError> {
    let corpus = Corpus::load(corpus_dir)?;
    let objects = ObjectStore::from_corpus(corpus)?;
    let (text, image) = providers(config)?;
    Ok(KnowledgeBase::build(objects, &text, &image, settings, Execution::default())?)
}

#[derive(Debug)]
pub struct IndexSummary {
    pub chunks: usize,
    pub images: usize,
    pub modes: Vec<QueryMode>,
    pub dir: PathBuf,
}

/// Embeds and fuses the corpus once and saves one index per mode. The new
/// knowledge base is written beside the old one and moved into place.
pub fn cmd_index(config: &AppConfig) -> Result<IndexSummary, ApiError> {
    let kb = build_kb(config, &config.paths.corpus_dir, config.kb.clone())?;
    let dir = config.paths.kb_dir.clone();
    replace_dir(&dir, |staging| Ok(kb.save(staging)?))?;
    Ok(IndexSummary {
        chunks: kb.manifest().chunk_count,
        images: kb.manifest().image_count,
        modes: kb.modes(),
        dir,
    })
}

fn pipeline_config(config: &AppConfig) -> Result<PipelineConfig, ApiError> {
    let template = match &config.llm.template_path {
        Some(path) => PromptTemplate::load(path)?,
        None => PromptTemplate::default(),
    };
    Ok(PipelineConfig {
        template,
        context_budget: config.llm.context_budget,
        ..PipelineConfig::default()
    })
}

pub fn pipeline_for(config: &AppConfig, kb: KnowledgeBase) -> Result<Pipeline, ApiError> {
    let embedder = EmbeddingProvider::new(config.embed.text.clone())?;
    let generator = build_generator(&config.llm)?;
    Ok(Pipeline::new(Arc::new(kb), embedder, generator, pipeline_config(config)?)?)
}

/// Pipeline over the saved knowledge base.
pub fn load_pipeline(config: &AppConfig) -> Result<Pipeline, ApiError> {
    let kb = KnowledgeBase::load(&config.paths.kb_dir)?;
    pipeline_for(config, kb)
}

pub fn cmd_query(config: &AppConfig, question: &str, mode: QueryMode, k: usize) -> Result<Answer, ApiError> {
    let query = Query::new(question, k, mode)?;
    Ok(load_pipeline(config)?.answer_query(&query)?)
}

/// Human-readable answer with its sources and images.
pub fn render_answer(answer: &Answer) -> String {
    let mut out = String::new();
    let degraded = if answer.degraded { ", degraded" } else { "" };
    let _ = writeln!(out, "Answer ({}, {} ms{degraded}):", answer.mode, answer.latency_ms);
    let _ = writeln!(out, "{}", answer.text.trim_end());
    let _ = writeln!(out);
    let _ = writeln!(out, "Sources:");
    for (rank, hit) in answer.retrieval.hits.iter().enumerate() {
        let cited = if answer.cited_chunk_ids.contains(&hit.chunk.chunk_id) { "*" } else { " " };
        let _ = writeln!(
            out,
            " {cited}[S{}] {}  pmid {}  {}  score {:.4}",
            rank + 1,
            hit.chunk.chunk_id,
            hit.chunk.pmid,
            hit.chunk.section_title,
            hit.hit.score
        );
    }
    if !answer.image_ids.is_empty() {
        let _ = writeln!(out, "Images:");
        for id in &answer.image_ids {
            let _ = writeln!(out, "  {id}");
        }
    }
    if !answer.warnings.is_empty() {
        let _ = writeln!(out, "Warnings:");
        for w in &answer.warnings {
            let _ = writeln!(out, "  {w}");
        }
    }
    out
}

#[derive(Debug, Default, Clone)]
pub struct EvalArgs {
    /// Corpus to index in memory; the saved knowledge base is used otherwise.
    pub corpus: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub modes: Option<Vec<QueryMode>>,
    pub k: Option<usize>,
    /// Fixed run timestamp, for reproducible run ids.
    pub timestamp: Option<String>,
}

pub fn cmd_eval(config: &AppConfig, args: &EvalArgs) -> Result<Vec<(RunReport, PathBuf)>, ApiError> {
    let modes = args.modes.clone().unwrap_or_else(|| config.eval.modes.clone());
    let pipeline = match &args.corpus {
        Some(dir) => {
            let settings = KbSettings {
                modes: modes.clone(),
                ..config.kb.clone()
            };
            pipeline_for(config, build_kb(config, dir, settings)?)?
        }
        None => load_pipeline(config)?,
    };
    let gold = GoldSet::load(args.gold.as_deref().unwrap_or(&config.paths.gold_dir))?;
    let options = RunOptions {
        modes,
        k: args.k.unwrap_or(config.eval.k),
        config: serde_json::to_value(config).map_err(|e| ApiError::internal(e.to_string()))?,
        timestamp: args.timestamp.clone(),
        execution: Execution::default(),
    };
    let reports = run_ablation_matrix(&pipeline, &gold, &options)?;
    reports
        .into_iter()
        .map(|r| {
            let path = write_report(&config.paths.runs_dir, &r)?;
            Ok((r, path))
        })
        .collect()
}

/// Writes every fine-tune preset as `<out>/<stem>.json`.
pub fn cmd_finetune(out: &Path) -> Result<Vec<PathBuf>, ApiError> {
    std::fs::create_dir_all(out)?;
    FineTuneSpec::presets()
        .into_iter()
        .map(|(stem, spec)| {
            let path = out.join(format!("{stem}.json"));
            std::fs::write(&path, emit_finetune_job(&spec)?)?;
            Ok(path)
        })
        .collect()
}
