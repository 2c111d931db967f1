use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::gold::GoldSet;
use super::metrics::{answer_accuracy, average_precision, exact_match, precision_at_k, recall, token_f1};
use crate::error::{Error, Result};
use crate::orchestrator::{Pipeline, Query, QueryMode};
use crate::par::Execution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub precision_at_k: f64,
    pub recall: f64,
    pub map: f64,
    /// QA metrics are absent when the gold set has no QA entries.
    pub accuracy: Option<f64>,
    pub exact_match: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalDetail {
    pub query: String,
    pub retrieved: Vec<String>,
    pub relevant: BTreeSet<String>,
    /// Distinct image ids linked to the retrieved chunks, in rank order.
    pub image_ids: Vec<String>,
    pub precision_at_k: f64,
    pub recall: f64,
    pub average_precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaDetail {
    pub question: String,
    pub answer: String,
    pub degraded: bool,
    pub accuracy: f64,
    pub exact_match: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub mode: QueryMode,
    pub k: usize,
    pub timestamp: String,
    pub metrics: RunMetrics,
    pub retrieval: Vec<RetrievalDetail>,
    pub qa: Vec<QaDetail>,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub modes: Vec<QueryMode>,
    pub k: usize,
    /// Embedded verbatim so a run can be repeated.
    pub config: serde_json::Value,
    /// Defaults to the current UTC time.
    pub timestamp: Option<String>,
    pub execution: Execution,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            modes: QueryMode::ALL.to_vec(),
            k: 10,
            config: serde_json::Value::Null,
            timestamp: None,
            execution: Execution::default(),
        }
    }
}

pub fn timestamp_now() -> String {
    chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string()
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// One report per requested mode, computed with the metric functions of
/// this module.
pub fn run_ablation_matrix(pipeline: &Pipeline, gold: &GoldSet, options: &RunOptions) -> Result<Vec<RunReport>> {
    gold.validate()?;
    if options.k == 0 {
        return Err(Error::validation("k", "must be at least 1"));
    }
    if options.modes.is_empty() {
        return Err(Error::validation("modes", "at least one mode is required"));
    }
    let missing: Vec<&str> = options
        .modes
        .iter()
        .filter(|m| !pipeline.kb().has_mode(**m))
        .map(|m| m.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!("no index built for mode(s): {}", missing.join(", "))));
    }
    let timestamp = options.timestamp.clone().unwrap_or_else(timestamp_now);
    let exec = options.execution;

    options
        .modes
        .iter()
        .map(|&mode| {
            let retrieval = exec
                .map(&gold.retrieval, |g| -> Result<RetrievalDetail> {
                    let r = pipeline.retrieve(&Query::new(g.query.clone(), options.k, mode)?)?;
                    let retrieved: Vec<String> = r.hits.iter().map(|h| h.chunk.chunk_id.clone()).collect();
                    let mut image_ids: Vec<String> = Vec::new();
                    for id in r.hits.iter().flat_map(|h| &h.image_ids) {
                        if !image_ids.contains(id) {
                            image_ids.push(id.clone());
                        }
                    }
                    Ok(RetrievalDetail {
                        query: g.query.clone(),
                        precision_at_k: precision_at_k(&retrieved, &g.relevant_ids, options.k),
                        recall: recall(&retrieved, &g.relevant_ids),
                        average_precision: average_precision(&retrieved, &g.relevant_ids),
                        relevant: g.relevant_ids.clone(),
                        image_ids,
                        retrieved,
                    })
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            let qa = exec
                .map(&gold.qa, |g| -> Result<QaDetail> {
                    let a = pipeline.answer_query(&Query::new(g.question.clone(), options.k, mode)?)?;
                    Ok(QaDetail {
                        question: g.question.clone(),
                        accuracy: answer_accuracy(&a.text, &g.gold_answers),
                        exact_match: exact_match(&a.text, &g.gold_answers),
                        f1: token_f1(&a.text, &g.gold_answers),
                        degraded: a.degraded,
                        answer: a.text,
                    })
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            let metrics = RunMetrics {
                precision_at_k: mean(retrieval.iter().map(|d| d.precision_at_k)).unwrap_or(0.0),
                recall: mean(retrieval.iter().map(|d| d.recall)).unwrap_or(0.0),
                map: mean(retrieval.iter().map(|d| d.average_precision)).unwrap_or(0.0),
                accuracy: mean(qa.iter().map(|d| d.accuracy)),
                exact_match: mean(qa.iter().map(|d| d.exact_match)),
                f1: mean(qa.iter().map(|d| d.f1)),
            };
            Ok(RunReport {
                run_id: format!("{timestamp}-{mode}"),
                mode,
                k: options.k,
                timestamp: timestamp.clone(),
                metrics,
                retrieval,
                qa,
                config: options.config.clone(),
            })
        })
        .collect()
}

fn valid_run_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Writes `<dir>/<run_id>.json` and returns the path.
pub fn write_report(dir: &Path, report: &RunReport) -> Result<PathBuf> {
    if !valid_run_id(&report.run_id) {
        return Err(Error::validation("run_id", format!("`{}` is not a safe file name", report.run_id)));
    }
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.json", report.run_id));
    let mut body = serde_json::to_string_pretty(report)?;
    body.push('\n');
    std::fs::write(&path, body)?;
    Ok(path)
}

pub fn read_report(dir: &Path, run_id: &str) -> Result<RunReport> {
    if !valid_run_id(run_id) {
        return Err(Error::validation("run_id", format!("`{run_id}` is not a valid run id")));
    }
    let path = dir.join(format!("{run_id}.json"));
    let text = std::fs::read_to_string(&path).map_err(|_| Error::NotFound(format!("run `{run_id}`")))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub mode: QueryMode,
    pub timestamp: String,
    pub k: usize,
    pub metrics: RunMetrics,
}

/// Summaries of every readable report in `dir`, newest first.
pub fn list_reports(dir: &Path) -> Result<Vec<RunSummary>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let Ok(text) = std::fs::read_to_string(&path) else { continue };
        match serde_json::from_str::<RunReport>(&text) {
            Ok(r) => out.push(RunSummary {
                run_id: r.run_id,
                mode: r.mode,
                timestamp: r.timestamp,
                k: r.k,
                metrics: r.metrics,
            }),
            Err(e) => log::warn!("skipping {}: {e}", path.display()),
        }
    }
    out.sort_by(|a, b| b.run_id.cmp(&a.run_id));
    Ok(out)
}
