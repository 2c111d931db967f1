//! NCBI E-utilities client (`esearch` + `efetch`).

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::parse::parse_article_set;
use super::rate_limit::RateLimiter;
use super::{ArticleError, ArticleRef, ImageRef, RawArticle};
use crate::error::{Error, Result};
use crate::http::truncate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EutilsConfig {
    pub esearch_url: String,
    pub efetch_url: String,
    /// `pubmed` for abstracts, `pmc` for full-text JATS records.
    pub db: String,
    pub api_key: Option<String>,
    pub rate_limit_rps: f64,
    pub timeout_ms: u64,
    /// Attempts per request, including the first one.
    pub max_attempts: u32,
    /// Base of the exponential backoff between attempts.
    pub backoff_ms: u64,
}

impl Default for EutilsConfig {
    fn default() -> Self {
        Self {
            esearch_url: "https://eutils.ncbi.nlm.nih.gov/entrez/eutils/esearch.fcgi".into(),
            efetch_url: "https://eutils.ncbi.nlm.nih.gov/entrez/eutils/efetch.fcgi".into(),
            db: "pubmed".into(),
            api_key: None,
            rate_limit_rps: 3.0,
            timeout_ms: 30_000,
            max_attempts: 4,
            backoff_ms: 500,
        }
    }
}

/// Result of an efetch run: parsed articles plus per-pmid failures.
#[derive(Debug, Default)]
pub struct FetchOutcome {
    pub articles: Vec<RawArticle>,
    pub errors: Vec<ArticleError>,
    pub warnings: Vec<String>,
}

#[derive(Debug)]
pub struct EutilsClient {
    config: EutilsConfig,
    agent: ureq::Agent,
    limiter: RateLimiter,
}

impl EutilsClient {
    pub fn new(config: EutilsConfig) -> Result<Self> {
        let limiter = RateLimiter::new(config.rate_limit_rps)?;
        if config.max_attempts == 0 {
            return Err(Error::validation("max_attempts", "must be at least 1"));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            config,
            agent,
            limiter,
        })
    }

    pub fn config(&self) -> &EutilsConfig {
        &self.config
    }

    fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16)))
    }

    /// GET with rate limiting and retries. Transport failures, 429 and 5xx
    /// are retried up to `max_attempts`; other statuses fail immediately.
    fn get(&self, url: &str, params: &[(&str, String)]) -> Result<Vec<u8>> {
        let max = self.config.max_attempts;
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.limiter.acquire();
            let mut request = self.agent.get(url);
            for (k, v) in params {
                request = request.query(*k, v);
            }
            if let Some(key) = &self.config.api_key {
                request = request.query("api_key", key);
            }
            let failure = match request.call() {
                Err(e) => Error::Transport {
                    attempts: attempt,
                    message: format!("GET {url}: {e}"),
                },
                Ok(mut response) => {
                    let status = response.status().as_u16();
                    let retry_after = response
                        .headers()
                        .get("retry-after")
                        .and_then(|v| v.to_str().ok())
                        .and_then(|v| v.trim().parse::<u64>().ok());
                    let body = response
                        .body_mut()
                        .with_config()
                        .limit(256 * 1024 * 1024)
                        .read_to_vec();
                    match (status, body) {
                        (200, Ok(body)) => return Ok(body),
                        (200, Err(e)) => Error::Transport {
                            attempts: attempt,
                            message: format!("reading body of {url}: {e}"),
                        },
                        (429, _) => {
                            if attempt < max {
                                let wait = retry_after
                                    .filter(|s| *s <= 60)
                                    .map(Duration::from_secs)
                                    .unwrap_or_else(|| self.backoff(attempt));
                                log::warn!("HTTP 429 from {url}, retrying in {wait:?}");
                                std::thread::sleep(wait);
                                continue;
                            }
                            return Err(Error::RateLimited { attempts: attempt });
                        }
                        (status, body) => {
                            let text = body
                                .map(|b| truncate(&String::from_utf8_lossy(&b), 200))
                                .unwrap_or_default();
                            let err = Error::Http {
                                status,
                                attempts: attempt,
                                message: text,
                            };
                            if status < 500 {
                                return Err(err);
                            }
                            err
                        }
                    }
                }
            };
            if attempt >= max {
                return Err(failure);
            }
            log::warn!("{failure}; retrying");
            std::thread::sleep(self.backoff(attempt));
        }
    }

    /// Runs `esearch` page by page (`retstart`/`retmax`), relevance-sorted,
    /// until `max_results` ids are collected or the result set is exhausted.
    pub fn search(&self, term: &str, max_results: usize, batch_size: usize) -> Result<Vec<ArticleRef>> {
        if batch_size == 0 {
            return Err(Error::validation("batch_size", "must be at least 1"));
        }
        let mut refs = Vec::new();
        while refs.len() < max_results {
            let retmax = batch_size.min(max_results - refs.len());
            let params = [
                ("db", self.config.db.clone()),
                ("term", term.to_string()),
                ("retstart", refs.len().to_string()),
                ("retmax", retmax.to_string()),
                ("retmode", "xml".to_string()),
                ("sort", "relevance".to_string()),
            ];
            let body = self.get(&self.config.esearch_url, &params)?;
            let page = parse_esearch(&body)?;
            let got = page.ids.len();
            refs.extend(
                page.ids
                    .into_iter()
                    .take(max_results - refs.len())
                    .map(|pmid| ArticleRef { pmid, title: String::new() }),
            );
            if got == 0 || refs.len() >= page.count {
                break;
            }
        }
        Ok(refs)
    }

    /// Runs `efetch` in batches. A failed batch or a bad record is reported
    /// against its pmids and never aborts the run. Articles come back in the
    /// order of `refs`.
    pub fn fetch(&self, refs: &[ArticleRef], batch_size: usize) -> FetchOutcome {
        let mut outcome = FetchOutcome::default();
        for batch in refs.chunks(batch_size.max(1)) {
            let ids: Vec<&str> = batch.iter().map(|r| r.pmid.as_str()).collect();
            let params = [
                ("db", self.config.db.clone()),
                ("id", ids.join(",")),
                ("retmode", "xml".to_string()),
            ];
            match self.get(&self.config.efetch_url, &params) {
                Err(e) => outcome.errors.extend(ids.iter().map(|pmid| ArticleError {
                    pmid: pmid.to_string(),
                    message: e.to_string(),
                })),
                Ok(body) => {
                    let text = String::from_utf8_lossy(&body);
                    let parsed = parse_article_set(&text);
                    for pmid in &ids {
                        let seen = parsed.articles.iter().any(|a| a.pmid == *pmid)
                            || parsed.errors.iter().any(|e| e.pmid == *pmid);
                        if !seen {
                            outcome.errors.push(ArticleError {
                                pmid: pmid.to_string(),
                                message: "record missing from efetch response".into(),
                            });
                        }
                    }
                    outcome.articles.extend(parsed.articles);
                    outcome.errors.extend(parsed.errors);
                    outcome.warnings.extend(parsed.warnings);
                }
            }
        }
        let position = |pmid: &str| refs.iter().position(|r| r.pmid == pmid).unwrap_or(usize::MAX);
        outcome.articles.sort_by_key(|a| position(&a.pmid));
        outcome
    }

    /// Downloads figures referenced by absolute `http(s)` URLs, turning them
    /// into inline bytes. Anything else becomes [`ImageRef::Missing`].
    pub fn resolve_figures(&self, articles: &mut [RawArticle]) -> Vec<String> {
        let mut warnings = Vec::new();
        for article in articles.iter_mut() {
            for (i, figure) in article.figures.iter_mut().enumerate() {
                let ImageRef::Href(href) = &figure.image else {
                    continue;
                };
                if !(href.starts_with("http://") || href.starts_with("https://")) {
                    warnings.push(format!(
                        "pmid {} figure {i}: cannot resolve relative image reference `{href}`",
                        article.pmid
                    ));
                    figure.image = ImageRef::Missing;
                    continue;
                }
                figure.image = match self.get(href, &[]) {
                    Ok(bytes) => ImageRef::Inline(bytes),
                    Err(e) => {
                        warnings.push(format!("pmid {} figure {i}: {e}", article.pmid));
                        ImageRef::Missing
                    }
                };
            }
        }
        warnings
    }
}

/// Convenience wrapper over [`EutilsClient::search`].
pub fn search_pubmed(
    client: &EutilsClient,
    term: &str,
    max_results: usize,
    batch_size: usize,
) -> Result<Vec<ArticleRef>> {
    client.search(term, max_results, batch_size)
}

#[derive(Debug)]
struct SearchPage {
    count: usize,
    ids: Vec<String>,
}

fn parse_esearch(body: &[u8]) -> Result<SearchPage> {
    let text = std::str::from_utf8(body).map_err(|e| Error::Parse {
        field: "eSearchResult".into(),
        message: format!("not UTF-8: {e}"),
    })?;
    let doc = roxmltree::Document::parse(text).map_err(|e| Error::Parse {
        field: "eSearchResult".into(),
        message: e.to_string(),
    })?;
    let root = doc.root_element();
    if root.tag_name().name() != "eSearchResult" {
        return Err(Error::Parse {
            field: "eSearchResult".into(),
            message: format!("unexpected root element <{}>", root.tag_name().name()),
        });
    }
    let child = |name: &str| root.children().find(|n| n.has_tag_name(name));
    if let Some(err) = child("ERROR") {
        return Err(Error::Protocol(format!(
            "esearch error: {}",
            err.text().unwrap_or_default()
        )));
    }
    let count = child("Count")
        .and_then(|n| n.text())
        .ok_or_else(|| Error::Parse {
            field: "Count".into(),
            message: "missing".into(),
        })?
        .trim()
        .parse::<usize>()
        .map_err(|e| Error::Parse {
            field: "Count".into(),
            message: e.to_string(),
        })?;
    let mut ids = Vec::new();
    if let Some(list) = child("IdList") {
        for id in list.children().filter(|n| n.has_tag_name("Id")) {
            let value = id.text().unwrap_or_default().trim().to_string();
            super::validate_pmid(&value).map_err(|_| Error::Parse {
                field: "IdList/Id".into(),
                message: format!("`{value}` is not a numeric id"),
            })?;
            ids.push(value);
        }
    } else if count > 0 {
        return Err(Error::Parse {
            field: "IdList".into(),
            message: "missing".into(),
        });
    }
    Ok(SearchPage { count, ids })
}
