//! Application config: one TOML file plus `APP__SECTION__KEY` environment
//! overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use medrag_core::embed::ProviderConfig;
use medrag_core::ingest::EutilsConfig;
use medrag_core::orchestrator::{KbSettings, QueryMode};

use crate::error::{ApiError, ErrorCode};

pub const ENV_PREFIX: &str = "APP__";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestSection {
    pub term: String,
    pub max_results: usize,
    pub batch_size: usize,
    /// Summarise tables with the configured LLM instead of flattening them.
    pub summarize_tables: bool,
    /// Replace parsed figure captions with captions from the image provider.
    pub caption_figures: bool,
    pub eutils: EutilsConfig,
}

impl Default for IngestSection {
    fn default() -> Self {
        Self {
            term: "alzheimer's disease".into(),
            max_results: 2000,
            batch_size: 100,
            summarize_tables: false,
            caption_figures: false,
            eutils: EutilsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsSection {
    pub corpus_dir: PathBuf,
    pub kb_dir: PathBuf,
    pub runs_dir: PathBuf,
    pub gold_dir: PathBuf,
    /// Built UI assets; not served when unset.
    pub static_dir: Option<PathBuf>,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            corpus_dir: "data/corpus".into(),
            kb_dir: "data/kb".into(),
            runs_dir: "data/runs".into(),
            gold_dir: "data/gold".into(),
            static_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct EmbedSection {
    pub text: ProviderConfig,
    pub image: ProviderConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmBackend {
    /// No generation; answers are extractive.
    None,
    /// Offline backend that cites every source it is given.
    Echo,
    /// A chat-completions server.
    Chat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSection {
    pub backend: LlmBackend,
    pub endpoint: Option<String>,
    pub model: String,
    pub system_prompt: Option<String>,
    pub template_path: Option<PathBuf>,
    pub context_budget: usize,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
}

impl Default for LlmSection {
    fn default() -> Self {
        Self {
            backend: LlmBackend::None,
            endpoint: None,
            model: "llama-2-7b-pubmed".into(),
            system_prompt: None,
            template_path: None,
            context_budget: 8000,
            timeout_ms: 60_000,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerSection {
    pub host: String,
    pub port: u16,
}

impl Default for ServerSection {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub k: usize,
    pub modes: Vec<QueryMode>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            k: 10,
            modes: QueryMode::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct AppConfig {
    pub ingest: IngestSection,
    pub paths: PathsSection,
    pub embed: EmbedSection,
    pub kb: KbSettings,
    pub llm: LlmSection,
    pub server: ServerSection,
    pub eval: EvalSection,
}

fn bad(message: impl Into<String>) -> ApiError {
    ApiError::new(ErrorCode::BadRequest, message)
}

/// Parses an override as a TOML value (`8080`, `true`, `["full"]`), falling
/// back to a plain string.
fn parse_override(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(root: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), ApiError> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut table = root;
    for key in parents {
        let entry = table
            .entry(key.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| bad(format!("override {ENV_PREFIX}{}: `{key}` is not a section", path.join("__").to_uppercase())))?;
    }
    table.insert(last.clone(), value);
    Ok(())
}

impl AppConfig {
    /// Reads `path` (when given), applies overrides from `env`, resolves
    /// relative paths against the config file's directory and validates.
    pub fn load<I>(path: Option<&Path>, env: I) -> Result<Self, ApiError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    ApiError::new(ErrorCode::NotFound, format!("cannot read config {}: {e}", p.display()))
                })?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| bad(format!("config {}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        let mut overrides: Vec<(String, String)> = env
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        overrides.sort();
        for (key, raw) in overrides {
            let parts: Vec<String> = key[ENV_PREFIX.len()..]
                .split("__")
                .map(str::to_lowercase)
                .collect();
            if parts.iter().any(String::is_empty) {
                return Err(bad(format!("malformed override variable {key}")));
            }
            apply_override(&mut table, &parts, parse_override(&raw))?;
        }
        let mut config: AppConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| bad(format!("invalid config: {e}")))?;
        if let Some(base) = path.and_then(Path::parent) {
            config.resolve_paths(base);
        }
        config.validate()?;
        Ok(config)
    }

    /// Loads with the process environment.
    pub fn from_env(path: Option<&Path>) -> Result<Self, ApiError> {
        Self::load(path, std::env::vars())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.corpus_dir);
        fix(&mut self.paths.kb_dir);
        fix(&mut self.paths.runs_dir);
        fix(&mut self.paths.gold_dir);
        if let Some(p) = self.paths.static_dir.as_mut() {
            fix(p);
        }
        if let Some(p) = self.llm.template_path.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ApiError> {
        if self.server.port == 0 {
            return Err(bad("server.port must be in [1, 65535]"));
        }
        if self.server.host.trim().is_empty() {
            return Err(bad("server.host must not be empty"));
        }
        if self.ingest.batch_size == 0 {
            return Err(bad("ingest.batch_size must be at least 1"));
        }
        if self.eval.k == 0 {
            return Err(bad("eval.k must be at least 1"));
        }
        if self.llm.backend == LlmBackend::Chat && self.llm.endpoint.is_none() {
            return Err(bad("llm.endpoint is required for the chat backend"));
        }
        if self.llm.context_budget == 0 {
            return Err(bad("llm.context_budget must be positive"));
        }
        for (name, p) in [("embed.text", &self.embed.text), ("embed.image", &self.embed.image)] {
            p.validate().map_err(|e| bad(format!("{name}: {e}")))?;
        }
        if self.embed.text.dim != self.embed.image.dim {
            return Err(bad(format!(
                "embed.text.dim ({}) and embed.image.dim ({}) must match",
                self.embed.text.dim, self.embed.image.dim
            )));
        }
        self.kb.fusion.validate().map_err(|e| bad(format!("kb.fusion: {e}")))?;
        Ok(())
    }
}
