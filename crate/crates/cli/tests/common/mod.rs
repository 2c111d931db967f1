//! A scratch workspace with a config file pointed at a PubMed stand-in.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use medrag_cli::config::AppConfig;
use medrag_core::eval::{GoldQa, GoldRetrieval, GoldSet};
use medrag_testkit::{esearch_reply, fixtures, FixtureResponse, FixtureServer};

pub const IDS: &[&str] = &["31000001", "31000002"];

/// `/esearch.fcgi` lists `ids`, `/efetch.fcgi` serves `xml`.
pub fn pubmed_server(ids: &'static [&'static str], xml: &'static str) -> FixtureServer {
    FixtureServer::start(move |req| match req.path.as_str() {
        "/esearch.fcgi" => FixtureResponse::xml(esearch_reply(ids, ids.len())),
        "/efetch.fcgi" => FixtureResponse::xml(xml),
        _ => FixtureResponse::status(404),
    })
}

pub struct Workspace {
    pub dir: tempfile::TempDir,
    pub server: FixtureServer,
}

impl Workspace {
    pub fn new() -> Self {
        Self::with_server(pubmed_server(IDS, fixtures::TWO_ARTICLES_XML), "echo")
    }

    pub fn with_server(server: FixtureServer, backend: &str) -> Self {
        let ws = Self {
            dir: tempfile::tempdir().unwrap(),
            server,
        };
        ws.write_config(backend, &ws.server.url("/esearch.fcgi"), &ws.server.url("/efetch.fcgi"));
        ws.write_gold();
        ws
    }

    pub fn write_config(&self, backend: &str, esearch: &str, efetch: &str) {
        let toml = format!(
            r#"
[ingest]
term = "alzheimer"
batch_size = 10

[ingest.eutils]
esearch_url = "{esearch}"
efetch_url = "{efetch}"
db = "pmc"
rate_limit_rps = 1000.0
timeout_ms = 2000
max_attempts = 2
backoff_ms = 1

[paths]
corpus_dir = "corpus"
kb_dir = "kb"
runs_dir = "runs"
gold_dir = "gold"

[embed.text]
dim = 32
seed = 11

[embed.image]
dim = 32
seed = 11

[llm]
backend = "{backend}"
"#
        );
        std::fs::write(self.config_path(), toml).unwrap();
    }

    fn write_gold(&self) {
        GoldSet {
            retrieval: vec![GoldRetrieval {
                query: "amyloid plaques".into(),
                relevant_ids: ["31000001:s2:b0".to_string()].into(),
            }],
            qa: vec![GoldQa {
                question: "What accumulates in the brain?".into(),
                gold_answers: vec!["amyloid".into()],
            }],
        }
        .save(&self.path("gold"))
        .unwrap();
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn config_path(&self) -> PathBuf {
        self.path("medrag.toml")
    }

    pub fn config(&self) -> AppConfig {
        AppConfig::load(Some(&self.config_path()), Vec::new()).unwrap()
    }
}

/// Every file under `dir` with its bytes, keyed by relative path.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}
