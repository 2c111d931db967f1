use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GOLD_RETRIEVAL_FILE: &str = "gold_retrieval.jsonl";
pub const GOLD_QA_FILE: &str = "gold_qa.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRetrieval {
    pub query: String,
    pub relevant_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldQa {
    pub question: String,
    pub gold_answers: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldSet {
    pub retrieval: Vec<GoldRetrieval>,
    pub qa: Vec<GoldQa>,
}

impl GoldSet {
    /// Every problem at once, so a labeller can fix them in one pass.
    pub fn validate(&self) -> Result<()> {
        let mut gaps = Vec::new();
        if self.retrieval.is_empty() && self.qa.is_empty() {
            gaps.push("no gold labels at all".to_string());
        }
        for (i, g) in self.retrieval.iter().enumerate() {
            if g.query.trim().is_empty() {
                gaps.push(format!("{GOLD_RETRIEVAL_FILE} entry {}: empty query", i + 1));
            }
            if g.relevant_ids.is_empty() {
                gaps.push(format!("{GOLD_RETRIEVAL_FILE} entry {}: no relevant_ids", i + 1));
            }
        }
        for (i, g) in self.qa.iter().enumerate() {
            if g.question.trim().is_empty() {
                gaps.push(format!("{GOLD_QA_FILE} entry {}: empty question", i + 1));
            }
            if g.gold_answers.iter().all(|a| a.trim().is_empty()) {
                gaps.push(format!("{GOLD_QA_FILE} entry {}: no gold_answers", i + 1));
            }
        }
        if gaps.is_empty() {
            Ok(())
        } else {
            Err(Error::validation("gold", gaps.join("; ")))
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let r = dir.join(GOLD_RETRIEVAL_FILE);
        let q = dir.join(GOLD_QA_FILE);
        if !r.is_file() && !q.is_file() {
            return Err(Error::NotFound(format!(
                "neither {GOLD_RETRIEVAL_FILE} nor {GOLD_QA_FILE} exists in {}",
                dir.display()
            )));
        }
        let set = Self {
            retrieval: read_jsonl(&r)?,
            qa: read_jsonl(&q)?,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_jsonl(&dir.join(GOLD_RETRIEVAL_FILE), &self.retrieval)?;
        write_jsonl(&dir.join(GOLD_QA_FILE), &self.qa)
    }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.is_file() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                field: format!("{}:{}", path.display(), n + 1),
                message: e.to_string(),
            })
        })
        .collect()
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
