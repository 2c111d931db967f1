use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    CrossAttention,
    Concat,
    TextOnly,
}

impl FusionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::CrossAttention => "cross_attention",
            FusionMode::Concat => "concat",
            FusionMode::TextOnly => "text_only",
        }
    }
}

/// One indexable vector and the items it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedRecord {
    pub vector: Vec<f64>,
    pub text_ids: Vec<String>,
    pub image_ids: Vec<String>,
    pub mode: FusionMode,
}

impl FusedRecord {
    /// Id the record is indexed under.
    pub fn key(&self) -> &str {
        self.text_ids
            .first()
            .or(self.image_ids.first())
            .map(String::as_str)
            .unwrap_or("")
    }
}

pub fn write_fused_jsonl(path: &Path, records: &[FusedRecord]) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_fused_jsonl(path: &Path) -> Result<Vec<FusedRecord>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::NotFound(format!("{}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: FusedRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            field: format!("{}:{}", path.display(), n + 1),
            message: e.to_string(),
        })?;
        if record.text_ids.is_empty() && record.image_ids.is_empty() {
            return Err(Error::Parse {
                field: format!("{}:{}", path.display(), n + 1),
                message: "record has no provenance ids".into(),
            });
        }
        records.push(record);
    }
    Ok(records)
}
