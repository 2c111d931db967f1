use super::Table;
use crate::llm::Generator;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableSummary {
    pub text: String,
    /// Set when a configured backend failed and the flattening was used.
    pub warning: Option<String>,
}

/// Deterministic table text: `caption; r0c0 | r0c1; r1c0 | r1c1`.
pub fn flatten_table(caption: &str, rows: &[Vec<String>]) -> String {
    let mut parts: Vec<String> = Vec::with_capacity(rows.len() + 1);
    let caption = caption.trim();
    if !caption.is_empty() {
        parts.push(caption.to_string());
    }
    parts.extend(
        rows.iter()
            .filter(|row| !row.is_empty())
            .map(|row| row.join(" | ")),
    );
    parts.join("; ")
}

fn summary_prompt(table: &Table) -> String {
    let mut prompt = String::from(
        "Summarize the following table from a biomedical article in one or two sentences. \
         Keep every number that matters clinically.\n",
    );
    prompt.push_str(&format!("Caption: {}\n", table.caption));
    for row in &table.rows {
        prompt.push_str(&row.join(" | "));
        prompt.push('\n');
    }
    prompt
}

pub fn summarize_table(table: &Table, backend: Option<&dyn Generator>) -> TableSummary {
    let fallback = || flatten_table(&table.caption, &table.rows);
    let Some(backend) = backend else {
        return TableSummary {
            text: fallback(),
            warning: None,
        };
    };
    match backend.complete(&summary_prompt(table)) {
        Ok(text) if !text.trim().is_empty() => TableSummary {
            text: text.trim().to_string(),
            warning: None,
        },
        Ok(_) => TableSummary {
            text: fallback(),
            warning: Some("table summary backend returned empty text".into()),
        },
        Err(e) => TableSummary {
            text: fallback(),
            warning: Some(format!("table summary backend failed: {e}")),
        },
    }
}
