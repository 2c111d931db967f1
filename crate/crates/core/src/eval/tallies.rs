//! Recorded expert-grading tallies for several assistants.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grading::{compare_scenario, ScenarioComparison, ScenarioTally};
use crate::error::{Error, Result};

const BUNDLED: &str = include_str!("../../data/tallies.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTallies {
    pub model: String,
    pub scenarios: Vec<ScenarioTally>,
    pub total: ScenarioTally,
}

/// Published effect sizes, kept next to the recomputed ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportedComparison {
    pub scenario: String,
    pub cohens_h: f64,
    pub chi_square: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TalliesFile {
    pub scenarios: Vec<String>,
    pub reference_model: String,
    pub system_model: String,
    pub models: Vec<ModelTallies>,
    #[serde(default)]
    pub reported_comparisons: Vec<ReportedComparison>,
}

impl TalliesFile {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED).expect("bundled tallies are valid")
    }

    pub fn parse(json: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(json)?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        for m in &self.models {
            let names: Vec<&str> = m.scenarios.iter().map(|s| s.scenario.as_str()).collect();
            if names != self.scenarios.iter().map(String::as_str).collect::<Vec<_>>() {
                return Err(Error::validation("scenarios", format!("`{}` does not list every scenario in order", m.model)));
            }
            for s in m.scenarios.iter().chain([&m.total]) {
                s.validate()?;
            }
            let correct: u32 = m.scenarios.iter().map(|s| s.correct).sum();
            let total: u32 = m.scenarios.iter().map(|s| s.total).sum();
            if correct != m.total.correct || total != m.total.total {
                return Err(Error::validation(
                    "total",
                    format!("`{}` totals {}/{} but scenarios sum to {correct}/{total}", m.model, m.total.correct, m.total.total),
                ));
            }
        }
        for name in [&self.reference_model, &self.system_model] {
            if self.model(name).is_none() {
                return Err(Error::validation("models", format!("no tallies for `{name}`")));
            }
        }
        Ok(())
    }

    pub fn model(&self, name: &str) -> Option<&ModelTallies> {
        self.models.iter().find(|m| m.model == name)
    }

    /// Per-scenario comparison of the reference against the system model.
    pub fn comparisons(&self) -> Result<Vec<ScenarioComparison>> {
        let (Some(r), Some(s)) = (self.model(&self.reference_model), self.model(&self.system_model)) else {
            return Err(Error::validation("models", "reference or system model missing"));
        };
        r.scenarios.iter().zip(&s.scenarios).map(|(a, b)| compare_scenario(a, b)).collect()
    }
}
