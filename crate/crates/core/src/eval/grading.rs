//! Expert grading of clinical-scenario responses and per-scenario tallies.

use serde::{Deserialize, Serialize};

use super::stats::{chi_square_2x2, cohens_h};
use crate::error::{Error, Result};

/// Minimum fraction of correct instructions for a response to count as
/// correct. The boundary itself is correct.
pub const CORRECT_THRESHOLD: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grade {
    Correct,
    WrongHallucination,
    WrongOther,
}

pub fn grade_response(instruction_accuracy: f64, has_major_error: bool) -> Result<Grade> {
    if !(0.0..=1.0).contains(&instruction_accuracy) {
        return Err(Error::Domain(format!(
            "instruction accuracy {instruction_accuracy} is outside [0, 1]"
        )));
    }
    Ok(if has_major_error {
        Grade::WrongHallucination
    } else if instruction_accuracy >= CORRECT_THRESHOLD {
        Grade::Correct
    } else {
        Grade::WrongOther
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioTally {
    pub scenario: String,
    pub correct: u32,
    pub total: u32,
    /// Not recorded for every respondent (e.g. human experts).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hallucinations: Option<u32>,
}

impl ScenarioTally {
    pub fn new(scenario: impl Into<String>, correct: u32, total: u32, hallucinations: Option<u32>) -> Result<Self> {
        let t = Self {
            scenario: scenario.into(),
            correct,
            total,
            hallucinations,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.correct > self.total {
            return Err(Error::validation(
                "correct",
                format!("{} correct out of {} in `{}`", self.correct, self.total, self.scenario),
            ));
        }
        if self.hallucinations.is_some_and(|h| h > self.total) {
            return Err(Error::validation(
                "hallucinations",
                format!("more hallucinations than responses in `{}`", self.scenario),
            ));
        }
        Ok(())
    }

    /// Builds a tally from graded responses.
    pub fn from_grades(scenario: impl Into<String>, grades: &[Grade]) -> Self {
        let count = |g: Grade| grades.iter().filter(|&&x| x == g).count() as u32;
        Self {
            scenario: scenario.into(),
            correct: count(Grade::Correct),
            total: grades.len() as u32,
            hallucinations: Some(count(Grade::WrongHallucination)),
        }
    }

    pub fn proportion(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Correct responses as a percentage of all responses.
pub fn accuracy_percent(t: &ScenarioTally) -> f64 {
    t.proportion() * 100.0
}

/// Hallucinated responses as a percentage, when recorded.
pub fn hallucination_rate(t: &ScenarioTally) -> Option<f64> {
    t.hallucinations.map(|h| {
        if t.total == 0 {
            0.0
        } else {
            h as f64 / t.total as f64 * 100.0
        }
    })
}

/// Effect size and association between two respondents on one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioComparison {
    pub scenario: String,
    pub cohens_h: f64,
    pub chi_square: f64,
}

/// `h = h(p_reference, p_other)`; the chi-square table is
/// `[[ref correct, ref wrong], [other correct, other wrong]]`.
pub fn compare_scenario(reference: &ScenarioTally, other: &ScenarioTally) -> Result<ScenarioComparison> {
    let cell = |t: &ScenarioTally| (t.correct as i64, (t.total - t.correct) as i64);
    let (a, b) = cell(reference);
    let (c, d) = cell(other);
    Ok(ScenarioComparison {
        scenario: reference.scenario.clone(),
        cohens_h: cohens_h(reference.proportion(), other.proportion())?,
        chi_square: chi_square_2x2(a, b, c, d)?,
    })
}
