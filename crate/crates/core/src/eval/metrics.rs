//! Retrieval and answer-quality metrics.

use std::collections::{BTreeSet, HashSet};

fn relevant_set(relevant: &BTreeSet<String>) -> HashSet<&str> {
    relevant.iter().map(String::as_str).collect()
}

/// Fraction of the first `k` ranked ids that are relevant. The divisor is
/// always `k`, so short rankings are penalised. `k = 0` yields 0.
pub fn precision_at_k(ranked: &[String], relevant: &BTreeSet<String>, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let rel = relevant_set(relevant);
    let mut seen = HashSet::new();
    let hits = ranked
        .iter()
        .take(k)
        .filter(|id| seen.insert(id.as_str()) && rel.contains(id.as_str()))
        .count();
    hits as f64 / k as f64
}

/// Fraction of relevant ids present anywhere in the ranking.
pub fn recall(ranked: &[String], relevant: &BTreeSet<String>) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let got: HashSet<&str> = ranked.iter().map(String::as_str).collect();
    relevant.iter().filter(|id| got.contains(id.as_str())).count() as f64 / relevant.len() as f64
}

/// Sum of precision at each relevant hit, divided by the number of
/// relevant ids (relevant ids never retrieved contribute 0).
pub fn average_precision(ranked: &[String], relevant: &BTreeSet<String>) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let rel = relevant_set(relevant);
    let mut seen = HashSet::new();
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, id) in ranked.iter().enumerate() {
        if rel.contains(id.as_str()) && seen.insert(id.as_str()) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / relevant.len() as f64
}

pub fn mean_average_precision(runs: &[(Vec<String>, BTreeSet<String>)]) -> f64 {
    if runs.is_empty() {
        return 0.0;
    }
    runs.iter().map(|(r, rel)| average_precision(r, rel)).sum::<f64>() / runs.len() as f64
}

/// Lowercases, drops every character that is neither alphanumeric nor
/// whitespace, and collapses whitespace.
pub fn normalize_answer(s: &str) -> String {
    let kept: String = s
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn exact_match(prediction: &str, golds: &[String]) -> f64 {
    let p = normalize_answer(prediction);
    if p.is_empty() {
        return 0.0;
    }
    if golds.iter().any(|g| normalize_answer(g) == p) {
        1.0
    } else {
        0.0
    }
}

fn f1_single(pred: &[&str], gold: &[&str]) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let mut counts: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    for t in gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in pred {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let p = common as f64 / pred.len() as f64;
    let r = common as f64 / gold.len() as f64;
    2.0 * p * r / (p + r)
}

/// Best token-level F1 against any gold answer.
pub fn token_f1(prediction: &str, golds: &[String]) -> f64 {
    let p = normalize_answer(prediction);
    if p.is_empty() {
        return 0.0;
    }
    let pred: Vec<&str> = p.split_whitespace().collect();
    golds
        .iter()
        .map(|g| {
            let g = normalize_answer(g);
            f1_single(&pred, &g.split_whitespace().collect::<Vec<_>>())
        })
        .fold(0.0, f64::max)
}

/// 1 when some normalized gold answer occurs as a contiguous token run in
/// the normalized prediction.
pub fn answer_accuracy(prediction: &str, golds: &[String]) -> f64 {
    let p = normalize_answer(prediction);
    let pred: Vec<&str> = p.split_whitespace().collect();
    let found = golds.iter().any(|g| {
        let g = normalize_answer(g);
        let gold: Vec<&str> = g.split_whitespace().collect();
        !gold.is_empty() && pred.windows(gold.len()).any(|w| w == gold.as_slice())
    });
    if found {
        1.0
    } else {
        0.0
    }
}
