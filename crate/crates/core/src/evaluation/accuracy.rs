use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvaluationError;
use crate::taxonomy::MatchResult;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTally {
    pub total: u64,
    pub correct: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub total: u64,
    pub correct: u64,
    pub accuracy: f64,
    pub per_class: BTreeMap<String, ClassTally>,
    /// Percentage rounded half-up to two decimals, e.g. `99.63%`.
    pub display: String,
}

/// `correct / total` as a percentage with two decimals, rounded half-up.
/// Computed in integers so no binary rounding creeps in.
pub fn percent_display(correct: u64, total: u64) -> String {
    if total == 0 {
        return "0.00%".to_string();
    }
    let (c, t) = (correct as u128, total as u128);
    let hundredths = (c * 20_000 + t) / (2 * t);
    format!("{}.{:02}%", hundredths / 100, hundredths % 100)
}

/// Formats a fraction in `[0, 1]` as a two-decimal percentage, half-up.
pub fn percent_from_fraction(fraction: f64) -> String {
    let hundredths = (fraction * 10_000.0 + 0.5).floor().max(0.0) as u64;
    format!("{}.{:02}%", hundredths / 100, hundredths % 100)
}

/// Tallies match results per truth class.
pub fn compute_accuracy<S: AsRef<str>>(results: &[(S, MatchResult)]) -> Result<AccuracyReport, EvaluationError> {
    if results.is_empty() {
        return Err(EvaluationError::EmptyEvaluation);
    }
    let mut per_class: BTreeMap<String, ClassTally> = BTreeMap::new();
    for (truth, result) in results {
        let tally = per_class.entry(truth.as_ref().to_string()).or_default();
        tally.total += 1;
        tally.correct += u64::from(result.matched);
    }
    let total = results.len() as u64;
    let correct = per_class.values().map(|t| t.correct).sum();
    Ok(AccuracyReport {
        total,
        correct,
        accuracy: correct as f64 / total as f64,
        per_class,
        display: percent_display(correct, total),
    })
}
