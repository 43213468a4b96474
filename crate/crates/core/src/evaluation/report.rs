use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{compute_accuracy, confusion_matrix, AccuracyReport, ConfusionMatrix, EvaluationError};
use crate::labeling::ParsedLabel;
use crate::taxonomy::{match_label, normalize, predicted_class, MatchPolicy, MatchResult, Taxonomy};

/// Column used in the confusion matrix for items that never got a label.
pub const UNLABELED_CLASS: &str = "<unlabeled>";

/// One scored item: its ground truth and the AI label, if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalItem {
    pub truth: String,
    pub prediction: Option<ParsedLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: MatchPolicy,
    pub accuracy: AccuracyReport,
    pub confusion: ConfusionMatrix,
    /// Items with ground truth but no parsed AI label; scored as misses.
    pub unlabeled: u64,
    /// Items left out of scoring (flagged for review).
    pub excluded: u64,
}

/// Scores every item. Labels and truths are compared after normalization.
pub fn evaluate(items: &[EvalItem], policy: MatchPolicy, taxonomy: &Taxonomy, excluded: u64) -> Result<EvalReport, EvaluationError> {
    let mut results: Vec<(String, MatchResult)> = Vec::with_capacity(items.len());
    let mut pairs: Vec<(String, String)> = Vec::with_capacity(items.len());
    let mut unlabeled = 0;
    for item in items {
        let truth = normalize(&item.truth, taxonomy)?;
        let (result, predicted) = match &item.prediction {
            Some(pred) => {
                let result = match_label(pred, &truth, policy, taxonomy)?;
                let predicted = if result.matched { truth.clone() } else { predicted_class(pred, policy, taxonomy)? };
                (result, predicted)
            }
            None => {
                unlabeled += 1;
                (MatchResult::MISS, UNLABELED_CLASS.to_string())
            }
        };
        results.push((truth.clone(), result));
        pairs.push((truth, predicted));
    }
    let accuracy = compute_accuracy(&results)?;
    let confusion = confusion_matrix(&pairs)?;
    Ok(EvalReport { policy, accuracy, confusion, unlabeled, excluded })
}

impl EvalReport {
    /// `accuracy: 99.63% (269/270)`
    pub fn accuracy_line(&self) -> String {
        format!("accuracy: {} ({}/{})", self.accuracy.display, self.accuracy.correct, self.accuracy.total)
    }

    /// Human-readable report. Contains no timestamps or ids, so identical
    /// inputs render identical bytes.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# policy: {}", self.policy);
        let _ = writeln!(out, "# scoring: labels and truths compared after normalization (case, whitespace, trailing punctuation, synonyms)");
        let _ = writeln!(out, "# unlabeled items count as misses; flagged items are excluded");
        let _ = writeln!(out, "{}", self.accuracy_line());
        let _ = writeln!(out, "unlabeled: {}", self.unlabeled);
        let _ = writeln!(out, "excluded: {}", self.excluded);
        out.push('\n');
        let w = self.accuracy.per_class.keys().map(|k| k.len()).max().unwrap_or(0).max(5);
        let _ = writeln!(out, "{:<w$}  {:>7}  {:>7}  {:>8}", "class", "total", "correct", "accuracy");
        for (class, tally) in &self.accuracy.per_class {
            let _ = writeln!(
                out,
                "{:<w$}  {:>7}  {:>7}  {:>8}",
                class,
                tally.total,
                tally.correct,
                super::percent_display(tally.correct, tally.total)
            );
        }
        out.push('\n');
        out.push_str("confusion (rows: actual, columns: predicted)\n");
        out.push_str(&self.confusion.render());
        out
    }
}
