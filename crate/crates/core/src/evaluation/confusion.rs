use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::EvaluationError;

/// Rows are actual (truth) classes; columns are the truth classes followed
/// by any predicted classes that never occur as truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub actual_classes: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, actual: &str) -> Option<u64> {
        let i = self.classes[..self.actual_classes].iter().position(|c| c == actual)?;
        Some(self.counts[i].iter().sum())
    }

    pub fn get(&self, actual: &str, predicted: &str) -> u64 {
        let row = self.classes[..self.actual_classes].iter().position(|c| c == actual);
        let col = self.classes.iter().position(|c| c == predicted);
        match (row, col) {
            (Some(r), Some(c)) => self.counts[r][c],
            _ => 0,
        }
    }

    /// Plain-text table, columns padded to the widest cell.
    pub fn render(&self) -> String {
        let label_w = self.classes[..self.actual_classes].iter().map(|c| c.len()).max().unwrap_or(0).max(6);
        let col_w: Vec<usize> = self
            .classes
            .iter()
            .enumerate()
            .map(|(j, c)| self.counts.iter().map(|r| r[j].to_string().len()).max().unwrap_or(1).max(c.len()))
            .collect();
        let mut out = String::new();
        let _ = write!(out, "{:<label_w$}", "actual");
        for (c, w) in self.classes.iter().zip(&col_w) {
            let _ = write!(out, "  {c:>w$}");
        }
        out.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            let _ = write!(out, "{:<label_w$}", self.classes[i]);
            for (v, w) in row.iter().zip(&col_w) {
                let _ = write!(out, "  {v:>w$}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion_matrix<A: AsRef<str>, P: AsRef<str>>(results: &[(A, P)]) -> Result<ConfusionMatrix, EvaluationError> {
    if results.is_empty() {
        return Err(EvaluationError::EmptyEvaluation);
    }
    let actual: BTreeSet<&str> = results.iter().map(|(a, _)| a.as_ref()).collect();
    let extra: BTreeSet<&str> =
        results.iter().map(|(_, p)| p.as_ref()).filter(|p| !actual.contains(p)).collect();
    let classes: Vec<String> = actual.iter().chain(extra.iter()).map(|s| s.to_string()).collect();
    let index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let mut counts = vec![vec![0u64; classes.len()]; actual.len()];
    for (a, p) in results {
        counts[index[a.as_ref()]][index[p.as_ref()]] += 1;
    }
    Ok(ConfusionMatrix { classes, actual_classes: actual.len(), counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cats_and_dogs_fixture() {
        // Hand tally: 10 cats, one read as dog; 10 dogs, all correct.
        let mut results = vec![("cat", "cat"); 9];
        results.push(("cat", "dog"));
        results.extend(vec![("dog", "dog"); 10]);
        let m = confusion_matrix(&results).unwrap();
        assert_eq!(m.classes, vec!["cat", "dog"]);
        assert_eq!(m.counts, vec![vec![9, 1], vec![0, 10]]);
        assert_eq!(m.row_total("cat"), Some(10));
        assert_eq!(m.total(), 20);
    }

    #[test]
    fn all_correct_is_diagonal() {
        let m = confusion_matrix(&[("a", "a"), ("b", "b"), ("c", "c"), ("a", "a")]).unwrap();
        for (i, row) in m.counts.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if i != j {
                    assert_eq!(*v, 0);
                }
            }
        }
    }

    #[test]
    fn unseen_prediction_gets_a_column() {
        let m = confusion_matrix(&[("cat", "cat"), ("dog", "fox")]).unwrap();
        assert_eq!(m.classes, vec!["cat", "dog", "fox"]);
        assert_eq!(m.actual_classes, 2);
        assert_eq!(m.get("dog", "fox"), 1);
        assert!(m.render().contains("fox"));
        let empty: Vec<(&str, &str)> = vec![];
        assert_eq!(confusion_matrix(&empty), Err(EvaluationError::EmptyEvaluation));
    }
}
