use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::annotation::{Annotation, AnnotationStatus};
use crate::taxonomy::{normalize, Taxonomy};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AgreementTally {
    pub accepted: u64,
    pub corrected: u64,
    /// `accepted / (accepted + corrected)`; absent when both are zero.
    pub acceptance_rate: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub per_class: BTreeMap<String, AgreementTally>,
}

impl AgreementStats {
    pub fn is_empty(&self) -> bool {
        self.per_class.is_empty()
    }

    pub fn totals(&self) -> AgreementTally {
        let accepted = self.per_class.values().map(|t| t.accepted).sum();
        let corrected = self.per_class.values().map(|t| t.corrected).sum();
        AgreementTally { accepted, corrected, acceptance_rate: rate(accepted, corrected) }
    }
}

fn rate(accepted: u64, corrected: u64) -> Option<f64> {
    let n = accepted + corrected;
    (n > 0).then(|| accepted as f64 / n as f64)
}

/// How often humans accepted versus corrected the AI label, keyed by the
/// AI label's base class (fine label when no base was given). Only
/// `Verified` and `Corrected` annotations count.
pub fn agreement_stats<'a>(annotations: impl IntoIterator<Item = &'a Annotation>) -> AgreementStats {
    let plain = Taxonomy::empty();
    let mut per_class: BTreeMap<String, AgreementTally> = BTreeMap::new();
    for a in annotations {
        let accepted = match a.status {
            AnnotationStatus::Verified => true,
            AnnotationStatus::Corrected => false,
            _ => continue,
        };
        let Some(label) = &a.ai_label else { continue };
        let key = label.base.as_deref().unwrap_or(&label.fine);
        let Ok(key) = normalize(key, &plain) else { continue };
        let tally = per_class.entry(key).or_default();
        if accepted {
            tally.accepted += 1;
        } else {
            tally.corrected += 1;
        }
    }
    for tally in per_class.values_mut() {
        tally.acceptance_rate = rate(tally.accepted, tally.corrected);
    }
    AgreementStats { per_class }
}

#[cfg(test)]
mod tests {
    use chrono::{DateTime, Utc};

    use super::*;
    use crate::annotation::{apply_event, create_annotation, Actor, AnnotationEvent};
    use crate::labeling::parse_label_text;

    fn at() -> DateTime<Utc> {
        DateTime::from_timestamp(0, 0).unwrap()
    }

    fn labeled(id: usize, text: &str) -> Annotation {
        let a = create_annotation(format!("a{id}"), "img", (10, 10), None, "h", at()).unwrap();
        apply_event(&a, AnnotationEvent::ai_label("m", parse_label_text(text).unwrap(), at())).unwrap()
    }

    #[test]
    fn eight_accepted_two_corrected() {
        let mut all = Vec::new();
        for i in 0..10 {
            let a = labeled(i, "Siamese cat (Cat)");
            let ev = if i < 8 {
                AnnotationEvent::human_accept("h", at())
            } else {
                AnnotationEvent::human_correct("h", "persian cat", at())
            };
            all.push(apply_event(&a, ev).unwrap());
        }
        let stats = agreement_stats(&all);
        let cat = stats.per_class["cat"];
        assert_eq!((cat.accepted, cat.corrected), (8, 2));
        assert_eq!(cat.acceptance_rate, Some(0.8));
        assert_eq!(stats.totals().acceptance_rate, Some(0.8));
    }

    #[test]
    fn non_terminal_and_flagged_are_excluded() {
        assert!(agreement_stats(&[]).is_empty());
        let pending = vec![labeled(0, "Giraffe"), create_annotation("b", "img", (10, 10), None, "h", at()).unwrap()];
        assert!(agreement_stats(&pending).is_empty());
        let flagged: Vec<_> = (0..3)
            .map(|i| apply_event(&labeled(i, "Cat"), AnnotationEvent::flag(Actor::Human("h".into()), "bad", at())).unwrap())
            .collect();
        assert!(agreement_stats(&flagged).is_empty());
    }

    #[test]
    fn fine_label_is_the_fallback_key() {
        let v = apply_event(&labeled(0, "Giraffe"), AnnotationEvent::human_accept("h", at())).unwrap();
        assert!(agreement_stats(&[v]).per_class.contains_key("giraffe"));
    }
}
