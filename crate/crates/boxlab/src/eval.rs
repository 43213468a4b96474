//! Glue between a project's annotations and the core scorer.

use std::collections::BTreeMap;

use boxlab_core::evaluation::{evaluate, EvalItem, EvalReport, EvaluationError};
use boxlab_core::{AnnotationStatus, MatchPolicy, Project, Taxonomy};

/// Items to score: every annotation with a ground-truth class, paired with
/// its AI label. Flagged annotations are excluded and counted separately.
pub fn collect_items(project: &Project, truth: &BTreeMap<String, String>) -> (Vec<EvalItem>, u64) {
    let mut items = Vec::new();
    let mut excluded = 0;
    for a in project.annotations() {
        let Some(class) = truth.get(&a.id) else { continue };
        if a.status == AnnotationStatus::Flagged {
            excluded += 1;
            continue;
        }
        items.push(EvalItem { truth: class.clone(), prediction: a.ai_label.clone() });
    }
    (items, excluded)
}

pub fn evaluate_project(
    project: &Project,
    truth: &BTreeMap<String, String>,
    policy: MatchPolicy,
    taxonomy: &Taxonomy,
) -> Result<EvalReport, EvaluationError> {
    let (items, excluded) = collect_items(project, truth);
    evaluate(&items, policy, taxonomy, excluded)
}
