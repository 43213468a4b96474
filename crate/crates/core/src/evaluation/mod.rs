//! Accuracy, confusion and agreement reporting plus the labor-vs-API cost model.

mod accuracy;
mod agreement;
mod confusion;
mod cost;
mod report;

pub use accuracy::{compute_accuracy, percent_display, percent_from_fraction, AccuracyReport, ClassTally};
pub use agreement::{agreement_stats, AgreementStats, AgreementTally};
pub use confusion::{confusion_matrix, ConfusionMatrix};
pub use cost::{cost_roi, CostParams, CostReport};
pub use report::{evaluate, EvalItem, EvalReport, UNLABELED_CLASS};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvaluationError {
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error("cost parameter `{0}` must be a non-negative number")]
    NegativeParam(&'static str),
    #[error(transparent)]
    Taxonomy(#[from] crate::taxonomy::TaxonomyError),
}
