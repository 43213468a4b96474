use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use boxlab_core::annotation::Actor;
use boxlab_core::AnnotationEvent;

/// A reviewer's decision on an AI label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Correct { label: String },
    Flag { reason: String },
}

impl Verdict {
    pub fn to_event(&self, annotator: &str, at: DateTime<Utc>) -> AnnotationEvent {
        match self {
            Verdict::Accept => AnnotationEvent::human_accept(annotator, at),
            Verdict::Correct { label } => AnnotationEvent::human_correct(annotator, label.as_str(), at),
            Verdict::Flag { reason } => AnnotationEvent::flag(Actor::Human(annotator.to_string()), reason.as_str(), at),
        }
    }
}
