//! # boxlab-core
//!
//! Human-AI collaborative image annotation. Humans draw bounding boxes (or
//! leave the image unboxed), a multimodal model labels each region, and
//! humans accept, correct or flag the result.
//!
//! ```text
//! images ─▶ boxes (human) ─▶ labels (model) ─▶ verdicts (human) ─▶ export / stats
//! ```
//!
//! Modules:
//!
//! - [`annotation`]: domain types and the annotation state machine
//! - [`image_store`]: content-addressed image storage, crops and overlays
//! - [`labeling`]: prompts, providers (including a recorded mock), parsing
//! - [`taxonomy`]: normalization, granularity tiers, match policies
//! - [`evaluation`]: accuracy, confusion, agreement and the cost model
//! - [`project`]: persistence and COCO interchange
//!
//! The cost model is generic over the float type; [`CostParams64`] and
//! friends are the `f64` instantiations used by the CLI and service.

pub mod annotation;
pub mod evaluation;
pub mod image_store;
pub mod labeling;
pub mod project;
pub mod taxonomy;

use chrono::{DateTime, Utc};

pub use annotation::{Annotation, AnnotationEvent, AnnotationStatus, BoundingBox, RegionKind};
pub use image_store::{ImageRecord, ImageStore};
pub use labeling::{MockProvider, ParsedLabel, Provider, TaskConfig};
pub use project::Project;
pub use taxonomy::{MatchPolicy, Taxonomy, Tier};

pub type CostParams64 = evaluation::CostParams<f64>;
pub type CostReport64 = evaluation::CostReport<f64>;
pub type CostParams32 = evaluation::CostParams<f32>;
pub type CostReport32 = evaluation::CostReport<f32>;

/// Source of event timestamps.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Always returns the same instant. Used for reproducible runs.
#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub DateTime<Utc>);

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}
