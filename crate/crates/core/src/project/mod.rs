//! Projects: images, annotations, config, ground truth and the event log
//! they are rebuilt from.

mod coco;
mod store;
mod truth;

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use coco::{
    export_coco, import_boxes, CategoryLevel, CocoAnnotation, CocoCategory, CocoId, CocoImage, ExportDocument,
    ExportOptions,
};
pub use store::{load, save, ProjectLock, ANNOTATIONS_FILE, IMAGES_DIR, MANIFEST_FILE, TAXONOMY_FILE, TRUTH_FILE};
pub use truth::TruthTable;

use crate::annotation::{self, Annotation, AnnotationError, AnnotationEvent, AnnotationStatus, BoundingBox, RegionKind};
use crate::image_store::ImageRecord;
use crate::labeling::{TaskConfig, TokenUsage};
use crate::taxonomy::{Taxonomy, TaxonomyError};

#[derive(Debug, thiserror::Error)]
pub enum ProjectError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt project file `{file}`: {reason}")]
    CorruptProject { file: String, reason: String },
    #[error("project at {0} is locked by another writer")]
    Locked(PathBuf),
    #[error("unknown image `{0}`")]
    UnknownImage(String),
    #[error("unknown annotation `{0}`")]
    UnknownAnnotation(String),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error("conflicting update to annotation `{0}`")]
    Conflict(String),
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("invalid box on annotation `{annotation}`: {reason}")]
    InvalidBox { annotation: String, reason: String },
    #[error("annotation `{0}` is selected for export but has no label")]
    UnlabeledInExport(String),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
}

/// One line of the append-only event log. Creation records carry the image
/// and region; later records only the event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub annotation_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionKind>,
    pub event: AnnotationEvent,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageTotals {
    pub requests: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Project {
    pub id: String,
    pub name: String,
    pub config: TaskConfig,
    pub taxonomy: Taxonomy,
    images: BTreeMap<String, ImageRecord>,
    annotations: BTreeMap<String, Annotation>,
    log: Vec<LogRecord>,
    truth: BTreeMap<String, String>,
    usage: UsageTotals,
    next_annotation: u64,
}

impl Project {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            config: TaskConfig::default(),
            taxonomy: Taxonomy::empty(),
            images: BTreeMap::new(),
            annotations: BTreeMap::new(),
            log: Vec::new(),
            truth: BTreeMap::new(),
            usage: UsageTotals::default(),
            next_annotation: 1,
        }
    }

    /// Short project-specific scope embedded in generated ids so ids stay
    /// unique across projects served together.
    pub fn id_scope(&self) -> &str {
        let end = self.id.char_indices().nth(8).map(|(i, _)| i).unwrap_or(self.id.len());
        &self.id[..end]
    }

    /// Prefix for image ids generated by this project's image store.
    pub fn image_id_prefix(&self) -> String {
        format!("img-{}-", self.id_scope())
    }

    pub fn add_image(&mut self, record: ImageRecord) {
        self.images.entry(record.id.clone()).or_insert(record);
    }

    pub fn image(&self, id: &str) -> Option<&ImageRecord> {
        self.images.get(id)
    }

    pub fn image_by_hash(&self, hash: &str) -> Option<&ImageRecord> {
        self.images.values().find(|r| r.content_hash == hash)
    }

    pub fn images(&self) -> impl Iterator<Item = &ImageRecord> {
        self.images.values()
    }

    pub fn annotation(&self, id: &str) -> Option<&Annotation> {
        self.annotations.get(id)
    }

    /// All annotations in creation order.
    pub fn annotations(&self) -> impl Iterator<Item = &Annotation> {
        self.annotations.values()
    }

    pub fn annotations_with_status(&self, status: AnnotationStatus) -> Vec<&Annotation> {
        self.annotations.values().filter(|a| a.status == status).collect()
    }

    pub fn annotations_on(&self, image_id: &str) -> Vec<&Annotation> {
        self.annotations.values().filter(|a| a.image_id == image_id).collect()
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn usage(&self) -> UsageTotals {
        self.usage
    }

    pub fn record_usage(&mut self, requests: u64, usage: TokenUsage) {
        self.usage.requests += requests;
        self.usage.input_tokens += usage.input_tokens;
        self.usage.output_tokens += usage.output_tokens;
    }

    /// Ground-truth side-table, keyed by annotation id.
    pub fn truth(&self) -> &BTreeMap<String, String> {
        &self.truth
    }

    pub fn set_truth(&mut self, annotation_id: &str, class: impl Into<String>) -> Result<(), ProjectError> {
        if !self.annotations.contains_key(annotation_id) {
            return Err(ProjectError::UnknownAnnotation(annotation_id.to_string()));
        }
        let class: String = class.into().split_whitespace().collect::<Vec<_>>().join(" ");
        if class.is_empty() {
            return Err(ProjectError::Taxonomy(TaxonomyError::EmptyLabel));
        }
        self.truth.insert(annotation_id.to_string(), class);
        Ok(())
    }

    /// Creates a `BoxDrawn` annotation; without a box it covers the whole image.
    pub fn create_annotation(
        &mut self,
        image_id: &str,
        bbox: Option<BoundingBox>,
        annotator: &str,
        at: DateTime<Utc>,
    ) -> Result<Annotation, ProjectError> {
        let record = self.images.get(image_id).ok_or_else(|| ProjectError::UnknownImage(image_id.to_string()))?;
        let id = format!("ann-{}-{:06}", self.id_scope(), self.next_annotation);
        let created = annotation::create_annotation(&id, image_id, (record.width, record.height), bbox, annotator, at)?;
        self.next_annotation += 1;
        self.log.push(LogRecord {
            annotation_id: id.clone(),
            image_id: Some(image_id.to_string()),
            region: Some(created.region),
            event: created.history[0].clone(),
        });
        self.annotations.insert(id, created.clone());
        Ok(created)
    }

    /// Applies an event to a stored annotation. On error nothing changes.
    pub fn apply(&mut self, annotation_id: &str, event: AnnotationEvent) -> Result<Annotation, ProjectError> {
        let current =
            self.annotations.get(annotation_id).ok_or_else(|| ProjectError::UnknownAnnotation(annotation_id.to_string()))?;
        let next = annotation::apply_event(current, event)?;
        let stored = next.history.last().expect("history is never empty").clone();
        self.log.push(LogRecord { annotation_id: annotation_id.to_string(), image_id: None, region: None, event: stored });
        self.annotations.insert(annotation_id.to_string(), next.clone());
        Ok(next)
    }

    /// Stores an annotation that was updated elsewhere (e.g. by a label job)
    /// from a snapshot of this project. The stored history must be a prefix
    /// of the incoming one; otherwise someone else changed it meanwhile.
    pub fn commit(&mut self, updated: &Annotation) -> Result<Annotation, ProjectError> {
        let current =
            self.annotations.get(&updated.id).ok_or_else(|| ProjectError::UnknownAnnotation(updated.id.clone()))?;
        let n = current.history.len();
        if updated.history.len() < n || updated.history[..n] != current.history[..] {
            return Err(ProjectError::Conflict(updated.id.clone()));
        }
        let mut result = current.clone();
        for event in &updated.history[n..] {
            result = annotation::apply_event(&result, event.clone())?;
        }
        for event in &result.history[n..] {
            self.log.push(LogRecord {
                annotation_id: updated.id.clone(),
                image_id: None,
                region: None,
                event: event.clone(),
            });
        }
        self.annotations.insert(updated.id.clone(), result.clone());
        Ok(result)
    }

    /// Rebuilds annotations from an event log.
    pub fn replay_log(log: &[LogRecord]) -> Result<BTreeMap<String, Annotation>, ProjectError> {
        let mut annotations: BTreeMap<String, Annotation> = BTreeMap::new();
        for (n, record) in log.iter().enumerate() {
            let corrupt = |reason: String| ProjectError::CorruptProject {
                file: ANNOTATIONS_FILE.to_string(),
                reason: format!("record {}: {reason}", n + 1),
            };
            match annotations.get(&record.annotation_id) {
                None => {
                    let (Some(image_id), Some(region)) = (&record.image_id, record.region) else {
                        return Err(corrupt(format!("`{}` used before creation", record.annotation_id)));
                    };
                    let created = Annotation::replay(&record.annotation_id, image_id, region, std::slice::from_ref(&record.event))
                        .map_err(|e| corrupt(e.to_string()))?;
                    annotations.insert(record.annotation_id.clone(), created);
                }
                Some(current) => {
                    let next = annotation::apply_event(current, record.event.clone()).map_err(|e| corrupt(e.to_string()))?;
                    if next.history.last() != Some(&record.event) {
                        return Err(corrupt("timestamps out of order".into()));
                    }
                    annotations.insert(record.annotation_id.clone(), next);
                }
            }
        }
        Ok(annotations)
    }

    /// Checks that every annotation references a known image and that the log
    /// reproduces the stored annotations.
    pub fn check_consistency(&self) -> Result<(), ProjectError> {
        for a in self.annotations.values() {
            if !self.images.contains_key(&a.image_id) {
                return Err(ProjectError::DanglingReference(format!("annotation `{}` → image `{}`", a.id, a.image_id)));
            }
        }
        for id in self.truth.keys() {
            if !self.annotations.contains_key(id) {
                return Err(ProjectError::DanglingReference(format!("truth entry for unknown annotation `{id}`")));
            }
        }
        if Project::replay_log(&self.log)? != self.annotations {
            return Err(ProjectError::CorruptProject {
                file: ANNOTATIONS_FILE.into(),
                reason: "log does not reproduce annotations".into(),
            });
        }
        Ok(())
    }
}
