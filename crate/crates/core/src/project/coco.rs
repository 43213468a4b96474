//! COCO object-detection interchange (images, annotations, categories).
//! Boxes are `[x, y, width, height]` in pixels.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Project, ProjectError};
use crate::annotation::{validate_box, Annotation, AnnotationStatus, BoundingBox};
use crate::image_store::ImageRecord;
use crate::taxonomy::{normalize, predicted_class, MatchPolicy};

/// COCO ids are integers in practice; strings are accepted on import.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CocoId {
    Int(u64),
    Str(String),
}

impl fmt::Display for CocoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CocoId::Int(n) => write!(f, "{n}"),
            CocoId::Str(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: CocoId,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: CocoId,
    pub image_id: CocoId,
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_id: Option<CocoId>,
    #[serde(default)]
    pub area: f64,
    #[serde(default)]
    pub iscrowd: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: CocoId,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExportDocument {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    #[serde(default)]
    pub categories: Vec<CocoCategory>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryLevel {
    #[default]
    Base,
    Fine,
}

impl std::str::FromStr for CategoryLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "base" => Ok(CategoryLevel::Base),
            "fine" => Ok(CategoryLevel::Fine),
            other => Err(format!("unknown category level `{other}` (expected base or fine)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportOptions {
    pub include: BTreeSet<AnnotationStatus>,
    pub level: CategoryLevel,
}

impl Default for ExportOptions {
    fn default() -> Self {
        Self {
            include: [AnnotationStatus::Verified, AnnotationStatus::Corrected].into_iter().collect(),
            level: CategoryLevel::Base,
        }
    }
}

fn category_name(project: &Project, a: &Annotation, level: CategoryLevel) -> Result<String, ProjectError> {
    if a.status == AnnotationStatus::Corrected {
        if let Some(human) = &a.human_label {
            return Ok(normalize(human, &project.taxonomy)?);
        }
    }
    let label = a.ai_label.as_ref().ok_or_else(|| ProjectError::UnlabeledInExport(a.id.clone()))?;
    let policy = match level {
        CategoryLevel::Fine => MatchPolicy::Exact,
        CategoryLevel::Base => MatchPolicy::BaseClass,
    };
    Ok(predicted_class(label, policy, &project.taxonomy)?)
}

/// Exports labeled boxes. Whole-image annotations become `[0, 0, w, h]`.
pub fn export_coco(project: &Project, options: &ExportOptions) -> Result<ExportDocument, ProjectError> {
    let image_ids: HashMap<&str, u64> =
        project.images().enumerate().map(|(i, r)| (r.id.as_str(), i as u64 + 1)).collect();
    let images = project
        .images()
        .map(|r| CocoImage { id: CocoId::Int(image_ids[r.id.as_str()]), file_name: r.source_name.clone(), width: r.width, height: r.height })
        .collect();

    let mut selected = Vec::new();
    for a in project.annotations().filter(|a| options.include.contains(&a.status)) {
        let record = project.image(&a.image_id).ok_or_else(|| ProjectError::DanglingReference(a.image_id.clone()))?;
        selected.push((a, record, category_name(project, a, options.level)?));
    }
    let names: BTreeSet<&str> = selected.iter().map(|(_, _, n)| n.as_str()).collect();
    let category_ids: BTreeMap<&str, u64> = names.iter().enumerate().map(|(i, n)| (*n, i as u64 + 1)).collect();
    let categories = category_ids.iter().map(|(n, id)| CocoCategory { id: CocoId::Int(*id), name: n.to_string() }).collect();

    let annotations = selected
        .iter()
        .enumerate()
        .map(|(i, (a, record, name))| {
            let b = a.region.to_box(record.width, record.height);
            CocoAnnotation {
                id: CocoId::Int(i as u64 + 1),
                image_id: CocoId::Int(image_ids[a.image_id.as_str()]),
                bbox: [b.x as f64, b.y as f64, b.width as f64, b.height as f64],
                category_id: Some(CocoId::Int(category_ids[name.as_str()])),
                area: b.width as f64 * b.height as f64,
                iscrowd: 0,
            }
        })
        .collect();
    Ok(ExportDocument { images, annotations, categories })
}

/// Brings pre-drawn boxes into a project as `BoxDrawn` annotations.
///
/// `resolve` maps each document image to an ingested record (and may ingest
/// bundled files). Categories, when present, go into the ground-truth
/// side-table rather than onto the annotations. Nothing is added unless
/// every box validates.
pub fn import_boxes(
    document: &ExportDocument,
    project: &mut Project,
    mut resolve: impl FnMut(&CocoImage) -> Option<ImageRecord>,
    annotator: &str,
    at: DateTime<Utc>,
) -> Result<Vec<Annotation>, ProjectError> {
    let mut images: HashMap<&CocoId, ImageRecord> = HashMap::new();
    for img in &document.images {
        let record = resolve(img)
            .ok_or_else(|| ProjectError::DanglingReference(format!("image `{}` ({}) is not ingested", img.id, img.file_name)))?;
        images.insert(&img.id, record);
    }
    let categories: HashMap<&CocoId, &str> = document.categories.iter().map(|c| (&c.id, c.name.as_str())).collect();

    let mut planned = Vec::with_capacity(document.annotations.len());
    for ann in &document.annotations {
        let record = images
            .get(&ann.image_id)
            .ok_or_else(|| ProjectError::DanglingReference(format!("annotation `{}` → image `{}`", ann.id, ann.image_id)))?;
        let invalid = |reason: String| ProjectError::InvalidBox { annotation: ann.id.to_string(), reason };
        let [x, y, w, h] = ann.bbox;
        let bbox = BoundingBox::from_fractional(x, y, w, h).map_err(|e| invalid(e.to_string()))?;
        validate_box(&bbox, record.width, record.height).map_err(|e| invalid(e.to_string()))?;
        let truth = match &ann.category_id {
            Some(cid) => Some(
                *categories
                    .get(cid)
                    .ok_or_else(|| ProjectError::DanglingReference(format!("annotation `{}` → category `{cid}`", ann.id)))?,
            ),
            None => None,
        };
        let region = (!bbox.covers(record.width, record.height)).then_some(bbox);
        planned.push((record.clone(), region, truth));
    }

    let mut created = Vec::with_capacity(planned.len());
    for (record, region, truth) in planned {
        project.add_image(record.clone());
        let a = project.create_annotation(&record.id, region, annotator, at)?;
        if let Some(class) = truth {
            project.set_truth(&a.id, class)?;
        }
        created.push(a);
    }
    Ok(created)
}
