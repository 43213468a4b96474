use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use super::parse::parse_label_text;
use super::prompt::{build_prompt, PromptItem, SubmissionMode, TaskConfig};
use super::provider::{request_labels, Provider, TokenUsage};
use super::LabelingError;
use crate::annotation::{apply_event, Annotation, AnnotationEvent, AnnotationStatus};
use crate::image_store::{encode_png, extract_region, render_overlay, ImageStore};
use crate::Clock;

/// Result of labeling one annotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelOutcome {
    Success {
        annotation: Annotation,
        request_id: String,
        usage: Option<TokenUsage>,
        attempts: u32,
    },
    ItemError {
        annotation_id: String,
        error: LabelingError,
    },
}

impl LabelOutcome {
    pub fn annotation_id(&self) -> &str {
        match self {
            LabelOutcome::Success { annotation, .. } => &annotation.id,
            LabelOutcome::ItemError { annotation_id, .. } => annotation_id,
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, LabelOutcome::Success { .. })
    }
}

/// Renders the payload the provider sees for one annotation.
pub fn render_payload(config: &TaskConfig, annotation: &Annotation, images: &ImageStore) -> Result<PromptItem, LabelingError> {
    let record = images.get(&annotation.image_id).ok_or_else(|| LabelingError::Image(format!("unknown image `{}`", annotation.image_id)))?;
    let bitmap = images.bitmap(&annotation.image_id).map_err(|e| LabelingError::Image(e.to_string()))?;
    let derived = match config.submission_mode {
        SubmissionMode::Overlay => {
            let boxes: Vec<_> = annotation.region.bounding_box().copied().into_iter().collect();
            render_overlay(&bitmap, &boxes, &config.overlay_style)
        }
        SubmissionMode::Crop => extract_region(&bitmap, &annotation.region),
    }
    .map_err(|e| LabelingError::Image(e.to_string()))?;
    let payload = encode_png(&derived).map_err(|e| LabelingError::Image(e.to_string()))?;
    Ok(PromptItem {
        annotation_id: annotation.id.clone(),
        source_hash: record.content_hash,
        region: annotation.region,
        payload: Arc::new(payload),
    })
}

fn reply_label_text<'a>(config: &TaskConfig, raw: &'a str) -> &'a str {
    if config.split_on_comma {
        let first = raw.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
        first.split(',').next().unwrap_or(first)
    } else {
        raw
    }
}

/// Labels a batch of annotations through `provider`.
///
/// Each annotation is rendered (overlay or crop), sent, parsed and moved to
/// `AiLabeled`. Failures are reported per item and leave that annotation
/// untouched; the batch as a whole always returns, in input order.
pub fn label_batch(
    config: &TaskConfig,
    annotations: &[Annotation],
    images: &ImageStore,
    provider: &dyn Provider,
    clock: &dyn Clock,
) -> Vec<LabelOutcome> {
    let mut outcomes: Vec<Option<LabelOutcome>> = vec![None; annotations.len()];
    if let Err(e) = config.validate() {
        return annotations
            .iter()
            .map(|a| LabelOutcome::ItemError { annotation_id: a.id.clone(), error: e.clone() })
            .collect();
    }

    let mut ready: Vec<(usize, PromptItem)> = Vec::new();
    for (i, annotation) in annotations.iter().enumerate() {
        if !matches!(annotation.status, AnnotationStatus::BoxDrawn | AnnotationStatus::AiLabeled) {
            outcomes[i] = Some(LabelOutcome::ItemError {
                annotation_id: annotation.id.clone(),
                error: LabelingError::NotLabelable(annotation.status),
            });
            continue;
        }
        match render_payload(config, annotation, images) {
            Ok(item) => ready.push((i, item)),
            Err(error) => outcomes[i] = Some(LabelOutcome::ItemError { annotation_id: annotation.id.clone(), error }),
        }
    }

    let chunks: Vec<Vec<(usize, PromptItem)>> =
        ready.chunks(config.batch_size).map(|c| c.to_vec()).collect();
    let results: Mutex<Vec<(usize, LabelOutcome)>> = Mutex::new(Vec::new());
    let next = AtomicUsize::new(0);
    let workers = config.max_in_flight.min(chunks.len()).max(1);

    let run_chunk = |chunk: &Vec<(usize, PromptItem)>| -> Vec<(usize, LabelOutcome)> {
        let items: Vec<PromptItem> = chunk.iter().map(|(_, item)| item.clone()).collect();
        let fail_all = |error: LabelingError| {
            chunk
                .iter()
                .map(|(i, item)| {
                    (*i, LabelOutcome::ItemError { annotation_id: item.annotation_id.clone(), error: error.clone() })
                })
                .collect::<Vec<_>>()
        };
        let request = match build_prompt(config, items) {
            Ok(r) => r,
            Err(e) => return fail_all(e),
        };
        let response = match request_labels(provider, &config.model_id, &request, &config.retry) {
            Ok(r) => r,
            Err(e) => return fail_all(e),
        };
        chunk
            .iter()
            .zip(&response.items)
            .map(|((i, _), reply)| {
                let annotation = &annotations[*i];
                let outcome = reply
                    .result
                    .clone()
                    .map_err(LabelingError::ItemFailed)
                    .and_then(|raw| {
                        let mut label = parse_label_text(reply_label_text(config, &raw))?;
                        label.raw = raw;
                        Ok(label)
                    })
                    .and_then(|label| {
                        let event = AnnotationEvent::ai_label(config.model_id.clone(), label, clock.now());
                        apply_event(annotation, event).map_err(|e| LabelingError::Annotation(e.to_string()))
                    });
                let outcome = match outcome {
                    Ok(updated) => LabelOutcome::Success {
                        annotation: updated,
                        request_id: response.request_id.clone(),
                        usage: reply.usage,
                        attempts: response.attempts,
                    },
                    Err(error) => LabelOutcome::ItemError { annotation_id: annotation.id.clone(), error },
                };
                (*i, outcome)
            })
            .collect()
    };

    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let n = next.fetch_add(1, Ordering::SeqCst);
                let Some(chunk) = chunks.get(n) else { break };
                let done = run_chunk(chunk);
                results.lock().unwrap().extend(done);
            });
        }
    });

    for (i, outcome) in results.into_inner().unwrap() {
        outcomes[i] = Some(outcome);
    }
    outcomes.into_iter().map(|o| o.expect("every annotation has an outcome")).collect()
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;
    use std::sync::atomic::AtomicU32;

    use chrono::{DateTime, Utc};
    use image::{Rgba, RgbaImage};

    use super::*;
    use crate::annotation::{create_annotation, BoundingBox};
    use crate::labeling::mock::MockProvider;
    use crate::labeling::provider::{ItemReply, ProviderError, ProviderReply};
    use crate::labeling::RetryConfig;
    use crate::FixedClock;

    fn clock() -> FixedClock {
        FixedClock(DateTime::<Utc>::from_timestamp(1_700_000_000, 0).unwrap())
    }

    fn zoo() -> (ImageStore, String, String) {
        let store = ImageStore::in_memory();
        let img = RgbaImage::from_fn(200, 200, |x, y| Rgba([x as u8, y as u8, 90, 255]));
        let rec = store.ingest(&encode_png(&img).unwrap(), "zoo.png").unwrap();
        (store, rec.id, rec.content_hash)
    }

    const ZOO: [(&str, BoundingBox); 4] = [
        ("Saddle-Billed Stork", BoundingBox::new(0, 0, 60, 80)),
        ("Elephant Rhinoceros", BoundingBox::new(70, 0, 100, 90)),
        ("Giraffe", BoundingBox::new(0, 100, 50, 100)),
        ("Ankole-Watusi", BoundingBox::new(60, 110, 120, 80)),
    ];

    fn fast_config() -> TaskConfig {
        TaskConfig { retry: RetryConfig { max_attempts: 3, base_backoff_ms: 0, max_backoff_ms: 0 }, ..Default::default() }
    }

    #[test]
    fn four_zoo_boxes_get_four_labels() {
        let (store, image_id, hash) = zoo();
        let mock = MockProvider::new(ZOO.iter().map(|(label, b)| (format!("{hash}@{},{},{},{}", b.x, b.y, b.width, b.height), label.to_string())));
        let annotations: Vec<_> = ZOO
            .iter()
            .enumerate()
            .map(|(i, (_, b))| create_annotation(format!("a{i}"), &image_id, (200, 200), Some(*b), "h", clock().0).unwrap())
            .collect();
        let outcomes = label_batch(&fast_config(), &annotations, &store, &mock, &clock());
        let fines: Vec<String> = outcomes
            .iter()
            .map(|o| match o {
                LabelOutcome::Success { annotation, .. } => {
                    assert_eq!(annotation.status, AnnotationStatus::AiLabeled);
                    annotation.ai_label.as_ref().unwrap().fine.clone()
                }
                other => panic!("unexpected {other:?}"),
            })
            .collect();
        assert_eq!(fines, ZOO.iter().map(|(l, _)| l.to_string()).collect::<Vec<_>>());
    }

    /// Records payload dimensions and fails one hash on every attempt.
    struct Recording {
        dims: Mutex<HashMap<String, (u32, u32)>>,
        failing_hash: Option<String>,
        calls: AtomicU32,
    }

    impl Provider for Recording {
        fn name(&self) -> &str {
            "recording"
        }

        fn complete(&self, _: &str, _: &str, items: &[PromptItem]) -> Result<ProviderReply, ProviderError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if items.iter().any(|i| Some(&i.source_hash) == self.failing_hash.as_ref()) {
                return Err(ProviderError::Transient("rate limited".into()));
            }
            let mut dims = self.dims.lock().unwrap();
            let replies = items
                .iter()
                .map(|i| {
                    let img = image::load_from_memory(&i.payload).unwrap();
                    dims.insert(i.annotation_id.clone(), (img.width(), img.height()));
                    ItemReply { annotation_id: i.annotation_id.clone(), result: Ok("Cat".into()), usage: None }
                })
                .collect();
            Ok(ProviderReply { items: replies, usage: None })
        }
    }

    #[test]
    fn whole_image_submits_full_image_in_both_modes() {
        let (store, image_id, _) = zoo();
        let a = create_annotation("w", &image_id, (200, 200), None, "h", clock().0).unwrap();
        for mode in [SubmissionMode::Overlay, SubmissionMode::Crop] {
            let p = Recording { dims: Mutex::new(HashMap::new()), failing_hash: None, calls: AtomicU32::new(0) };
            let config = TaskConfig { submission_mode: mode, ..fast_config() };
            let out = label_batch(&config, std::slice::from_ref(&a), &store, &p, &clock());
            assert!(out[0].is_success());
            assert_eq!(p.dims.lock().unwrap()["w"], (200, 200));
        }
    }

    #[test]
    fn crop_mode_submits_box_sized_payload() {
        let (store, image_id, _) = zoo();
        let a = create_annotation("c", &image_id, (200, 200), Some(BoundingBox::new(5, 6, 30, 40)), "h", clock().0).unwrap();
        let p = Recording { dims: Mutex::new(HashMap::new()), failing_hash: None, calls: AtomicU32::new(0) };
        let config = TaskConfig { submission_mode: SubmissionMode::Crop, ..fast_config() };
        label_batch(&config, &[a], &store, &p, &clock());
        assert_eq!(p.dims.lock().unwrap()["c"], (30, 40));
    }

    #[test]
    fn per_item_atomicity() {
        let store = ImageStore::in_memory();
        let mut annotations = Vec::new();
        let mut hashes = Vec::new();
        for shade in [10u8, 20, 30] {
            let img = RgbaImage::from_pixel(8, 8, Rgba([shade, 0, 0, 255]));
            let rec = store.ingest(&encode_png(&img).unwrap(), "x.png").unwrap();
            annotations.push(create_annotation(format!("a{shade}"), &rec.id, (8, 8), None, "h", clock().0).unwrap());
            hashes.push(rec.content_hash);
        }
        let p = Recording { dims: Mutex::new(HashMap::new()), failing_hash: Some(hashes[1].clone()), calls: AtomicU32::new(0) };
        let out = label_batch(&fast_config(), &annotations, &store, &p, &clock());
        assert!(out[0].is_success());
        assert!(matches!(
            &out[1],
            LabelOutcome::ItemError { annotation_id, error: LabelingError::ProviderExhausted { attempts: 3, .. } } if annotation_id == "a20"
        ));
        assert!(out[2].is_success());
        assert_eq!(p.calls.load(Ordering::SeqCst), 5);
    }

    #[test]
    fn non_labelable_and_unparseable_items_error() {
        let (store, image_id, hash) = zoo();
        let a = create_annotation("a", &image_id, (200, 200), None, "h", clock().0).unwrap();
        let flagged = crate::annotation::apply_event(
            &a,
            AnnotationEvent::flag(crate::annotation::Actor::Human("h".into()), "dup", clock().0),
        )
        .unwrap();
        let mock = MockProvider::new([(hash, "   ".to_string())]);
        let out = label_batch(&fast_config(), &[a, flagged], &store, &mock, &clock());
        assert!(matches!(&out[0], LabelOutcome::ItemError { error: LabelingError::EmptyLabel, .. }));
        assert!(matches!(
            &out[1],
            LabelOutcome::ItemError { error: LabelingError::NotLabelable(AnnotationStatus::Flagged), .. }
        ));
    }

    #[test]
    fn comma_split_is_opt_in() {
        let (store, image_id, hash) = zoo();
        let a = create_annotation("a", &image_id, (200, 200), None, "h", clock().0).unwrap();
        let mock = MockProvider::new([(hash, "Elephant, Rhinoceros".to_string())]);
        let fine = |config: &TaskConfig| match &label_batch(config, std::slice::from_ref(&a), &store, &mock, &clock())[0] {
            LabelOutcome::Success { annotation, .. } => annotation.ai_label.clone().unwrap(),
            other => panic!("{other:?}"),
        };
        assert_eq!(fine(&fast_config()).fine, "Elephant, Rhinoceros");
        let split = fine(&TaskConfig { split_on_comma: true, ..fast_config() });
        assert_eq!(split.fine, "Elephant");
        assert_eq!(split.raw, "Elephant, Rhinoceros");
    }

    #[test]
    fn batched_requests_keep_order_and_are_deterministic() {
        let store = ImageStore::in_memory();
        let mut annotations = Vec::new();
        let mut fixture = Vec::new();
        for i in 0..10u8 {
            let img = RgbaImage::from_pixel(4, 4, Rgba([i, 1, 2, 255]));
            let rec = store.ingest(&encode_png(&img).unwrap(), "x.png").unwrap();
            annotations.push(create_annotation(format!("a{i}"), &rec.id, (4, 4), None, "h", clock().0).unwrap());
            fixture.push((rec.content_hash, format!("Breed {i} (Dog)")));
        }
        let mock = MockProvider::new(fixture);
        let config = TaskConfig { batch_size: 3, max_in_flight: 3, ..fast_config() };
        let first = label_batch(&config, &annotations, &store, &mock, &clock());
        let second = label_batch(&config, &annotations, &store, &mock, &clock());
        assert_eq!(first, second);
        for (i, o) in first.iter().enumerate() {
            assert_eq!(o.annotation_id(), format!("a{i}"));
        }
    }
}
