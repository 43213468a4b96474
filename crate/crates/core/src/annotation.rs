//! Annotation domain model and lifecycle state machine.
//!
//! An [`Annotation`] is one human-selected region (a box or the whole image)
//! together with the AI label it received and the human verdict on that
//! label. Every change is recorded as an [`AnnotationEvent`] in the
//! annotation's history; the current status is always reproducible by
//! replaying that history from its initial `BoxCreated` event.
//!
//! All operations are pure: they take a value and return a new one.

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::labeling::ParsedLabel;

/// Pixel-space rectangle, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl BoundingBox {
    pub const fn new(x: u32, y: u32, width: u32, height: u32) -> Self {
        Self { x, y, width, height }
    }

    /// Builds a box from fractional coordinates, rounding half away from zero.
    ///
    /// Negative or non-finite inputs are rejected as out of bounds; a side that
    /// rounds to zero is rejected as zero-area.
    pub fn from_fractional(x: f64, y: f64, width: f64, height: f64) -> Result<Self, BoxError> {
        let round = |v: f64| -> Result<i64, BoxError> {
            if !v.is_finite() {
                return Err(BoxError::OutOfBounds);
            }
            Ok(v.round() as i64)
        };
        let (x, y, w, h) = (round(x)?, round(y)?, round(width)?, round(height)?);
        if w <= 0 || h <= 0 {
            return Err(BoxError::ZeroArea);
        }
        if x < 0 || y < 0 || x > u32::MAX as i64 || y > u32::MAX as i64 {
            return Err(BoxError::OutOfBounds);
        }
        let w = u32::try_from(w).map_err(|_| BoxError::OutOfBounds)?;
        let h = u32::try_from(h).map_err(|_| BoxError::OutOfBounds)?;
        Ok(Self::new(x as u32, y as u32, w, h))
    }

    /// Exclusive right edge.
    pub fn right(&self) -> u64 {
        self.x as u64 + self.width as u64
    }

    /// Exclusive bottom edge.
    pub fn bottom(&self) -> u64 {
        self.y as u64 + self.height as u64
    }

    pub fn covers(&self, image_width: u32, image_height: u32) -> bool {
        self.x == 0 && self.y == 0 && self.width == image_width && self.height == image_height
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.x, self.y, self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum BoxError {
    #[error("bounding box has zero area")]
    ZeroArea,
    #[error("bounding box exceeds the image extent")]
    OutOfBounds,
}

/// Checks a box against the extent of the image it is drawn on.
///
/// The right and bottom edges are exclusive, so a box flush against the
/// image border is valid.
pub fn validate_box(bbox: &BoundingBox, image_width: u32, image_height: u32) -> Result<(), BoxError> {
    if bbox.width == 0 || bbox.height == 0 {
        return Err(BoxError::ZeroArea);
    }
    if bbox.right() > image_width as u64 || bbox.bottom() > image_height as u64 {
        return Err(BoxError::OutOfBounds);
    }
    Ok(())
}

/// What the model is asked to look at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionKind {
    Box(BoundingBox),
    WholeImage,
}

impl RegionKind {
    pub fn bounding_box(&self) -> Option<&BoundingBox> {
        match self {
            RegionKind::Box(b) => Some(b),
            RegionKind::WholeImage => None,
        }
    }

    /// The box this region covers on an image of the given size.
    pub fn to_box(&self, image_width: u32, image_height: u32) -> BoundingBox {
        match self {
            RegionKind::Box(b) => *b,
            RegionKind::WholeImage => BoundingBox::new(0, 0, image_width, image_height),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnnotationStatus {
    BoxDrawn,
    AiLabeled,
    Verified,
    Corrected,
    Flagged,
}

impl AnnotationStatus {
    pub const ALL: [AnnotationStatus; 5] = [
        AnnotationStatus::BoxDrawn,
        AnnotationStatus::AiLabeled,
        AnnotationStatus::Verified,
        AnnotationStatus::Corrected,
        AnnotationStatus::Flagged,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AnnotationStatus::BoxDrawn => "BoxDrawn",
            AnnotationStatus::AiLabeled => "AiLabeled",
            AnnotationStatus::Verified => "Verified",
            AnnotationStatus::Corrected => "Corrected",
            AnnotationStatus::Flagged => "Flagged",
        }
    }
}

impl fmt::Display for AnnotationStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AnnotationStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lowered = s.trim().to_ascii_lowercase().replace(['_', '-'], "");
        AnnotationStatus::ALL
            .into_iter()
            .find(|st| st.as_str().to_ascii_lowercase() == lowered)
            .ok_or_else(|| format!("unknown annotation status `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "snake_case")]
pub enum Actor {
    Human(String),
    Ai(String),
}

impl Actor {
    pub fn is_human(&self) -> bool {
        matches!(self, Actor::Human(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    BoxCreated,
    AiLabelApplied { label: ParsedLabel },
    HumanAccept,
    HumanCorrect { label: String },
    Flag { reason: String },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::BoxCreated => "BoxCreated",
            EventKind::AiLabelApplied { .. } => "AiLabelApplied",
            EventKind::HumanAccept => "HumanAccept",
            EventKind::HumanCorrect { .. } => "HumanCorrect",
            EventKind::Flag { .. } => "Flag",
        }
    }
}

/// One step in an annotation's history.
///
/// Fields are private so the actor/kind pairing can only be produced through
/// the constructors: AI labels come from an AI actor, accept/correct verdicts
/// from a human.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationEvent {
    kind: EventKind,
    actor: Actor,
    timestamp: DateTime<Utc>,
}

impl AnnotationEvent {
    pub fn box_created(annotator: impl Into<String>, at: DateTime<Utc>) -> Self {
        Self { kind: EventKind::BoxCreated, actor: Actor::Human(annotator.into()), timestamp: at }
    }

    pub fn ai_label(model: impl Into<String>, label: ParsedLabel, at: DateTime<Utc>) -> Self {
        Self { kind: EventKind::AiLabelApplied { label }, actor: Actor::Ai(model.into()), timestamp: at }
    }

    pub fn human_accept(annotator: impl Into<String>, at: DateTime<Utc>) -> Self {
        Self { kind: EventKind::HumanAccept, actor: Actor::Human(annotator.into()), timestamp: at }
    }

    pub fn human_correct(annotator: impl Into<String>, label: impl Into<String>, at: DateTime<Utc>) -> Self {
        Self {
            kind: EventKind::HumanCorrect { label: label.into() },
            actor: Actor::Human(annotator.into()),
            timestamp: at,
        }
    }

    pub fn flag(actor: Actor, reason: impl Into<String>, at: DateTime<Utc>) -> Self {
        Self { kind: EventKind::Flag { reason: reason.into() }, actor, timestamp: at }
    }

    pub fn kind(&self) -> &EventKind {
        &self.kind
    }

    pub fn actor(&self) -> &Actor {
        &self.actor
    }

    pub fn timestamp(&self) -> DateTime<Utc> {
        self.timestamp
    }

    /// Whether the actor is allowed to emit this kind of event. Only relevant
    /// for events that arrived through deserialization.
    fn actor_consistent(&self) -> bool {
        match &self.kind {
            EventKind::AiLabelApplied { .. } => matches!(self.actor, Actor::Ai(_)),
            EventKind::BoxCreated | EventKind::HumanAccept | EventKind::HumanCorrect { .. } => {
                self.actor.is_human()
            }
            EventKind::Flag { .. } => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnnotationError {
    #[error(transparent)]
    Box(#[from] BoxError),
    #[error("illegal transition: {event} on {status}")]
    IllegalTransition { status: AnnotationStatus, event: &'static str },
    #[error("{event} event cannot be issued by {actor:?}")]
    ActorMismatch { event: &'static str, actor: Actor },
    #[error("correction label is blank")]
    EmptyCorrection,
    #[error("history must start with a single BoxCreated event")]
    MalformedHistory,
}

/// The unit of annotation work.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: String,
    pub image_id: String,
    pub region: RegionKind,
    pub status: AnnotationStatus,
    pub ai_label: Option<ParsedLabel>,
    pub human_label: Option<String>,
    pub history: Vec<AnnotationEvent>,
}

/// Creates a fresh annotation in `BoxDrawn` status. Without a box the
/// annotation covers the whole image.
pub fn create_annotation(
    id: impl Into<String>,
    image_id: impl Into<String>,
    image_dims: (u32, u32),
    bbox: Option<BoundingBox>,
    annotator: impl Into<String>,
    at: DateTime<Utc>,
) -> Result<Annotation, AnnotationError> {
    let region = match bbox {
        Some(b) => {
            validate_box(&b, image_dims.0, image_dims.1)?;
            RegionKind::Box(b)
        }
        None => RegionKind::WholeImage,
    };
    Ok(Annotation {
        id: id.into(),
        image_id: image_id.into(),
        region,
        status: AnnotationStatus::BoxDrawn,
        ai_label: None,
        human_label: None,
        history: vec![AnnotationEvent::box_created(annotator, at)],
    })
}

/// Applies one event, returning the updated annotation.
///
/// Legal transitions:
///
/// | from                  | event          | to        |
/// |-----------------------|----------------|-----------|
/// | BoxDrawn, AiLabeled   | AiLabelApplied | AiLabeled |
/// | AiLabeled             | HumanAccept    | Verified  |
/// | AiLabeled             | HumanCorrect   | Corrected |
/// | anything but Flagged  | Flag           | Flagged   |
///
/// An event timestamp earlier than the last recorded one is clamped to it so
/// history stays chronologically ordered.
pub fn apply_event(annotation: &Annotation, event: AnnotationEvent) -> Result<Annotation, AnnotationError> {
    if !event.actor_consistent() {
        return Err(AnnotationError::ActorMismatch { event: event.kind.name(), actor: event.actor });
    }
    let illegal = || AnnotationError::IllegalTransition { status: annotation.status, event: event.kind.name() };
    let mut next = annotation.clone();
    match (&annotation.status, &event.kind) {
        (AnnotationStatus::BoxDrawn | AnnotationStatus::AiLabeled, EventKind::AiLabelApplied { label }) => {
            next.status = AnnotationStatus::AiLabeled;
            next.ai_label = Some(label.clone());
        }
        (AnnotationStatus::AiLabeled, EventKind::HumanAccept) => {
            next.status = AnnotationStatus::Verified;
        }
        (AnnotationStatus::AiLabeled, EventKind::HumanCorrect { label }) => {
            if label.trim().is_empty() {
                return Err(AnnotationError::EmptyCorrection);
            }
            next.status = AnnotationStatus::Corrected;
            next.human_label = Some(label.trim().to_string());
        }
        (status, EventKind::Flag { .. }) if *status != AnnotationStatus::Flagged => {
            next.status = AnnotationStatus::Flagged;
        }
        _ => return Err(illegal()),
    }
    let mut event = event;
    if let Some(last) = annotation.history.last() {
        event.timestamp = event.timestamp.max(last.timestamp);
    }
    next.history.push(event);
    Ok(next)
}

impl Annotation {
    /// Rebuilds an annotation from its history.
    pub fn replay(
        id: impl Into<String>,
        image_id: impl Into<String>,
        region: RegionKind,
        history: &[AnnotationEvent],
    ) -> Result<Annotation, AnnotationError> {
        let (first, rest) = history.split_first().ok_or(AnnotationError::MalformedHistory)?;
        if first.kind != EventKind::BoxCreated || !first.actor_consistent() {
            return Err(AnnotationError::MalformedHistory);
        }
        let mut current = Annotation {
            id: id.into(),
            image_id: image_id.into(),
            region,
            status: AnnotationStatus::BoxDrawn,
            ai_label: None,
            human_label: None,
            history: vec![first.clone()],
        };
        for event in rest {
            current = apply_event(&current, event.clone())?;
        }
        Ok(current)
    }

    /// Replays this annotation's own history.
    pub fn replayed(&self) -> Result<Annotation, AnnotationError> {
        Annotation::replay(self.id.clone(), self.image_id.clone(), self.region, &self.history)
    }

    /// Checks the structural invariants that must hold for any reachable value.
    pub fn check_invariants(&self) -> Result<(), String> {
        match self.status {
            AnnotationStatus::AiLabeled | AnnotationStatus::Verified if self.ai_label.is_none() => {
                return Err(format!("{} without ai_label", self.status));
            }
            AnnotationStatus::Corrected if self.human_label.is_none() => {
                return Err("Corrected without human_label".into());
            }
            _ => {}
        }
        if self.history.windows(2).any(|w| w[0].timestamp > w[1].timestamp) {
            return Err("history is not chronologically ordered".into());
        }
        match self.replayed() {
            Ok(replayed) if replayed == *self => Ok(()),
            Ok(replayed) => Err(format!("replay yields {} but status is {}", replayed.status, self.status)),
            Err(e) => Err(format!("replay failed: {e}")),
        }
    }

    /// The most specific label currently attached: the human correction if
    /// present, otherwise the AI's fine label.
    pub fn effective_label(&self) -> Option<&str> {
        self.human_label.as_deref().or(self.ai_label.as_ref().map(|l| l.fine.as_str()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::parse_label_text;

    fn t(secs: i64) -> DateTime<Utc> {
        DateTime::from_timestamp(1_700_000_000 + secs, 0).unwrap()
    }

    fn boxed() -> Annotation {
        create_annotation("a1", "img1", (100, 100), Some(BoundingBox::new(10, 10, 50, 50)), "ann", t(0)).unwrap()
    }

    #[test]
    fn validate_box_examples() {
        assert_eq!(validate_box(&BoundingBox::new(10, 10, 50, 50), 100, 100), Ok(()));
        assert_eq!(validate_box(&BoundingBox::new(10, 10, 0, 50), 100, 100), Err(BoxError::ZeroArea));
        assert_eq!(validate_box(&BoundingBox::new(80, 80, 30, 30), 100, 100), Err(BoxError::OutOfBounds));
        assert_eq!(validate_box(&BoundingBox::new(50, 50, 50, 50), 100, 100), Ok(()));
        assert_eq!(validate_box(&BoundingBox::new(u32::MAX, 0, 2, 1), 100, 100), Err(BoxError::OutOfBounds));
    }

    #[test]
    fn fractional_boxes_round_half_away_from_zero() {
        assert_eq!(BoundingBox::from_fractional(9.5, 10.4, 49.5, 50.0), Ok(BoundingBox::new(10, 10, 50, 50)));
        assert_eq!(BoundingBox::from_fractional(0.0, 0.0, 0.4, 3.0), Err(BoxError::ZeroArea));
        assert_eq!(BoundingBox::from_fractional(-1.0, 0.0, 4.0, 3.0), Err(BoxError::OutOfBounds));
        assert_eq!(BoundingBox::from_fractional(f64::NAN, 0.0, 4.0, 3.0), Err(BoxError::OutOfBounds));
    }

    #[test]
    fn create_annotation_examples() {
        let a = boxed();
        assert_eq!(a.status, AnnotationStatus::BoxDrawn);
        assert_eq!(a.region, RegionKind::Box(BoundingBox::new(10, 10, 50, 50)));
        assert_eq!(a.history.len(), 1);
        assert_eq!(a.history[0].kind(), &EventKind::BoxCreated);

        let whole = create_annotation("a2", "img1", (100, 100), None, "ann", t(0)).unwrap();
        assert_eq!(whole.region, RegionKind::WholeImage);

        let err = create_annotation("a3", "img1", (100, 100), Some(BoundingBox::new(0, 0, 200, 200)), "ann", t(0));
        assert_eq!(err, Err(AnnotationError::Box(BoxError::OutOfBounds)));
    }

    #[test]
    fn apply_event_examples() {
        let a = boxed();
        let labeled =
            apply_event(&a, AnnotationEvent::ai_label("m", parse_label_text("Giraffe").unwrap(), t(1))).unwrap();
        assert_eq!(labeled.status, AnnotationStatus::AiLabeled);
        assert_eq!(labeled.ai_label.as_ref().unwrap().fine, "Giraffe");

        let verified = apply_event(&labeled, AnnotationEvent::human_accept("ann", t(2))).unwrap();
        assert_eq!(verified.status, AnnotationStatus::Verified);

        let err = apply_event(&a, AnnotationEvent::human_accept("ann", t(2))).unwrap_err();
        assert_eq!(
            err,
            AnnotationError::IllegalTransition { status: AnnotationStatus::BoxDrawn, event: "HumanAccept" }
        );
    }

    #[test]
    fn relabel_overwrites_and_appends() {
        let a = boxed();
        let first = apply_event(&a, AnnotationEvent::ai_label("m", parse_label_text("Stork").unwrap(), t(1))).unwrap();
        let second = apply_event(
            &first,
            AnnotationEvent::ai_label("m", parse_label_text("Saddle-Billed Stork").unwrap(), t(2)),
        )
        .unwrap();
        assert_eq!(second.ai_label.unwrap().fine, "Saddle-Billed Stork");
        assert_eq!(second.history.len(), 3);
    }

    #[test]
    fn verified_cannot_be_recorrected_and_flagged_is_terminal() {
        let a = boxed();
        let l = apply_event(&a, AnnotationEvent::ai_label("m", parse_label_text("Cat").unwrap(), t(1))).unwrap();
        let v = apply_event(&l, AnnotationEvent::human_accept("ann", t(2))).unwrap();
        assert!(matches!(
            apply_event(&v, AnnotationEvent::human_correct("ann", "dog", t(3))),
            Err(AnnotationError::IllegalTransition { .. })
        ));
        let f = apply_event(&v, AnnotationEvent::flag(Actor::Human("ann".into()), "blurry", t(3))).unwrap();
        assert_eq!(f.status, AnnotationStatus::Flagged);
        assert!(apply_event(&f, AnnotationEvent::flag(Actor::Human("ann".into()), "again", t(4))).is_err());
        assert!(f.check_invariants().is_ok());
    }

    #[test]
    fn correction_stores_trimmed_text() {
        let l = apply_event(&boxed(), AnnotationEvent::ai_label("m", parse_label_text("Cat").unwrap(), t(1))).unwrap();
        let c = apply_event(&l, AnnotationEvent::human_correct("ann", " persian ", t(2))).unwrap();
        assert_eq!(c.status, AnnotationStatus::Corrected);
        assert_eq!(c.human_label.as_deref(), Some("persian"));
        assert_eq!(
            apply_event(&l, AnnotationEvent::human_correct("ann", "   ", t(2))),
            Err(AnnotationError::EmptyCorrection)
        );
    }

    #[test]
    fn out_of_order_timestamps_are_clamped() {
        let a = boxed();
        let l = apply_event(&a, AnnotationEvent::ai_label("m", parse_label_text("Cat").unwrap(), t(-50))).unwrap();
        assert_eq!(l.history[1].timestamp(), t(0));
        assert!(l.check_invariants().is_ok());
    }

    #[test]
    fn deserialized_events_with_wrong_actor_are_rejected() {
        let json = r#"{"kind":{"kind":"human_accept"},"actor":{"type":"ai","id":"m"},"timestamp":"2024-01-01T00:00:00Z"}"#;
        let event: AnnotationEvent = serde_json::from_str(json).unwrap();
        let l = apply_event(&boxed(), AnnotationEvent::ai_label("m", parse_label_text("Cat").unwrap(), t(1))).unwrap();
        assert!(matches!(apply_event(&l, event), Err(AnnotationError::ActorMismatch { .. })));
    }

    #[test]
    fn status_parses_loosely() {
        assert_eq!("ai_labeled".parse::<AnnotationStatus>(), Ok(AnnotationStatus::AiLabeled));
        assert_eq!("BoxDrawn".parse::<AnnotationStatus>(), Ok(AnnotationStatus::BoxDrawn));
        assert!("done".parse::<AnnotationStatus>().is_err());
    }
}
