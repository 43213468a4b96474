//! Content-addressed image storage, region extraction and box overlays.
//!
//! Original bytes are stored untouched under `images/<content_hash>.<ext>`;
//! crops and overlays are derived on demand.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use image::{ImageFormat, Rgba, RgbaImage};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annotation::{validate_box, BoundingBox, BoxError, RegionKind};

pub type Bitmap = RgbaImage;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub source_name: String,
    pub width: u32,
    pub height: u32,
    /// Hex-encoded SHA-256 of the original bytes.
    pub content_hash: String,
    pub format: String,
}

impl ImageRecord {
    pub fn file_name(&self) -> String {
        format!("{}.{}", self.content_hash, self.format)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OverlayStyle {
    pub stroke_color: [u8; 4],
    pub stroke_width: u32,
}

impl Default for OverlayStyle {
    fn default() -> Self {
        Self { stroke_color: [255, 0, 0, 255], stroke_width: 3 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("cannot decode image `{source_name}`: {reason}")]
    Decode { source_name: String, reason: String },
    #[error(transparent)]
    Box(#[from] BoxError),
    #[error("stroke width must be at least 1")]
    InvalidStyle,
    #[error("unknown image `{0}`")]
    UnknownImage(String),
    #[error("image bytes for `{0}` are missing from the store")]
    MissingBytes(String),
    #[error("image store io: {0}")]
    Io(#[from] io::Error),
    #[error("cannot encode bitmap: {0}")]
    Encode(String),
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn format_tag(format: ImageFormat) -> &'static str {
    match format {
        ImageFormat::Png => "png",
        ImageFormat::Jpeg => "jpg",
        ImageFormat::Gif => "gif",
        ImageFormat::Bmp => "bmp",
        _ => "bin",
    }
}

/// Decodes raw bytes into an RGBA bitmap.
pub fn decode(bytes: &[u8], source_name: &str) -> Result<Bitmap, ImageError> {
    image::load_from_memory(bytes)
        .map(|img| img.to_rgba8())
        .map_err(|e| ImageError::Decode { source_name: source_name.to_string(), reason: e.to_string() })
}

/// Lossless PNG encoding used for provider submission.
pub fn encode_png(bitmap: &Bitmap) -> Result<Vec<u8>, ImageError> {
    let mut out = io::Cursor::new(Vec::new());
    bitmap.write_to(&mut out, ImageFormat::Png).map_err(|e| ImageError::Encode(e.to_string()))?;
    Ok(out.into_inner())
}

#[derive(Default)]
struct Index {
    by_hash: HashMap<String, ImageRecord>,
    by_id: HashMap<String, ImageRecord>,
    bytes: HashMap<String, Arc<Vec<u8>>>,
    next_id: u64,
}

/// Image repository. Either purely in memory or backed by a directory.
///
/// Ingestion serializes on the content-hash index, so concurrent ingests of
/// identical bytes yield a single record.
pub struct ImageStore {
    root: Option<PathBuf>,
    id_prefix: String,
    index: Mutex<Index>,
}

impl ImageStore {
    pub fn in_memory() -> Self {
        Self { root: None, id_prefix: "img-".into(), index: Mutex::new(Index { next_id: 1, ..Default::default() }) }
    }

    /// Opens a directory-backed store. New ids are `<id_prefix><n>`;
    /// `records` are the already-known images (usually from a project
    /// manifest).
    pub fn open(dir: impl Into<PathBuf>, id_prefix: &str, records: impl IntoIterator<Item = ImageRecord>) -> Self {
        let store = Self {
            root: Some(dir.into()),
            id_prefix: id_prefix.to_string(),
            index: Mutex::new(Index { next_id: 1, ..Default::default() }),
        };
        {
            let mut index = store.index.lock().unwrap();
            for record in records {
                index.register(&store.id_prefix, record);
            }
        }
        store
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    /// Decodes and stores the bytes. Identical bytes return the existing record.
    pub fn ingest(&self, bytes: &[u8], source_name: &str) -> Result<ImageRecord, ImageError> {
        let hash = content_hash(bytes);
        let mut index = self.index.lock().unwrap();
        if let Some(existing) = index.by_hash.get(&hash) {
            return Ok(existing.clone());
        }
        let format = image::guess_format(bytes)
            .map_err(|e| ImageError::Decode { source_name: source_name.to_string(), reason: e.to_string() })?;
        let bitmap = decode(bytes, source_name)?;
        let record = ImageRecord {
            id: format!("{}{:06}", self.id_prefix, index.next_id),
            source_name: source_name.to_string(),
            width: bitmap.width(),
            height: bitmap.height(),
            content_hash: hash,
            format: format_tag(format).to_string(),
        };
        if let Some(root) = &self.root {
            fs::create_dir_all(root)?;
            let path = root.join(record.file_name());
            let tmp = root.join(format!(".{}.tmp", record.file_name()));
            fs::write(&tmp, bytes)?;
            fs::rename(&tmp, &path)?;
        }
        index.bytes.insert(record.id.clone(), Arc::new(bytes.to_vec()));
        index.register(&self.id_prefix, record.clone());
        Ok(record)
    }

    pub fn get(&self, id: &str) -> Option<ImageRecord> {
        self.index.lock().unwrap().by_id.get(id).cloned()
    }

    pub fn by_hash(&self, hash: &str) -> Option<ImageRecord> {
        self.index.lock().unwrap().by_hash.get(hash).cloned()
    }

    pub fn records(&self) -> Vec<ImageRecord> {
        let index = self.index.lock().unwrap();
        let mut records: Vec<_> = index.by_id.values().cloned().collect();
        records.sort_by(|a, b| a.id.cmp(&b.id));
        records
    }

    /// Original bytes of an image.
    pub fn bytes(&self, id: &str) -> Result<Arc<Vec<u8>>, ImageError> {
        let record = {
            let index = self.index.lock().unwrap();
            if let Some(b) = index.bytes.get(id) {
                return Ok(Arc::clone(b));
            }
            index.by_id.get(id).cloned().ok_or_else(|| ImageError::UnknownImage(id.to_string()))?
        };
        let root = self.root.as_ref().ok_or_else(|| ImageError::MissingBytes(id.to_string()))?;
        let bytes = match fs::read(root.join(record.file_name())) {
            Ok(b) => Arc::new(b),
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(ImageError::MissingBytes(id.to_string())),
            Err(e) => return Err(e.into()),
        };
        self.index.lock().unwrap().bytes.insert(id.to_string(), Arc::clone(&bytes));
        Ok(bytes)
    }

    pub fn bitmap(&self, id: &str) -> Result<Bitmap, ImageError> {
        let bytes = self.bytes(id)?;
        decode(&bytes, id)
    }
}

impl Index {
    fn register(&mut self, prefix: &str, record: ImageRecord) {
        if let Some(n) = record.id.strip_prefix(prefix).and_then(|s| s.parse::<u64>().ok()) {
            self.next_id = self.next_id.max(n + 1);
        }
        self.by_hash.insert(record.content_hash.clone(), record.clone());
        self.by_id.insert(record.id.clone(), record);
    }
}

/// Copies the pixels selected by `region`. `WholeImage` returns the full bitmap.
pub fn extract_region(image: &Bitmap, region: &RegionKind) -> Result<Bitmap, ImageError> {
    match region {
        RegionKind::WholeImage => Ok(image.clone()),
        RegionKind::Box(b) => {
            validate_box(b, image.width(), image.height())?;
            Ok(image::imageops::crop_imm(image, b.x, b.y, b.width, b.height).to_image())
        }
    }
}

/// Draws each box as a rectangle outline. Strokes grow inward from the box
/// edge so they never leave the image; pixels further inside are untouched.
pub fn render_overlay(image: &Bitmap, boxes: &[BoundingBox], style: &OverlayStyle) -> Result<Bitmap, ImageError> {
    if style.stroke_width == 0 {
        return Err(ImageError::InvalidStyle);
    }
    for b in boxes {
        validate_box(b, image.width(), image.height())?;
    }
    let mut out = image.clone();
    let color = Rgba(style.stroke_color);
    for b in boxes {
        let sw = style.stroke_width;
        for y in b.y..b.y + b.height {
            for x in b.x..b.x + b.width {
                let dx = (x - b.x).min(b.x + b.width - 1 - x);
                let dy = (y - b.y).min(b.y + b.height - 1 - y);
                if dx < sw || dy < sw {
                    out.put_pixel(x, y, color);
                }
            }
        }
    }
    Ok(out)
}
