//! On-disk project layout:
//!
//! ```text
//! <root>/
//!   project.manifest   JSON: identity, config, image records, usage, file checksums
//!   annotations.log    JSON lines, one event per line, append-only
//!   taxonomy.cfg       TOML taxonomy
//!   truth.tab          tab-separated `annotation_id<TAB>class`
//!   images/            original bytes as <content_hash>.<ext>
//! ```
//!
//! Every file is written to a temporary name and renamed into place; the
//! manifest goes last and records a SHA-256 of each other file, so a save
//! interrupted halfway is rejected on load instead of being half-read.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LogRecord, Project, ProjectError, UsageTotals};
use crate::image_store::{content_hash, ImageRecord};
use crate::labeling::TaskConfig;
use crate::taxonomy::Taxonomy;

pub const MANIFEST_FILE: &str = "project.manifest";
pub const ANNOTATIONS_FILE: &str = "annotations.log";
pub const TAXONOMY_FILE: &str = "taxonomy.cfg";
pub const TRUTH_FILE: &str = "truth.tab";
pub const IMAGES_DIR: &str = "images";
const LOCK_FILE: &str = "project.lock";
const FORMAT: &str = "boxlab-project/1";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    id: String,
    name: String,
    config: TaskConfig,
    images: Vec<ImageRecord>,
    usage: UsageTotals,
    next_annotation: u64,
    checksums: BTreeMap<String, String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ProjectError + '_ {
    move |source| ProjectError::Io { path: path.to_path_buf(), source }
}

fn corrupt(file: &str, reason: impl ToString) -> ProjectError {
    ProjectError::CorruptProject { file: file.to_string(), reason: reason.to_string() }
}

fn write_atomic(root: &Path, name: &str, bytes: &[u8]) -> Result<(), ProjectError> {
    let path = root.join(name);
    let tmp = root.join(format!(".{name}.tmp"));
    let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, &path).map_err(io_err(&path))
}

fn encode_log(log: &[LogRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for record in log {
        serde_json::to_writer(&mut out, record).expect("log record serializes");
        out.push(b'\n');
    }
    out
}

fn encode_truth(truth: &BTreeMap<String, String>) -> Vec<u8> {
    let mut out = String::new();
    for (id, class) in truth {
        out.push_str(id);
        out.push('\t');
        out.push_str(class);
        out.push('\n');
    }
    out.into_bytes()
}

/// Writes the project under `root`. Image bytes are written at ingest time
/// and are not touched here.
pub fn save(project: &Project, root: &Path) -> Result<(), ProjectError> {
    fs::create_dir_all(root.join(IMAGES_DIR)).map_err(io_err(root))?;
    let files: [(&str, Vec<u8>); 3] = [
        (ANNOTATIONS_FILE, encode_log(&project.log)),
        (TAXONOMY_FILE, project.taxonomy.to_toml().into_bytes()),
        (TRUTH_FILE, encode_truth(&project.truth)),
    ];
    let mut checksums = BTreeMap::new();
    for (name, bytes) in &files {
        checksums.insert(name.to_string(), content_hash(bytes));
        write_atomic(root, name, bytes)?;
    }
    let manifest = Manifest {
        format: FORMAT.to_string(),
        id: project.id.clone(),
        name: project.name.clone(),
        config: project.config.clone(),
        images: project.images.values().cloned().collect(),
        usage: project.usage,
        next_annotation: project.next_annotation,
        checksums,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    write_atomic(root, MANIFEST_FILE, &bytes)
}

fn read_checked(root: &Path, name: &str, manifest: &Manifest) -> Result<String, ProjectError> {
    let path = root.join(name);
    let bytes = fs::read(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => corrupt(name, "file missing"),
        _ => ProjectError::Io { path: path.clone(), source: e },
    })?;
    let expected = manifest.checksums.get(name).ok_or_else(|| corrupt(MANIFEST_FILE, format!("no checksum for {name}")))?;
    if &content_hash(&bytes) != expected {
        return Err(corrupt(name, "checksum mismatch"));
    }
    String::from_utf8(bytes).map_err(|e| corrupt(name, e))
}

pub fn load(root: &Path) -> Result<Project, ProjectError> {
    let manifest_path = root.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| corrupt(MANIFEST_FILE, e))?;
    if manifest.format != FORMAT {
        return Err(corrupt(MANIFEST_FILE, format!("unsupported format `{}`", manifest.format)));
    }

    let log_text = read_checked(root, ANNOTATIONS_FILE, &manifest)?;
    let mut log = Vec::new();
    for (n, line) in log_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: LogRecord =
            serde_json::from_str(line).map_err(|e| corrupt(ANNOTATIONS_FILE, format!("line {}: {e}", n + 1)))?;
        log.push(record);
    }
    let annotations = Project::replay_log(&log)?;

    let taxonomy = Taxonomy::from_toml(&read_checked(root, TAXONOMY_FILE, &manifest)?).map_err(|e| corrupt(TAXONOMY_FILE, e))?;

    let mut truth = BTreeMap::new();
    for (n, line) in read_checked(root, TRUTH_FILE, &manifest)?.lines().enumerate() {
        let (id, class) = line.split_once('\t').ok_or_else(|| corrupt(TRUTH_FILE, format!("line {}: missing tab", n + 1)))?;
        truth.insert(id.to_string(), class.to_string());
    }

    let project = Project {
        id: manifest.id,
        name: manifest.name,
        config: manifest.config,
        taxonomy,
        images: manifest.images.into_iter().map(|r| (r.id.clone(), r)).collect(),
        annotations,
        log,
        truth,
        usage: manifest.usage,
        next_annotation: manifest.next_annotation,
    };
    project.check_consistency().map_err(|e| match e {
        ProjectError::CorruptProject { .. } => e,
        other => corrupt(ANNOTATIONS_FILE, other),
    })?;
    Ok(project)
}

/// Exclusive writer lock on a project root, released on drop or process exit.
#[derive(Debug)]
pub struct ProjectLock {
    _file: File,
    path: PathBuf,
}

impl ProjectLock {
    pub fn acquire(root: &Path) -> Result<Self, ProjectError> {
        fs::create_dir_all(root).map_err(io_err(root))?;
        let path = root.join(LOCK_FILE);
        let file = OpenOptions::new().create(true).truncate(false).write(true).open(&path).map_err(io_err(&path))?;
        match file.try_lock() {
            Ok(()) => Ok(Self { _file: file, path }),
            Err(fs::TryLockError::WouldBlock) => Err(ProjectError::Locked(root.to_path_buf())),
            Err(fs::TryLockError::Error(e)) => Err(ProjectError::Io { path, source: e }),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

#[cfg(test)]
mod tests {
    use chrono::{DateTime, Utc};

    use super::*;
    use crate::annotation::{AnnotationEvent, BoundingBox};
    use crate::labeling::parse_label_text;

    fn at(s: i64) -> DateTime<Utc> {
        DateTime::from_timestamp(1_700_000_000 + s, 0).unwrap()
    }

    fn sample() -> Project {
        let mut p = Project::new("p-1", "sample");
        p.taxonomy = Taxonomy::asirra();
        for i in 1..=3 {
            p.add_image(super::super::tests::record(&format!("img-{i}"), 100, 80));
        }
        for i in 0..5 {
            let image = format!("img-{}", i % 3 + 1);
            let bbox = (i % 2 == 0).then(|| BoundingBox::new(i, i, 10, 10));
            let a = p.create_annotation(&image, bbox, "h", at(i as i64)).unwrap();
            if i > 1 {
                p.apply(&a.id, AnnotationEvent::ai_label("m", parse_label_text("Beagle (Dog)").unwrap(), at(10))).unwrap();
            }
            p.set_truth(&a.id, "dog").unwrap();
        }
        p
    }

    #[test]
    fn round_trip_is_value_equal_and_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let p = sample();
        save(&p, dir.path()).unwrap();
        let first: Vec<Vec<u8>> =
            [MANIFEST_FILE, ANNOTATIONS_FILE, TAXONOMY_FILE, TRUTH_FILE].iter().map(|f| fs::read(dir.path().join(f)).unwrap()).collect();
        let loaded = load(dir.path()).unwrap();
        assert_eq!(loaded, p);
        save(&loaded, dir.path()).unwrap();
        let second: Vec<Vec<u8>> =
            [MANIFEST_FILE, ANNOTATIONS_FILE, TAXONOMY_FILE, TRUTH_FILE].iter().map(|f| fs::read(dir.path().join(f)).unwrap()).collect();
        assert_eq!(first, second);
    }

    #[test]
    fn empty_project_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = Project::new("p", "empty");
        save(&p, dir.path()).unwrap();
        assert_eq!(load(dir.path()).unwrap(), p);
    }

    #[test]
    fn truncated_log_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        save(&sample(), dir.path()).unwrap();
        let path = dir.path().join(ANNOTATIONS_FILE);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        match load(dir.path()) {
            Err(ProjectError::CorruptProject { file, .. }) => assert_eq!(file, ANNOTATIONS_FILE),
            other => panic!("expected corrupt project, got {other:?}"),
        }
    }

    #[test]
    fn tampered_truth_and_bad_manifest_are_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        save(&sample(), dir.path()).unwrap();
        fs::write(dir.path().join(TRUTH_FILE), "ann-000001\tcat\n").unwrap();
        assert!(matches!(load(dir.path()), Err(ProjectError::CorruptProject { file, .. }) if file == TRUTH_FILE));
        fs::write(dir.path().join(MANIFEST_FILE), "{").unwrap();
        assert!(matches!(load(dir.path()), Err(ProjectError::CorruptProject { file, .. }) if file == MANIFEST_FILE));
    }

    #[test]
    fn missing_project_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load(&dir.path().join("nope")), Err(ProjectError::Io { .. })));
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let lock = ProjectLock::acquire(dir.path()).unwrap();
        assert!(matches!(ProjectLock::acquire(dir.path()), Err(ProjectError::Locked(_))));
        drop(lock);
        assert!(ProjectLock::acquire(dir.path()).is_ok());
    }
}
