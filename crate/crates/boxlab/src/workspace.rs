//! A project directory opened for use: the project itself, its image store
//! and (for writers) the exclusive lock.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use boxlab_core::image_store::ImageError;
use boxlab_core::project::{self, ProjectError, ProjectLock, IMAGES_DIR, MANIFEST_FILE};
use boxlab_core::{ImageRecord, ImageStore, Project, Taxonomy};

#[derive(Debug, thiserror::Error)]
pub enum WorkspaceError {
    #[error("{0} is not a boxlab project (no {MANIFEST_FILE})")]
    NotAProject(PathBuf),
    #[error("a project already exists at {0}")]
    AlreadyExists(PathBuf),
    #[error(transparent)]
    Project(#[from] ProjectError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

pub struct Workspace {
    root: PathBuf,
    pub project: Project,
    images: Arc<ImageStore>,
    _lock: Option<ProjectLock>,
}

pub fn is_project(root: &Path) -> bool {
    root.join(MANIFEST_FILE).is_file()
}

pub fn new_project_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

impl Workspace {
    /// Creates and saves a new, empty project at `root`.
    pub fn create(root: &Path, name: &str, taxonomy: Taxonomy) -> Result<Self, WorkspaceError> {
        Self::create_with_id(root, &new_project_id(), name, taxonomy)
    }

    pub fn create_with_id(root: &Path, id: &str, name: &str, taxonomy: Taxonomy) -> Result<Self, WorkspaceError> {
        if is_project(root) {
            return Err(WorkspaceError::AlreadyExists(root.to_path_buf()));
        }
        let lock = ProjectLock::acquire(root)?;
        let mut project = Project::new(id, name);
        project.taxonomy = taxonomy;
        let ws = Self::assemble(root, project, Some(lock));
        ws.save()?;
        Ok(ws)
    }

    /// Opens an existing project for writing.
    pub fn open(root: &Path) -> Result<Self, WorkspaceError> {
        if !is_project(root) {
            return Err(WorkspaceError::NotAProject(root.to_path_buf()));
        }
        let lock = ProjectLock::acquire(root)?;
        let project = project::load(root)?;
        Ok(Self::assemble(root, project, Some(lock)))
    }

    /// Opens an existing project without taking the writer lock. Saving is
    /// refused.
    pub fn open_read_only(root: &Path) -> Result<Self, WorkspaceError> {
        if !is_project(root) {
            return Err(WorkspaceError::NotAProject(root.to_path_buf()));
        }
        let project = project::load(root)?;
        Ok(Self::assemble(root, project, None))
    }

    /// Opens the project at `root`, creating an empty one named after the
    /// directory if none exists.
    pub fn open_or_create(root: &Path) -> Result<Self, WorkspaceError> {
        if is_project(root) {
            return Self::open(root);
        }
        let name = fs::canonicalize(root)
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "project".to_string());
        Self::create(root, &name, Taxonomy::empty())
    }

    fn assemble(root: &Path, project: Project, lock: Option<ProjectLock>) -> Self {
        let images = ImageStore::open(root.join(IMAGES_DIR), &project.image_id_prefix(), project.images().cloned());
        Self { root: root.to_path_buf(), project, images: Arc::new(images), _lock: lock }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn images(&self) -> &Arc<ImageStore> {
        &self.images
    }

    pub fn is_writable(&self) -> bool {
        self._lock.is_some()
    }

    pub fn save(&self) -> Result<(), WorkspaceError> {
        if self._lock.is_none() {
            return Err(ProjectError::Locked(self.root.clone()).into());
        }
        project::save(&self.project, &self.root)?;
        Ok(())
    }

    /// Stores image bytes and registers the record with the project. Returns
    /// the record and whether it was new.
    pub fn ingest(&mut self, bytes: &[u8], source_name: &str) -> Result<(ImageRecord, bool), WorkspaceError> {
        let known = self.images.by_hash(&boxlab_core::image_store::content_hash(bytes)).is_some();
        let record = self.images.ingest(bytes, source_name)?;
        self.project.add_image(record.clone());
        Ok((record, !known))
    }
}
