//! Operational surface of boxlab: the `boxlab` command line, the `/v1`
//! HTTP service, in-process label jobs and the live model provider.
//!
//! Everything here is a thin layer over [`boxlab_core`]; the state machine,
//! storage formats and scoring live there.

pub mod cli;
pub mod eval;
pub mod filter;
pub mod jobs;
pub mod live;
pub mod service;
pub mod verdict;
pub mod workspace;

pub use filter::{FilterError, LabelFilter};
pub use jobs::{JobManager, JobOutcome, JobState, LabelJob};
pub use workspace::{Workspace, WorkspaceError};
