//! The `boxlab` command line.
//!
//! Exit codes: 0 success, 1 the command ran but did not fully succeed (an
//! empty evaluation, items that failed to label), 2 bad usage or
//! missing/corrupt input.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use boxlab_core::evaluation::{cost_roi, EvaluationError};
use boxlab_core::labeling::SubmissionMode;
use boxlab_core::project::{export_coco, import_boxes, CategoryLevel, CocoId, ExportDocument, ExportOptions, TruthTable};
use boxlab_core::{
    AnnotationStatus, Clock, CostParams64, ImageRecord, MatchPolicy, MockProvider, Provider, SystemClock, Taxonomy, TaskConfig,
};

use crate::eval::evaluate_project;
use crate::filter::LabelFilter;
use crate::jobs::run_label;
use crate::live::LiveProvider;
use crate::verdict::Verdict;
use crate::workspace::{Workspace, WorkspaceError};

#[derive(Debug, Parser)]
#[command(name = "boxlab", version, about = "Human-AI collaborative image annotation")]
pub struct Cli {
    /// Project directory.
    #[arg(long, short = 'p', global = true, default_value = ".", env = "BOXLAB_PROJECT")]
    pub project: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create an empty project.
    Init {
        #[arg(long)]
        name: Option<String>,
        /// `asirra`, `zoo`, `empty`, or a path to a taxonomy TOML file.
        #[arg(long, default_value = "empty")]
        taxonomy: String,
        /// JSON file with labeling settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Add every image under a directory (creating the project if needed).
    Ingest {
        dir: PathBuf,
        /// Also create an unboxed (whole-image) annotation per new image.
        #[arg(long)]
        whole_image: bool,
        #[arg(long, default_value = "cli")]
        annotator: String,
    },
    /// Import boxes (and categories, as ground truth) from a COCO-style document.
    ImportBoxes {
        doc: PathBuf,
        /// Where to find images not yet ingested; defaults to the document's directory.
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long, default_value = "cli")]
        annotator: String,
    },
    /// Ask the model to label annotations.
    Label {
        /// `status=BoxDrawn,AiLabeled` and/or `ids=ann-…,ann-…`; repeatable.
        #[arg(long)]
        filter: Vec<String>,
        /// `mock:<fixture>` or `live` (reads BOXLAB_API_KEY).
        #[arg(long, default_value = "live")]
        provider: String,
        #[arg(long)]
        model: Option<String>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Record a verdict on an AI label.
    Verdict {
        annotation: String,
        #[arg(value_enum)]
        action: VerdictArg,
        /// Corrected label, or flag reason.
        text: Option<String>,
        #[arg(long, default_value = "cli")]
        annotator: String,
    },
    /// Score AI labels against ground truth.
    Eval {
        /// Truth table (`key<TAB>class`); defaults to the project's own truth.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// exact, base or hier.
        #[arg(long, default_value = "base")]
        policy: String,
        /// Override the project taxonomy (builtin name or TOML path).
        #[arg(long)]
        taxonomy: Option<String>,
        /// Also write the report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Export labeled boxes as a COCO-style document.
    Export {
        #[arg(long, default_value = "base")]
        level: String,
        /// Statuses to include, comma-separated.
        #[arg(long, default_value = "Verified,Corrected")]
        include: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare human-only and assisted labeling cost.
    Cost {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        full_sec: f64,
        #[arg(long)]
        box_sec: f64,
        #[arg(long)]
        wage: f64,
        #[arg(long)]
        api_cost: f64,
        #[arg(long)]
        json: bool,
    },
    /// Show annotation counts per status.
    Status,
    /// Run the HTTP service. Projects live under --root.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory holding one subdirectory per project; defaults to --project.
        #[arg(long)]
        root: Option<PathBuf>,
        #[arg(long, default_value = "live")]
        provider: String,
        /// Label jobs allowed to run at once.
        #[arg(long, default_value_t = 2)]
        workers: usize,
        /// Built UI bundle to serve at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Overlay,
    Crop,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VerdictArg {
    Accept,
    Correct,
    Flag,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn partial(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<WorkspaceError> for CliError {
    fn from(e: WorkspaceError) -> Self {
        CliError::input(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("boxlab: {}", e.message);
            e.code
        }
    }
}

pub fn run(cli: Cli) -> CliResult {
    let root = cli.project;
    match cli.command {
        Command::Init { name, taxonomy, config } => init(&root, name, &taxonomy, config.as_deref()),
        Command::Ingest { dir, whole_image, annotator } => ingest(&root, &dir, whole_image, &annotator),
        Command::ImportBoxes { doc, images, annotator } => import(&root, &doc, images.as_deref(), &annotator),
        Command::Label { filter, provider, model, mode, batch_size } => label(&root, &filter, &provider, model, mode, batch_size),
        Command::Verdict { annotation, action, text, annotator } => verdict(&root, &annotation, action, text, &annotator),
        Command::Eval { truth, policy, taxonomy, report } => eval(&root, truth.as_deref(), &policy, taxonomy.as_deref(), report.as_deref()),
        Command::Export { level, include, out } => export(&root, &level, &include, out.as_deref()),
        Command::Cost { n, full_sec, box_sec, wage, api_cost, json } => cost(n, full_sec, box_sec, wage, api_cost, json),
        Command::Status => status(&root),
        Command::Serve { port, host, root: serve_root, provider, workers, static_dir } => {
            serve(serve_root.unwrap_or(root), &host, port, &provider, workers, static_dir)
        }
    }
}

/// `asirra`, `zoo`, `empty` (optionally prefixed `builtin:`), or a TOML path.
pub fn load_taxonomy(spec: &str) -> Result<Taxonomy, CliError> {
    let name = spec.strip_prefix("builtin:").unwrap_or(spec);
    if let Some(t) = Taxonomy::builtin(name) {
        return Ok(t);
    }
    let text = fs::read_to_string(spec).map_err(|e| CliError::input(format!("cannot read taxonomy `{spec}`: {e}")))?;
    Taxonomy::from_toml(&text).map_err(|e| CliError::input(format!("invalid taxonomy `{spec}`: {e}")))
}

/// `mock:<fixture path>` or `live`.
pub fn provider_from_spec(spec: &str) -> Result<Arc<dyn Provider>, CliError> {
    if let Some(path) = spec.strip_prefix("mock:") {
        let mock = MockProvider::from_path(Path::new(path))
            .map_err(|e| CliError::input(format!("cannot load mock fixture `{path}`: {e}")))?;
        return Ok(Arc::new(mock));
    }
    if spec == "live" {
        return LiveProvider::from_env().map(|p| Arc::new(p) as Arc<dyn Provider>).map_err(|e| CliError::input(e.to_string()));
    }
    Err(CliError::input(format!("unknown provider `{spec}` (expected mock:<fixture> or live)")))
}

fn init(root: &Path, name: Option<String>, taxonomy: &str, config: Option<&Path>) -> CliResult {
    let taxonomy = load_taxonomy(taxonomy)?;
    let config = match config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
            let config: TaskConfig =
                serde_json::from_str(&text).map_err(|e| CliError::input(format!("invalid config {}: {e}", path.display())))?;
            config.validate().map_err(|e| CliError::input(e.to_string()))?;
            Some(config)
        }
        None => None,
    };
    fs::create_dir_all(root).map_err(|e| CliError::input(format!("cannot create {}: {e}", root.display())))?;
    let name = name.unwrap_or_else(|| {
        fs::canonicalize(root).ok().and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned())).unwrap_or_else(|| "project".into())
    });
    let mut ws = Workspace::create(root, &name, taxonomy)?;
    if let Some(config) = config {
        ws.project.config = config;
        ws.save()?;
    }
    println!("initialized project {} ({}) at {}", ws.project.name, ws.project.id, root.display());
    Ok(())
}

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "gif", "bmp"];

fn collect_images(dir: &Path, base: &Path, out: &mut Vec<(PathBuf, String)>) -> std::io::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if entry.file_type()?.is_dir() {
            collect_images(&path, base, out)?;
            continue;
        }
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).unwrap_or_default();
        if IMAGE_EXTENSIONS.contains(&ext.as_str()) {
            let rel = path.strip_prefix(base).unwrap_or(&path);
            let name = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            out.push((path, name));
        }
    }
    Ok(())
}

fn ingest(root: &Path, dir: &Path, whole_image: bool, annotator: &str) -> CliResult {
    let mut files = Vec::new();
    collect_images(dir, dir, &mut files).map_err(|e| CliError::input(format!("cannot read {}: {e}", dir.display())))?;
    let mut ws = Workspace::open_or_create(root)?;
    let clock = SystemClock;
    let (mut added, mut known, mut created, mut failed) = (0, 0, 0, 0);
    for (path, name) in files {
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) => {
                eprintln!("skipping {}: {e}", path.display());
                failed += 1;
                continue;
            }
        };
        match ws.ingest(&bytes, &name) {
            Ok((record, true)) => {
                added += 1;
                if whole_image {
                    ws.project
                        .create_annotation(&record.id, None, annotator, clock.now())
                        .map_err(|e| CliError::input(e.to_string()))?;
                    created += 1;
                }
            }
            Ok((_, false)) => known += 1,
            Err(e) => {
                eprintln!("skipping {name}: {e}");
                failed += 1;
            }
        }
    }
    ws.save()?;
    println!("ingested {added} new images ({known} already present, {failed} skipped); created {created} annotations");
    if failed > 0 {
        return Err(CliError::partial(format!("{failed} files could not be ingested")));
    }
    Ok(())
}

fn import(root: &Path, doc_path: &Path, images_dir: Option<&Path>, annotator: &str) -> CliResult {
    let text = fs::read_to_string(doc_path).map_err(|e| CliError::input(format!("cannot read {}: {e}", doc_path.display())))?;
    let doc: ExportDocument =
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("invalid document {}: {e}", doc_path.display())))?;
    let search = images_dir.map(Path::to_path_buf).unwrap_or_else(|| doc_path.parent().unwrap_or(Path::new(".")).to_path_buf());

    let mut ws = Workspace::open_or_create(root)?;
    let mut resolved: HashMap<CocoId, ImageRecord> = HashMap::new();
    for img in &doc.images {
        let known = ws.project.images().find(|r| r.source_name == img.file_name).cloned();
        let record = match known {
            Some(r) => r,
            None => {
                let path = search.join(&img.file_name);
                let bytes = fs::read(&path).map_err(|e| {
                    CliError::input(format!("image `{}` is not in the project and cannot be read from {}: {e}", img.file_name, path.display()))
                })?;
                ws.ingest(&bytes, &img.file_name).map_err(|e| CliError::input(e.to_string()))?.0
            }
        };
        resolved.insert(img.id.clone(), record);
    }
    let created = import_boxes(&doc, &mut ws.project, |img| resolved.get(&img.id).cloned(), annotator, SystemClock.now())
        .map_err(|e| CliError::input(e.to_string()))?;
    ws.save()?;
    println!("imported {} annotations on {} images", created.len(), doc.images.len());
    Ok(())
}

fn label(
    root: &Path,
    filter: &[String],
    provider: &str,
    model: Option<String>,
    mode: Option<ModeArg>,
    batch_size: Option<usize>,
) -> CliResult {
    let filter = LabelFilter::parse_terms(filter).map_err(|e| CliError::input(e.to_string()))?;
    let provider = provider_from_spec(provider)?;
    let mut ws = Workspace::open(root)?;
    let saved_config = ws.project.config.clone();
    if let Some(model) = model {
        ws.project.config.model_id = model;
    }
    if let Some(mode) = mode {
        ws.project.config.submission_mode = match mode {
            ModeArg::Overlay => SubmissionMode::Overlay,
            ModeArg::Crop => SubmissionMode::Crop,
        };
    }
    if let Some(n) = batch_size {
        ws.project.config.batch_size = n;
    }
    ws.project.config.validate().map_err(|e| CliError::input(e.to_string()))?;

    let outcomes = run_label(&mut ws, &filter, provider.as_ref(), &SystemClock).map_err(|e| CliError::input(e.to_string()))?;
    ws.project.config = saved_config;
    ws.save()?;

    let failed: Vec<_> = outcomes.iter().filter(|o| !o.ok).collect();
    for o in &failed {
        eprintln!("{}: {} ({})", o.annotation_id, o.error.as_deref().unwrap_or("failed"), o.error_code.as_deref().unwrap_or("error"));
    }
    println!("labeled {} of {} annotations ({} failed)", outcomes.len() - failed.len(), outcomes.len(), failed.len());
    if !failed.is_empty() {
        return Err(CliError::partial(format!("{} annotations were not labeled", failed.len())));
    }
    Ok(())
}

fn verdict(root: &Path, annotation: &str, action: VerdictArg, text: Option<String>, annotator: &str) -> CliResult {
    let verdict = match (action, text) {
        (VerdictArg::Accept, None) => Verdict::Accept,
        (VerdictArg::Correct, Some(label)) => Verdict::Correct { label },
        (VerdictArg::Flag, Some(reason)) => Verdict::Flag { reason },
        (VerdictArg::Flag, None) => Verdict::Flag { reason: String::new() },
        (VerdictArg::Accept, Some(_)) => return Err(CliError::input("accept takes no text")),
        (VerdictArg::Correct, None) => return Err(CliError::input("correct needs the corrected label")),
    };
    let mut ws = Workspace::open(root)?;
    let updated =
        ws.project.apply(annotation, verdict.to_event(annotator, SystemClock.now())).map_err(|e| CliError::input(e.to_string()))?;
    ws.save()?;
    println!("{}: {}", updated.id, updated.status);
    Ok(())
}

fn eval(root: &Path, truth: Option<&Path>, policy: &str, taxonomy: Option<&str>, report_path: Option<&Path>) -> CliResult {
    let policy: MatchPolicy = policy.parse().map_err(CliError::input)?;
    let ws = Workspace::open_read_only(root)?;
    let table = match truth {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read truth table {}: {e}", path.display())))?;
            TruthTable::parse(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?
        }
        None => TruthTable::from_project(&ws.project),
    };
    let (resolved, unmatched) = table.resolve(&ws.project);
    if !unmatched.is_empty() {
        eprintln!("warning: {} truth entries match no annotation (first: {})", unmatched.len(), unmatched[0]);
    }
    let taxonomy = match taxonomy {
        Some(spec) => load_taxonomy(spec)?,
        None => ws.project.taxonomy.clone(),
    };
    let report = match evaluate_project(&ws.project, &resolved, policy, &taxonomy) {
        Ok(r) => r,
        Err(EvaluationError::EmptyEvaluation) => {
            return Err(CliError::partial("nothing to evaluate: no annotation has ground truth"));
        }
        Err(e) => return Err(CliError::input(e.to_string())),
    };
    print!("{}", report.render());
    if let Some(path) = report_path {
        let mut json = serde_json::to_vec_pretty(&report).expect("report serializes");
        json.push(b'\n');
        fs::write(path, json).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

pub fn parse_statuses(list: &str) -> Result<BTreeSet<AnnotationStatus>, String> {
    list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect()
}

fn export(root: &Path, level: &str, include: &str, out: Option<&Path>) -> CliResult {
    let level: CategoryLevel = level.parse().map_err(CliError::input)?;
    let include = parse_statuses(include).map_err(CliError::input)?;
    let ws = Workspace::open_read_only(root)?;
    let doc = export_coco(&ws.project, &ExportOptions { include, level }).map_err(|e| CliError::input(e.to_string()))?;
    let mut json = serde_json::to_vec_pretty(&doc).expect("document serializes");
    json.push(b'\n');
    match out {
        Some(path) => {
            fs::write(path, json).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
            eprintln!("exported {} annotations, {} categories to {}", doc.annotations.len(), doc.categories.len(), path.display());
        }
        None => print!("{}", String::from_utf8(json).expect("json is utf-8")),
    }
    Ok(())
}

fn cost(n: u64, full_sec: f64, box_sec: f64, wage: f64, api_cost: f64, json: bool) -> CliResult {
    let params =
        CostParams64 { n_items: n, human_full_seconds: full_sec, human_box_seconds: box_sec, wage_per_hour: wage, api_cost_per_item: api_cost };
    let report = cost_roi(&params).map_err(|e| CliError::input(e.to_string()))?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        return Ok(());
    }
    println!("human_only_cost: {:.2}", report.human_only_cost);
    println!("assisted_human_cost: {:.2}", report.assisted_human_cost);
    println!("api_cost: {:.2}", report.api_cost);
    println!("assisted_total: {:.2}", report.assisted_total);
    println!("savings: {:.2}", report.savings);
    match report.roi {
        Some(roi) => println!("roi: {roi:.4}"),
        None => println!("roi: n/a"),
    }
    Ok(())
}

fn status(root: &Path) -> CliResult {
    let ws = Workspace::open_read_only(root)?;
    let mut counts: BTreeMap<AnnotationStatus, usize> = AnnotationStatus::ALL.into_iter().map(|s| (s, 0)).collect();
    for a in ws.project.annotations() {
        *counts.entry(a.status).or_default() += 1;
    }
    println!("project: {} ({})", ws.project.name, ws.project.id);
    println!("images: {}", ws.project.images().count());
    for (status, n) in counts {
        println!("{status}: {n}");
    }
    let usage = ws.project.usage();
    println!("requests: {} (tokens in {}, out {})", usage.requests, usage.input_tokens, usage.output_tokens);
    Ok(())
}

fn serve(root: PathBuf, host: &str, port: u16, provider: &str, workers: usize, static_dir: Option<PathBuf>) -> CliResult {
    let provider = provider_from_spec(provider)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::input(e.to_string()))?;
    runtime.block_on(async move {
        let state = crate::service::AppState::open(&root, provider, workers).map_err(|e| CliError::input(e.to_string()))?;
        let app = crate::service::router(state, static_dir.as_deref());
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .map_err(|e| CliError::input(format!("cannot listen on {host}:{port}: {e}")))?;
        eprintln!("boxlab serving {} on http://{}", root.display(), listener.local_addr().map(|a| a.to_string()).unwrap_or_default());
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::input(e.to_string()))
    })
}
