//! Open projects under a data root, each with a FIFO background worker for
//! its jobs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard, RwLockWriteGuard};
use std::panic::{self, AssertUnwindSafe};
use std::thread;

use termset_core::termgroup::AbbreviationLexicon;
use termset_core::{ContextType, TrainConfig};

use crate::error::{Result, ServiceError};
use crate::pipeline::{run_training, TrainRequest, TrainSettings};
use crate::project::{parse_corpus, DEFAULT_DOC, CorpusFormat, Job, JobKind, Project};

enum Work {
    Ingest { bytes: Vec<u8>, format: CorpusFormat },
    Train(TrainSettings),
}

pub struct ProjectHandle {
    project: RwLock<Project>,
    queue: Mutex<Option<Sender<(String, Work)>>>,
}

impl ProjectHandle {
    fn new(project: Project) -> Arc<Self> {
        Arc::new(ProjectHandle {
            project: RwLock::new(project),
            queue: Mutex::new(None),
        })
    }

    pub fn read(&self) -> RwLockReadGuard<'_, Project> {
        self.project.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, Project> {
        self.project.write().unwrap_or_else(|e| e.into_inner())
    }
}

pub struct Store {
    root: PathBuf,
    default_train: TrainConfig,
    lexicon: Arc<AbbreviationLexicon>,
    projects: Mutex<BTreeMap<String, Arc<ProjectHandle>>>,
}

/// Lowercase letters, digits and `-`; other runs collapse to one `-`.
pub fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars().flat_map(char::to_lowercase) {
        if c.is_ascii_alphanumeric() {
            out.push(c);
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    if out.is_empty() {
        "project".into()
    } else {
        out
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl Store {
    pub fn new(root: impl Into<PathBuf>, default_train: TrainConfig) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Store {
            root,
            default_train,
            lexicon: Arc::new(AbbreviationLexicon::shipped()),
            projects: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn default_train(&self) -> &TrainConfig {
        &self.default_train
    }

    pub fn lexicon(&self) -> &AbbreviationLexicon {
        &self.lexicon
    }

    /// Creates a project with an id derived from `name`.
    pub fn create(&self, name: &str) -> Result<Arc<ProjectHandle>> {
        if name.trim().is_empty() {
            return Err(ServiceError::BadRequest {
                message: "project name is empty".into(),
                field: Some("name".into()),
            });
        }
        let mut projects = self.projects.lock().unwrap_or_else(|e| e.into_inner());
        let base = slug(name);
        let mut id = base.clone();
        let mut n = 1;
        while projects.contains_key(&id) || self.root.join(&id).exists() {
            n += 1;
            id = format!("{base}-{n}");
        }
        let project = Project::create(&self.root.join(&id), &id, name)?;
        let handle = ProjectHandle::new(project);
        projects.insert(id, handle.clone());
        Ok(handle)
    }

    /// Opens a project by id, creating it when `create` is set.
    pub fn open_or_create(&self, id: &str, create: bool) -> Result<Arc<ProjectHandle>> {
        if !valid_id(id) {
            return Err(ServiceError::NotFound(format!("project {id} not found")));
        }
        let mut projects = self.projects.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(h) = projects.get(id) {
            return Ok(h.clone());
        }
        let dir = self.root.join(id);
        let project = if dir.join("project.json").exists() {
            Project::open(&dir)?
        } else if create {
            Project::create(&dir, id, id)?
        } else {
            return Err(ServiceError::NotFound(format!("project {id} not found")));
        };
        let handle = ProjectHandle::new(project);
        projects.insert(id.to_string(), handle.clone());
        Ok(handle)
    }

    pub fn get(&self, id: &str) -> Result<Arc<ProjectHandle>> {
        self.open_or_create(id, false)
    }

    pub fn submit_ingest(&self, handle: &Arc<ProjectHandle>, bytes: Vec<u8>, format: CorpusFormat) -> Result<Job> {
        self.submit(handle, JobKind::Ingest, Vec::new(), Work::Ingest { bytes, format })
    }

    pub fn submit_train(&self, handle: &Arc<ProjectHandle>, req: &TrainRequest) -> Result<Job> {
        let settings = self.settings(req)?;
        self.submit(handle, JobKind::Train, settings.contexts.clone(), Work::Train(settings))
    }

    fn submit(
        &self,
        handle: &Arc<ProjectHandle>,
        kind: JobKind,
        contexts: Vec<ContextType>,
        work: Work,
    ) -> Result<Job> {
        let mut queue = handle.queue.lock().unwrap_or_else(|e| e.into_inner());
        let job = handle.write().add_job(kind, contexts)?;
        let sender = queue.get_or_insert_with(|| self.spawn_worker(handle.clone()));
        if let Err(mpsc::SendError(item)) = sender.send((job.id.clone(), work)) {
            // The worker thread is gone; replace it.
            let sender = queue.insert(self.spawn_worker(handle.clone()));
            if sender.send(item).is_err() {
                let _ = handle
                    .write()
                    .finish_job(&job.id, Err("job worker unavailable".into()));
                return Err(ServiceError::Conflict("job worker unavailable".into()));
            }
        }
        Ok(job)
    }

    /// Runs an ingest on the calling thread and returns the finished job.
    pub fn ingest_now(
        &self,
        handle: &Arc<ProjectHandle>,
        bytes: Vec<u8>,
        format: CorpusFormat,
        progress: &dyn Fn(f64, &str),
    ) -> Result<Job> {
        self.run_inline(handle, JobKind::Ingest, Vec::new(), Work::Ingest { bytes, format }, progress)
    }

    /// Runs training on the calling thread and returns the finished job.
    pub fn train_now(
        &self,
        handle: &Arc<ProjectHandle>,
        req: &TrainRequest,
        progress: &dyn Fn(f64, &str),
    ) -> Result<Job> {
        let settings = self.settings(req)?;
        self.run_inline(handle, JobKind::Train, settings.contexts.clone(), Work::Train(settings), progress)
    }

    fn run_inline(
        &self,
        handle: &Arc<ProjectHandle>,
        kind: JobKind,
        contexts: Vec<ContextType>,
        work: Work,
        progress: &dyn Fn(f64, &str),
    ) -> Result<Job> {
        let job = handle.write().add_job(kind, contexts)?;
        run_job(handle, &job.id, work, &self.lexicon, progress);
        let done = handle.read().job(&job.id)?.clone();
        Ok(done)
    }

    fn settings(&self, req: &TrainRequest) -> Result<TrainSettings> {
        if req.contexts.is_empty() {
            return Err(ServiceError::BadRequest {
                message: "at least one context type is required".into(),
                field: Some("contexts".into()),
            });
        }
        let settings = TrainSettings::resolve(req, &self.default_train);
        settings.train_config.validate()?;
        Ok(settings)
    }

    fn spawn_worker(&self, handle: Arc<ProjectHandle>) -> Sender<(String, Work)> {
        let (tx, rx) = mpsc::channel::<(String, Work)>();
        let lexicon = self.lexicon.clone();
        thread::spawn(move || {
            for (job_id, work) in rx {
                let run = panic::catch_unwind(AssertUnwindSafe(|| {
                    run_job(&handle, &job_id, work, &lexicon, &|_, _| {})
                }));
                if run.is_err() {
                    let _ = handle.write().finish_job(&job_id, Err("job panicked".into()));
                }
            }
        });
        tx
    }
}

/// Runs one job. Heavy work happens on a snapshot without holding the
/// project lock; the result is installed under the write lock at the end.
fn run_job(
    handle: &ProjectHandle,
    job_id: &str,
    work: Work,
    lexicon: &AbbreviationLexicon,
    observer: &dyn Fn(f64, &str),
) {
    if let Err(e) = handle.write().start_job(job_id) {
        eprintln!("job {job_id}: {e}");
        return;
    }
    let outcome = match work {
        Work::Ingest { bytes, format } => {
            match parse_corpus(&bytes, format, DEFAULT_DOC) {
                Ok(sentences) => {
                    let mut p = handle.write();
                    p.set_corpus(sentences, format)
                        .map(|info| format!("{} sentences in {} documents", info.sentences, info.documents))
                        .map_err(|e| e.to_string())
                }
                Err(e) => Err(e.to_string()),
            }
        }
        Work::Train(settings) => {
            let corpus = handle.read().corpus.clone();
            let mut progress = |f: f64, msg: &str| {
                observer(f, msg);
                handle.write().job_progress(job_id, f, msg);
            };
            match run_training(&corpus, &settings, lexicon, &mut progress) {
                Ok(trained) => {
                    let groups = trained.groups.len();
                    let mut p = handle.write();
                    p.set_training(trained, settings)
                        .map(|()| format!("{groups} term groups"))
                        .map_err(|e| e.to_string())
                }
                Err(e) => Err(e.to_string()),
            }
        }
    };
    if let Err(e) = handle.write().finish_job(job_id, outcome) {
        eprintln!("job {job_id}: {e}");
    }
}
