//! A project on disk and in memory, with every workflow operation.
//!
//! Layout under the project directory:
//!
//! ```text
//! project.json              metadata, job history, saved sets
//! corpus/sentences.jsonl    sentence cache
//! groups.jsonl              term groups
//! models/<ctype>.vec|.ctx   embeddings per context type
//! mlp.json                  optional candidate classifier
//! sessions/<sid>.json       expansion sessions
//! validated/<category>.csv  saved validated sets
//! ```
//!
//! Every mutation is written (file synced, then renamed into place) before
//! the call returns.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use termset_core::corpus::{self, Snippet, TokenizerConfig};
use termset_core::embedding::{self, load_model, save_model};
use termset_core::eval::{run_benchmark, BenchmarkReport, Expander, GoldCategory};
use termset_core::expansion::{self, ExpandParams, ExpansionReport, ExpansionResult, Models, SeedSet};
use termset_core::termgroup::{normalize, read_groups, write_groups};
use termset_core::{ContextType, Corpus, GroupId, MlpModel, Sentence, TermGroup};

use crate::error::{Result, ServiceError};
use crate::pipeline::{TrainSettings, Trained};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Text,
    Conllu,
}

impl std::str::FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "plain" | "txt" => Ok(CorpusFormat::Text),
            "conllu" | "conll-u" => Ok(CorpusFormat::Conllu),
            other => Err(format!("unknown corpus format {other:?} (expected text or conllu)")),
        }
    }
}

/// Document name (or prefix, for plain text) given to uploaded corpora.
pub const DEFAULT_DOC: &str = "doc";

/// Parses a corpus upload; `doc` names documents of this upload.
pub fn parse_corpus(bytes: &[u8], format: CorpusFormat, doc: &str) -> termset_core::Result<Vec<Sentence>> {
    match format {
        CorpusFormat::Text => corpus::ingest_plaintext(
            bytes,
            &TokenizerConfig {
                doc_prefix: doc.to_string(),
            },
        ),
        CorpusFormat::Conllu => corpus::ingest_conllu(bytes, doc),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    Ingest,
    Train,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub kind: JobKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contexts: Vec<ContextType>,
    pub state: JobState,
    pub progress: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusInfo {
    pub format: CorpusFormat,
    pub sentences: usize,
    pub documents: usize,
    pub tagged: bool,
    pub parsed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedSet {
    pub session_id: String,
    pub file: String,
    pub items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectMeta {
    pub id: String,
    pub name: String,
    pub corpus: Option<CorpusInfo>,
    pub training: Option<TrainSettings>,
    pub next_job: u64,
    pub next_session: u64,
    pub jobs: Vec<Job>,
    /// Saved validated sets by category.
    pub saved: BTreeMap<String, SavedSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub k: usize,
    pub pool_size: usize,
    pub result: ExpansionResult,
}

impl Session {
    fn params(&self) -> ExpandParams {
        ExpandParams {
            k: self.k,
            pool_size: self.pool_size,
        }
    }
}

/// Summary returned by `GET /projects/{id}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectSummary {
    pub id: String,
    pub name: String,
    pub corpus: Option<CorpusInfo>,
    pub contexts: Vec<ContextType>,
    pub groups: usize,
    pub mlp: bool,
    pub sessions: Vec<String>,
    pub saved: BTreeMap<String, SavedSet>,
    pub jobs: Vec<Job>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPage {
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub groups: Vec<TermGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnippetList {
    pub group_id: GroupId,
    pub snippets: Vec<Snippet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaveResponse {
    pub category: String,
    pub session_id: String,
    pub file: String,
    pub items: usize,
}

pub const MAX_PAGE: usize = 1000;
pub const DEFAULT_PAGE: usize = 100;

#[derive(Debug, Clone)]
pub struct Project {
    root: PathBuf,
    pub meta: ProjectMeta,
    pub corpus: Corpus,
    pub groups: BTreeMap<GroupId, TermGroup>,
    pub models: Models,
    pub mlp: Option<MlpModel>,
    pub sessions: BTreeMap<String, Session>,
    /// Lowercased member surfaces and normalized forms to groups.
    surfaces: HashMap<String, GroupId>,
}

/// Writes `bytes` to `path` durably: temp file, fsync, rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().expect("artifact paths have a parent");
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact")
    ));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
    Ok(())
}

/// Characters safe in a file name; everything else becomes `_`.
pub fn category_file_name(category: &str) -> String {
    let stem: String = category
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{stem}.csv")
}

fn missing(what: &str) -> ServiceError {
    ServiceError::Corrupt(format!("project artifact {what} is missing"))
}

fn corrupt(what: &str, e: termset_core::Error) -> ServiceError {
    match e {
        termset_core::Error::Format { line, message } => {
            ServiceError::Corrupt(format!("{what} line {line}: {message}"))
        }
        other => ServiceError::Corrupt(format!("{what}: {other}")),
    }
}

impl Project {
    pub fn create(root: &Path, id: &str, name: &str) -> Result<Self> {
        if root.join("project.json").exists() {
            return Err(ServiceError::Conflict(format!("project {id} already exists")));
        }
        let project = Project {
            root: root.to_path_buf(),
            meta: ProjectMeta {
                id: id.to_string(),
                name: name.to_string(),
                corpus: None,
                training: None,
                next_job: 1,
                next_session: 1,
                jobs: Vec::new(),
                saved: BTreeMap::new(),
            },
            corpus: Corpus::default(),
            groups: BTreeMap::new(),
            models: Models::new(),
            mlp: None,
            sessions: BTreeMap::new(),
            surfaces: HashMap::new(),
        };
        project.write_meta()?;
        Ok(project)
    }

    /// Restores a project; a missing or corrupt artifact is an error that
    /// names it.
    pub fn open(root: &Path) -> Result<Self> {
        let meta_path = root.join("project.json");
        let text = fs::read_to_string(&meta_path).map_err(|_| missing("project.json"))?;
        let mut meta: ProjectMeta = serde_json::from_str(&text)
            .map_err(|e| ServiceError::Corrupt(format!("project.json: {e}")))?;

        let corpus = if meta.corpus.is_some() {
            let f = File::open(root.join("corpus/sentences.jsonl")).map_err(|_| missing("corpus/sentences.jsonl"))?;
            Corpus::read_jsonl(BufReader::new(f)).map_err(|e| corrupt("corpus/sentences.jsonl", e))?
        } else {
            Corpus::default()
        };

        let mut groups = BTreeMap::new();
        let mut models = Models::new();
        if let Some(training) = &meta.training {
            let f = File::open(root.join("groups.jsonl")).map_err(|_| missing("groups.jsonl"))?;
            for g in read_groups(BufReader::new(f)).map_err(|e| corrupt("groups.jsonl", e))? {
                groups.insert(g.id, g);
            }
            for &ctype in &training.contexts {
                let rel = format!("models/{ctype}.vec");
                let path = root.join(&rel);
                if !path.exists() {
                    return Err(missing(&rel));
                }
                if !embedding::context_path(&path).exists() {
                    return Err(missing(&format!("models/{ctype}.ctx")));
                }
                let model = load_model(&path, ctype).map_err(|e| corrupt(&rel, e))?;
                models.insert(ctype, model);
            }
        }

        let mlp_path = root.join("mlp.json");
        let mlp = if mlp_path.exists() {
            Some(MlpModel::load(File::open(&mlp_path)?).map_err(|e| corrupt("mlp.json", e))?)
        } else {
            None
        };

        let mut sessions = BTreeMap::new();
        let dir = root.join("sessions");
        if dir.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(&dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            entries.sort();
            for p in entries {
                let name = format!("sessions/{}", p.file_name().unwrap().to_string_lossy());
                let s: Session = serde_json::from_str(&fs::read_to_string(&p)?)
                    .map_err(|e| ServiceError::Corrupt(format!("{name}: {e}")))?;
                sessions.insert(s.id.clone(), s);
            }
        }

        // Work that was in flight when the process stopped is lost.
        let mut interrupted = false;
        for job in &mut meta.jobs {
            if matches!(job.state, JobState::Queued | JobState::Running) {
                job.state = JobState::Failed;
                job.message = "interrupted by a restart".into();
                interrupted = true;
            }
        }

        let mut project = Project {
            root: root.to_path_buf(),
            meta,
            corpus,
            groups,
            models,
            mlp,
            sessions,
            surfaces: HashMap::new(),
        };
        project.index_surfaces();
        if interrupted {
            project.write_meta()?;
        }
        Ok(project)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn id(&self) -> &str {
        &self.meta.id
    }

    fn index_surfaces(&mut self) {
        self.surfaces.clear();
        for g in self.groups.values() {
            for m in &g.members {
                self.surfaces.entry(m.surface.to_lowercase()).or_insert(g.id);
            }
        }
        for g in self.groups.values() {
            for m in &g.members {
                self.surfaces.entry(normalize(&m.surface)).or_insert(g.id);
            }
        }
    }

    fn write_meta(&self) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.meta).map_err(termset_core::Error::from)?;
        text.push('\n');
        write_atomic(&self.root.join("project.json"), text.as_bytes())?;
        Ok(())
    }

    fn write_session(&self, s: &Session) -> Result<()> {
        let text = serde_json::to_string(s).map_err(termset_core::Error::from)?;
        write_atomic(&self.root.join("sessions").join(format!("{}.json", s.id)), text.as_bytes())?;
        Ok(())
    }

    pub fn summary(&self) -> ProjectSummary {
        ProjectSummary {
            id: self.meta.id.clone(),
            name: self.meta.name.clone(),
            corpus: self.meta.corpus.clone(),
            contexts: self.models.keys().copied().collect(),
            groups: self.groups.len(),
            mlp: self.mlp.is_some(),
            sessions: self.sessions.keys().cloned().collect(),
            saved: self.meta.saved.clone(),
            jobs: self.meta.jobs.clone(),
        }
    }

    pub fn is_trained(&self) -> bool {
        self.meta.training.is_some()
    }

    // Jobs.

    pub fn add_job(&mut self, kind: JobKind, contexts: Vec<ContextType>) -> Result<Job> {
        let job = Job {
            id: format!("j{}", self.meta.next_job),
            kind,
            contexts,
            state: JobState::Queued,
            progress: 0.0,
            message: "queued".into(),
        };
        self.meta.next_job += 1;
        self.meta.jobs.push(job.clone());
        self.write_meta()?;
        Ok(job)
    }

    pub fn job(&self, id: &str) -> Result<&Job> {
        self.meta
            .jobs
            .iter()
            .find(|j| j.id == id)
            .ok_or_else(|| ServiceError::NotFound(format!("job {id} not found")))
    }

    fn job_mut(&mut self, id: &str) -> Result<&mut Job> {
        self.meta
            .jobs
            .iter_mut()
            .find(|j| j.id == id)
            .ok_or_else(|| ServiceError::NotFound(format!("job {id} not found")))
    }

    pub fn start_job(&mut self, id: &str) -> Result<()> {
        let job = self.job_mut(id)?;
        job.state = JobState::Running;
        job.message = "running".into();
        self.write_meta()
    }

    /// In-memory progress update; not persisted.
    pub fn job_progress(&mut self, id: &str, fraction: f64, message: &str) {
        if let Ok(job) = self.job_mut(id) {
            job.progress = fraction.clamp(0.0, 1.0);
            job.message = message.to_string();
        }
    }

    pub fn finish_job(&mut self, id: &str, outcome: std::result::Result<String, String>) -> Result<()> {
        let job = self.job_mut(id)?;
        match outcome {
            Ok(message) => {
                job.state = JobState::Done;
                job.progress = 1.0;
                job.message = message;
            }
            Err(message) => {
                job.state = JobState::Failed;
                job.message = message;
            }
        }
        self.write_meta()
    }

    // Corpus and training.

    /// Replaces the corpus. A changed corpus invalidates groups, models and
    /// sessions; re-ingesting identical input keeps them.
    pub fn set_corpus(&mut self, sentences: Vec<Sentence>, format: CorpusFormat) -> Result<CorpusInfo> {
        let corpus = Corpus::new(sentences);
        let info = CorpusInfo {
            format,
            sentences: corpus.len(),
            documents: corpus.documents(),
            tagged: corpus.is_tagged(),
            parsed: corpus.is_parsed(),
        };
        if self.meta.corpus.is_some() && corpus == self.corpus {
            self.meta.corpus = Some(info.clone());
            self.write_meta()?;
            return Ok(info);
        }
        let mut buf = Vec::new();
        corpus.write_jsonl(&mut buf)?;
        write_atomic(&self.root.join("corpus/sentences.jsonl"), &buf)?;
        self.corpus = corpus;
        self.meta.corpus = Some(info.clone());
        self.clear_training()?;
        self.write_meta()?;
        Ok(info)
    }

    fn clear_training(&mut self) -> Result<()> {
        self.meta.training = None;
        self.groups.clear();
        self.models.clear();
        self.sessions.clear();
        self.surfaces.clear();
        for dir in ["models", "sessions"] {
            let p = self.root.join(dir);
            if p.exists() {
                fs::remove_dir_all(p)?;
            }
        }
        let g = self.root.join("groups.jsonl");
        if g.exists() {
            fs::remove_file(g)?;
        }
        Ok(())
    }

    /// Installs freshly trained groups and models. Earlier sessions refer to
    /// the old group ids and are dropped.
    pub fn set_training(&mut self, trained: Trained, settings: TrainSettings) -> Result<()> {
        // Write the new artifacts before the metadata that points at them.
        self.clear_training()?;
        let mut buf = Vec::new();
        write_groups(&trained.groups, &mut buf)?;
        write_atomic(&self.root.join("groups.jsonl"), &buf)?;
        fs::create_dir_all(self.root.join("models"))?;
        for (ctype, model) in &trained.models {
            save_model(model, &self.root.join(format!("models/{ctype}.vec")))?;
        }
        self.groups = trained.groups.into_iter().map(|g| (g.id, g)).collect();
        self.models = trained.models;
        self.meta.training = Some(settings);
        self.index_surfaces();
        self.write_meta()
    }

    pub fn set_mlp(&mut self, mlp: MlpModel) -> Result<()> {
        let mut buf = Vec::new();
        mlp.save(&mut buf)?;
        buf.push(b'\n');
        write_atomic(&self.root.join("mlp.json"), &buf)?;
        self.mlp = Some(mlp);
        Ok(())
    }

    // Reads.

    pub fn groups_page(&self, filter: Option<&str>, offset: usize, limit: usize) -> GroupPage {
        let limit = limit.min(MAX_PAGE);
        let matching: Vec<&TermGroup> = self
            .groups
            .values()
            .filter(|g| filter.is_none_or(|f| g.matches_filter(f)))
            .collect();
        GroupPage {
            total: matching.len(),
            offset,
            limit,
            groups: matching.into_iter().skip(offset).take(limit).cloned().collect(),
        }
    }

    pub fn group(&self, id: GroupId) -> Result<&TermGroup> {
        self.groups
            .get(&id)
            .ok_or_else(|| ServiceError::NotFound(format!("group {id} not found")))
    }

    pub fn snippets(&self, id: GroupId, max_n: usize) -> Result<SnippetList> {
        let g = self.group(id)?;
        Ok(SnippetList {
            group_id: id,
            snippets: corpus::snippets(&self.corpus, g, max_n),
        })
    }

    /// Resolves a term string to its group: exact member (any case) first,
    /// then normalized form.
    pub fn resolve_term(&self, term: &str) -> Option<GroupId> {
        self.surfaces
            .get(&term.to_lowercase())
            .or_else(|| self.surfaces.get(&normalize(term)))
            .copied()
    }

    // Expansion sessions.

    fn require_trained(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(ServiceError::Conflict(
                "no trained models yet; run training first".into(),
            ));
        }
        Ok(())
    }

    pub fn session(&self, sid: &str) -> Result<&Session> {
        self.sessions
            .get(sid)
            .ok_or_else(|| ServiceError::NotFound(format!("session {sid} not found")))
    }

    pub fn report(&self, sid: &str) -> Result<ExpansionReport> {
        let s = self.session(sid)?;
        Ok(s.result.report(Some(&s.id), &self.groups))
    }

    fn add_session(&mut self, result: ExpansionResult, params: ExpandParams) -> Result<ExpansionReport> {
        let session = Session {
            id: format!("s{}", self.meta.next_session),
            k: params.k,
            pool_size: params.pool_size,
            result,
        };
        self.meta.next_session += 1;
        self.write_session(&session)?;
        self.write_meta()?;
        let report = session.result.report(Some(&session.id), &self.groups);
        self.sessions.insert(session.id.clone(), session);
        Ok(report)
    }

    pub fn expand(&mut self, category: &str, seed_ids: &[GroupId], params: ExpandParams) -> Result<ExpansionReport> {
        self.require_trained()?;
        let unknown: Vec<String> = seed_ids
            .iter()
            .filter(|g| !self.groups.contains_key(g))
            .map(|g| g.to_string())
            .collect();
        if !unknown.is_empty() {
            return Err(ServiceError::NotFound(format!("unknown group ids: {}", unknown.join(", "))));
        }
        let seed = SeedSet::new(category, seed_ids.iter().copied())?;
        let result = expansion::expand(&self.models, self.mlp.as_ref(), &seed, params)?;
        self.add_session(result, params)
    }

    pub fn validate(&mut self, sid: &str, group: GroupId, completed: bool) -> Result<ExpansionReport> {
        let session = self
            .sessions
            .get_mut(sid)
            .ok_or_else(|| ServiceError::NotFound(format!("session {sid} not found")))?;
        session.result.set_completed(group, completed)?;
        let session = session.clone();
        self.write_session(&session)?;
        Ok(session.result.report(Some(&session.id), &self.groups))
    }

    pub fn reexpand(&mut self, sid: &str, accepted: &[GroupId]) -> Result<ExpansionReport> {
        self.require_trained()?;
        let session = self.session(sid)?;
        let accepted: BTreeSet<GroupId> = accepted.iter().copied().collect();
        let params = session.params();
        let result = expansion::reexpand(&session.result, &accepted, &self.models, self.mlp.as_ref(), params)?;
        self.add_session(result, params)
    }

    /// Persists the validated items of a session as
    /// `validated/<category>.csv`.
    pub fn save(&mut self, sid: &str) -> Result<SaveResponse> {
        let session = self.session(sid)?;
        let category = session.result.seed.category.clone();
        let mut buf = Vec::new();
        session.result.export_csv(&self.groups, &mut buf)?;
        let file = format!("validated/{}", category_file_name(&category));
        write_atomic(&self.root.join(&file), &buf)?;
        let saved = SavedSet {
            session_id: sid.to_string(),
            file: file.clone(),
            items: session.result.validated.len(),
        };
        self.meta.saved.insert(category.clone(), saved.clone());
        self.write_meta()?;
        Ok(SaveResponse {
            category,
            session_id: saved.session_id,
            file,
            items: saved.items,
        })
    }

    /// Resolves each term to a group; the error names every unknown term.
    pub fn resolve_terms<S: AsRef<str>>(&self, terms: &[S]) -> Result<Vec<GroupId>> {
        let mut ids = Vec::with_capacity(terms.len());
        let mut unknown = Vec::new();
        for t in terms {
            match self.resolve_term(t.as_ref()) {
                Some(g) => ids.push(g),
                None => unknown.push(format!("{:?}", t.as_ref())),
            }
        }
        if !unknown.is_empty() {
            return Err(ServiceError::NotFound(format!(
                "no term group for {}",
                unknown.join(", ")
            )));
        }
        Ok(ids)
    }

    pub fn benchmark(&self, dataset: &[GoldCategory], cutoffs: &[usize]) -> Result<BenchmarkReport> {
        self.require_trained()?;
        Ok(run_benchmark(self, dataset, cutoffs)?)
    }

    /// The saved CSV for `category`.
    pub fn export(&self, category: &str) -> Result<String> {
        let saved = self
            .meta
            .saved
            .get(category)
            .ok_or_else(|| ServiceError::NotFound(format!("no saved set for category {category:?}")))?;
        fs::read_to_string(self.root.join(&saved.file)).map_err(|_| missing(&saved.file))
    }
}

impl Expander for Project {
    fn resolve(&self, term: &str) -> Option<GroupId> {
        self.resolve_term(term)
    }

    fn rank(&self, category: &str, seeds: &BTreeSet<GroupId>, depth: usize) -> termset_core::Result<Vec<GroupId>> {
        let seed = SeedSet::new(category, seeds.iter().copied())?;
        let params = ExpandParams {
            k: depth,
            pool_size: depth.max(expansion::DEFAULT_POOL_SIZE),
        };
        let result = expansion::expand(&self.models, self.mlp.as_ref(), &seed, params)?;
        Ok(result.candidates.iter().filter(|c| !c.seed).map(|c| c.group_id).collect())
    }
}
