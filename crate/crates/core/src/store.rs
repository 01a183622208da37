//! Append-only experiment archive.
//!
//! ```text
//! <root>/manifest.toml          experiment config, its hash, seeds
//! <root>/runs/<run_id>.jsonl    one event per line, header first
//! <root>/programs/<sha256>.py   candidate sources, content-addressed
//! <root>/reports/               analysis output
//! ```

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::base::BanditTrace;
use crate::engine::{BestRef, BudgetSpec, CallRecord, Entry, IslandState, Protocol, RunRecord, Trajectory};
use crate::geom::Task;
use crate::mutation::{Failure, Payload, SimState};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: schema version {found} is newer than supported version {SCHEMA_VERSION}")]
    SchemaVersion { path: PathBuf, found: u32 },
    #[error("{path}:{line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("run {0} is closed")]
    Closed(String),
    #[error("run {0} not found")]
    NotFound(String),
    #[error("run {0} already exists")]
    Exists(String),
    #[error("program {0} missing from archive")]
    MissingProgram(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("config hash {found} does not match this archive's {expected}")]
    ConfigMismatch { expected: String, found: String },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Candidate payload as stored: program text lives in `programs/`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StoredPayload {
    Program { sha256: String },
    Simulated(SimState),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredEntry {
    pub generation: u32,
    pub child: u32,
    pub call: Option<u64>,
    pub parent: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub island: Option<usize>,
    pub fitness: f64,
    pub accepted: bool,
    pub payload: Option<StoredPayload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub schema_version: u32,
    pub run_id: String,
    pub protocol: Protocol,
    pub task: Task,
    pub model_id: String,
    pub budget: BudgetSpec,
    pub seed: u64,
    pub started_unix_ms: u64,
}

/// One line of a run file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Header(RunHeader),
    /// Opens trajectory `trajectory` with its initial program.
    Root { trajectory: usize, entry: StoredEntry },
    /// One charged call and the child it produced.
    Call { call: CallRecord, entry: StoredEntry },
    Bandit(BanditTrace),
    Islands(IslandState),
    Close {
        complete: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
        best: Option<BestRef>,
        wall_ms: u64,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunFilter {
    pub model: Option<String>,
    pub task: Option<Task>,
    pub protocol: Option<String>,
    pub c: Option<u64>,
    pub t: Option<u64>,
    pub include_incomplete: bool,
}

impl RunFilter {
    pub fn matches(&self, r: &RunRecord) -> bool {
        (self.include_incomplete || r.complete)
            && self.model.as_ref().is_none_or(|m| *m == r.model_id)
            && self.task.is_none_or(|t| t == r.task)
            && self.protocol.as_ref().is_none_or(|p| p == r.protocol.name())
            && self.c.is_none_or(|c| c == r.budget.c)
            && self.t.is_none_or(|t| t == r.budget.t)
    }
}

/// Experiment manifest: the fully resolved config and its hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub config: toml::Table,
}

impl Manifest {
    pub fn new(config: toml::Table, seeds: Vec<u64>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config_hash: config_hash(&config),
            seeds,
            config,
        }
    }
}

/// SHA-256 of the config's canonical JSON form (keys sorted).
pub fn config_hash(config: &toml::Table) -> String {
    let canonical = serde_json::to_value(config).expect("toml tables are JSON-representable");
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

pub fn program_hash(source: &str) -> String {
    hex::encode(Sha256::digest(source.as_bytes()))
}

#[derive(Debug, Clone)]
pub struct Archive {
    root: PathBuf,
}

impl Archive {
    /// Opens `root`, creating the layout if needed.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for dir in ["runs", "programs", "reports"] {
            let p = root.join(dir);
            fs::create_dir_all(&p).map_err(io(&p))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn run_path(&self, run_id: &str) -> PathBuf {
        self.root.join("runs").join(format!("{run_id}.jsonl"))
    }

    fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.toml")
    }

    pub fn read_manifest(&self) -> Result<Option<Manifest>, StoreError> {
        let path = self.manifest_path();
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io(&path)(e)),
        };
        let m: Manifest = toml::from_str(&text).map_err(|e| StoreError::Manifest(e.to_string()))?;
        if m.schema_version > SCHEMA_VERSION {
            return Err(StoreError::SchemaVersion {
                path,
                found: m.schema_version,
            });
        }
        if config_hash(&m.config) != m.config_hash {
            return Err(StoreError::Manifest("config hash does not match the stored config".into()));
        }
        Ok(Some(m))
    }

    /// Writes the manifest, or checks an existing one has the same hash.
    pub fn ensure_manifest(&self, manifest: &Manifest) -> Result<(), StoreError> {
        if let Some(existing) = self.read_manifest()? {
            if existing.config_hash != manifest.config_hash {
                return Err(StoreError::ConfigMismatch {
                    expected: existing.config_hash,
                    found: manifest.config_hash.clone(),
                });
            }
            return Ok(());
        }
        let text = toml::to_string_pretty(manifest).map_err(|e| StoreError::Manifest(e.to_string()))?;
        let path = self.manifest_path();
        fs::write(&path, text).map_err(io(&path))
    }

    pub fn store_program(&self, source: &str) -> Result<String, StoreError> {
        let hash = program_hash(source);
        let path = self.root.join("programs").join(format!("{hash}.py"));
        if !path.exists() {
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, source).map_err(io(&tmp))?;
            fs::rename(&tmp, &path).map_err(io(&path))?;
        }
        Ok(hash)
    }

    pub fn load_program(&self, sha256: &str) -> Result<String, StoreError> {
        let path = self.root.join("programs").join(format!("{sha256}.py"));
        fs::read_to_string(&path).map_err(|_| StoreError::MissingProgram(sha256.to_string()))
    }

    /// Starts a new run file with its header.
    pub fn begin_run(&self, header: RunHeader) -> Result<RunWriter, StoreError> {
        let path = self.run_path(&header.run_id);
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    StoreError::Exists(header.run_id.clone())
                } else {
                    io(&path)(e)
                }
            })?;
        let mut w = RunWriter {
            run_id: header.run_id.clone(),
            path,
            file,
            closed: false,
        };
        w.append(&Event::Header(header))?;
        Ok(w)
    }

    /// Appends one event to an open run.
    pub fn append_event(&self, run_id: &str, event: &Event) -> Result<(), StoreError> {
        let path = self.run_path(run_id);
        if !path.exists() {
            return Err(StoreError::NotFound(run_id.to_string()));
        }
        let events = read_events(&path)?.events;
        if matches!(events.last(), Some(Event::Close { .. })) {
            return Err(StoreError::Closed(run_id.to_string()));
        }
        let mut w = RunWriter {
            run_id: run_id.to_string(),
            file: OpenOptions::new().append(true).open(&path).map_err(io(&path))?,
            path,
            closed: false,
        };
        w.append(event)
    }

    fn stored_entry(&self, e: &Entry) -> Result<StoredEntry, StoreError> {
        let payload = match &e.payload {
            None => None,
            Some(Payload::Program { source }) => Some(StoredPayload::Program {
                sha256: self.store_program(source)?,
            }),
            Some(Payload::Simulated(s)) => Some(StoredPayload::Simulated(*s)),
        };
        Ok(StoredEntry {
            generation: e.generation,
            child: e.child,
            call: e.call,
            parent: e.parent,
            island: e.island,
            fitness: e.fitness,
            accepted: e.accepted,
            payload,
            failure: e.failure.clone(),
        })
    }

    /// Persists a finished run as a closed event file.
    pub fn write_run(&self, r: &RunRecord) -> Result<PathBuf, StoreError> {
        let mut w = self.begin_run(RunHeader {
            schema_version: SCHEMA_VERSION,
            run_id: r.run_id.clone(),
            protocol: r.protocol.clone(),
            task: r.task,
            model_id: r.model_id.clone(),
            budget: r.budget,
            seed: r.seed,
            started_unix_ms: r.started_unix_ms,
        })?;
        for (ti, t) in r.trajectories.iter().enumerate() {
            w.append(&Event::Root {
                trajectory: ti,
                entry: self.stored_entry(&t.entries[0])?,
            })?;
        }
        for call in &r.calls {
            let entry = &r.trajectories[call.trajectory].entries[call.entry];
            w.append(&Event::Call {
                call: call.clone(),
                entry: self.stored_entry(entry)?,
            })?;
        }
        if let Some(b) = &r.bandit {
            w.append(&Event::Bandit(b.clone()))?;
        }
        if let Some(i) = &r.islands {
            w.append(&Event::Islands(i.clone()))?;
        }
        w.close(r.complete, r.error.clone(), r.best, r.wall_ms)?;
        Ok(self.run_path(&r.run_id))
    }

    /// Removes an incomplete run so it can be re-executed.
    pub fn discard_run(&self, run_id: &str) -> Result<(), StoreError> {
        let path = self.run_path(run_id);
        fs::remove_file(&path).map_err(io(&path))
    }

    /// Run ids with a file in the archive, sorted.
    pub fn run_ids(&self) -> Result<Vec<String>, StoreError> {
        let dir = self.root.join("runs");
        let mut ids: Vec<String> = fs::read_dir(&dir)
            .map_err(io(&dir))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".jsonl").map(str::to_string)
            })
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn load_run(&self, run_id: &str) -> Result<RunRecord, StoreError> {
        let path = self.run_path(run_id);
        if !path.exists() {
            return Err(StoreError::NotFound(run_id.to_string()));
        }
        let mut cache = HashMap::new();
        self.rebuild(&path, &mut cache)
    }

    /// Whether `run_id` exists and closed as complete.
    pub fn is_complete(&self, run_id: &str) -> Result<bool, StoreError> {
        let path = self.run_path(run_id);
        if !path.exists() {
            return Ok(false);
        }
        let log = read_events(&path)?;
        Ok(matches!(log.events.last(), Some(Event::Close { complete: true, .. })))
    }

    /// Matching runs in run-id order; incomplete runs only on request.
    pub fn load_runs(&self, filter: &RunFilter) -> Result<Vec<RunRecord>, StoreError> {
        let mut cache = HashMap::new();
        let mut out = Vec::new();
        for id in self.run_ids()? {
            let r = self.rebuild(&self.run_path(&id), &mut cache)?;
            if filter.matches(&r) {
                out.push(r);
            }
        }
        Ok(out)
    }

    fn payload(
        &self,
        p: Option<StoredPayload>,
        cache: &mut HashMap<String, String>,
    ) -> Result<Option<Payload>, StoreError> {
        Ok(match p {
            None => None,
            Some(StoredPayload::Simulated(s)) => Some(Payload::Simulated(s)),
            Some(StoredPayload::Program { sha256 }) => {
                let source = match cache.get(&sha256) {
                    Some(s) => s.clone(),
                    None => {
                        let s = self.load_program(&sha256)?;
                        cache.insert(sha256, s.clone());
                        s
                    }
                };
                Some(Payload::Program { source })
            }
        })
    }

    fn entry(&self, e: StoredEntry, cache: &mut HashMap<String, String>) -> Result<Entry, StoreError> {
        Ok(Entry {
            generation: e.generation,
            child: e.child,
            call: e.call,
            parent: e.parent,
            island: e.island,
            fitness: e.fitness,
            accepted: e.accepted,
            payload: self.payload(e.payload, cache)?,
            failure: e.failure,
        })
    }

    fn rebuild(&self, path: &Path, cache: &mut HashMap<String, String>) -> Result<RunRecord, StoreError> {
        let log = read_events(path)?;
        let corrupt = |line: usize, message: &str| StoreError::Corrupt {
            path: path.to_path_buf(),
            line,
            message: message.to_string(),
        };
        let mut events = log.events.into_iter();
        let Some(Event::Header(h)) = events.next() else {
            return Err(corrupt(1, "first event is not a header"));
        };
        let mut r = RunRecord {
            run_id: h.run_id,
            protocol: h.protocol,
            task: h.task,
            model_id: h.model_id,
            budget: h.budget,
            seed: h.seed,
            trajectories: Vec::new(),
            calls: Vec::new(),
            best: None,
            complete: false,
            error: None,
            started_unix_ms: h.started_unix_ms,
            wall_ms: 0,
            bandit: None,
            islands: None,
        };
        let mut closed = false;
        for (i, ev) in events.enumerate() {
            let line = i + 2;
            match ev {
                Event::Header(_) => return Err(corrupt(line, "duplicate header")),
                Event::Root { trajectory, entry } => {
                    if trajectory != r.trajectories.len() {
                        return Err(corrupt(line, "trajectories out of order"));
                    }
                    let entry = self.entry(entry, cache)?;
                    r.trajectories.push(Trajectory {
                        running_best: entry.fitness,
                        entries: vec![entry],
                    });
                }
                Event::Call { call, entry } => {
                    let t = r
                        .trajectories
                        .get_mut(call.trajectory)
                        .ok_or_else(|| corrupt(line, "call on unknown trajectory"))?;
                    if call.entry != t.entries.len() {
                        return Err(corrupt(line, "entry index out of order"));
                    }
                    let entry = self.entry(entry, cache)?;
                    if entry.accepted {
                        t.running_best = t.running_best.max(entry.fitness);
                    }
                    t.entries.push(entry);
                    r.calls.push(call);
                }
                Event::Bandit(b) => r.bandit = Some(b),
                Event::Islands(s) => r.islands = Some(s),
                Event::Close {
                    complete,
                    error,
                    best,
                    wall_ms,
                } => {
                    r.complete = complete && !log.truncated;
                    r.error = error;
                    r.best = best;
                    r.wall_ms = wall_ms;
                    closed = true;
                }
            }
        }
        if !closed {
            r.complete = false;
            r.best = crate::engine::best_ref(&r.trajectories);
            if r.error.is_none() {
                r.error = Some(if log.truncated {
                    "run file truncated".into()
                } else {
                    "run file not closed".into()
                });
            }
        }
        Ok(r)
    }
}

/// Writer for one open run file.
pub struct RunWriter {
    run_id: String,
    path: PathBuf,
    file: File,
    closed: bool,
}

impl RunWriter {
    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn append(&mut self, event: &Event) -> Result<(), StoreError> {
        if self.closed {
            return Err(StoreError::Closed(self.run_id.clone()));
        }
        let mut line = serde_json::to_string(event).expect("events serialize");
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(io(&self.path))?;
        if matches!(event, Event::Close { .. }) {
            self.closed = true;
            self.file.sync_data().map_err(io(&self.path))?;
        }
        Ok(())
    }

    pub fn close(
        &mut self,
        complete: bool,
        error: Option<String>,
        best: Option<BestRef>,
        wall_ms: u64,
    ) -> Result<(), StoreError> {
        self.append(&Event::Close {
            complete,
            error,
            best,
            wall_ms,
        })
    }
}

/// Parsed run file. A final line that does not parse (crash mid-write)
/// is dropped and flagged; a bad line elsewhere is corruption.
pub struct EventLog {
    pub events: Vec<Event>,
    pub truncated: bool,
}

pub fn read_events(path: &Path) -> Result<EventLog, StoreError> {
    let file = File::open(path).map_err(io(path))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(io(path))?;
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let mut events = Vec::with_capacity(lines.len());
    let mut truncated = false;
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 {
            let v: serde_json::Value = serde_json::from_str(line).map_err(|e| StoreError::Corrupt {
                path: path.to_path_buf(),
                line: 1,
                message: e.to_string(),
            })?;
            let found = v.get("schema_version").and_then(|s| s.as_u64()).unwrap_or(0) as u32;
            if found > SCHEMA_VERSION {
                return Err(StoreError::SchemaVersion {
                    path: path.to_path_buf(),
                    found,
                });
            }
        }
        match serde_json::from_str::<Event>(line) {
            Ok(ev) => events.push(ev),
            Err(_) if Some(i) == last && i > 0 => truncated = true,
            Err(e) => {
                return Err(StoreError::Corrupt {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(EventLog { events, truncated })
}
