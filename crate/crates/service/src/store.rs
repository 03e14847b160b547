//! Sessions, their event logs and replay.
//!
//! Every mutation runs against a copy of the session's loop. The event is
//! appended to the log only once the mutation succeeds, and the copy replaces
//! the live loop only once the event is on disk, so the log always replays to
//! the served state.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use rapid_core::dsl::{parse_rule, RuleDiff};
use rapid_core::labeling::LabelingLoop;
use rapid_core::select::StrategyRegistry;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Mutex;

use crate::error::ApiError;
use crate::model::{batch_view, session_state, BatchView, CreateSession, Event, SessionState};

#[derive(Debug, Serialize, Deserialize)]
struct LogLine {
    seq: u64,
    event: Event,
}

#[derive(Debug)]
struct EventLog {
    path: PathBuf,
    file: File,
    next: u64,
}

impl EventLog {
    fn create(path: PathBuf) -> std::io::Result<Self> {
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)?;
        Ok(EventLog {
            path,
            file,
            next: 0,
        })
    }

    fn reopen(path: PathBuf, next: u64) -> std::io::Result<Self> {
        let file = OpenOptions::new().append(true).open(&path)?;
        Ok(EventLog { path, file, next })
    }

    fn append(&mut self, event: &Event) -> Result<(), ApiError> {
        let line = serde_json::to_string(&LogLine {
            seq: self.next,
            event: event.clone(),
        })
        .expect("events serialize");
        let write = |f: &mut File| -> std::io::Result<()> {
            f.write_all(line.as_bytes())?;
            f.write_all(b"\n")?;
            f.sync_data()
        };
        write(&mut self.file).map_err(|e| {
            ApiError::internal(
                "storage",
                format!("appending to {}: {e}", self.path.display()),
            )
        })?;
        self.next += 1;
        Ok(())
    }
}

/// What a successful mutation returns besides the new state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub diff: Option<RuleDiff>,
}

fn apply(lp: &mut LabelingLoop, event: &Event) -> Result<Outcome, ApiError> {
    match event {
        Event::Created { .. } => Err(ApiError::internal("corrupt_log", "session created twice")),
        Event::Corrections { corrections } => {
            lp.submit_corrections(corrections)?;
            Ok(Outcome::default())
        }
        Event::Rule { label, dsl } => {
            if !lp.config().mode.edits() {
                return Err(ApiError::conflict(
                    "edits_disabled",
                    "this session's feedback mode does not accept rule edits",
                ));
            }
            let rule =
                parse_rule(dsl, lp.dataset().vocabulary()).map_err(|e| ApiError::parse(&e))?;
            if &rule.label != label {
                return Err(ApiError::bad_request(
                    "label_mismatch",
                    format!("rule text defines {:?}, not {label:?}", rule.label),
                )
                .with_detail(json!({ "expected": label, "found": rule.label })));
            }
            let diff = lp.submit_rule(rule)?;
            Ok(Outcome { diff: Some(diff) })
        }
        Event::Step => {
            lp.step()?;
            Ok(Outcome::default())
        }
    }
}

fn start(id: &str, request: &CreateSession) -> Result<LabelingLoop, ApiError> {
    let data = request.data.load(request.config.seed)?;
    let registry = StrategyRegistry::default();
    let lp = match &request.bootstrap {
        Some(ids) => LabelingLoop::with_bootstrap(data, request.config.clone(), registry, ids)?,
        None => LabelingLoop::new(data, request.config.clone(), registry)?,
    };
    tracing::debug!(session = id, "session started");
    Ok(lp)
}

#[derive(Debug)]
struct Session {
    id: String,
    lp: LabelingLoop,
    log: Option<EventLog>,
}

/// A read-only view refreshed after every mutation.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub state: SessionState,
    pub batch: Option<BatchView>,
}

impl Snapshot {
    fn of(session: &Session) -> Self {
        Snapshot {
            state: session_state(&session.id, &session.lp),
            batch: batch_view(&session.lp),
        }
    }
}

#[derive(Debug)]
struct Entry {
    session: Arc<Mutex<Session>>,
    snapshot: RwLock<Arc<Snapshot>>,
}

impl Entry {
    fn new(session: Session) -> Arc<Self> {
        let snapshot = RwLock::new(Arc::new(Snapshot::of(&session)));
        Arc::new(Entry {
            session: Arc::new(Mutex::new(session)),
            snapshot,
        })
    }

    fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("snapshot lock").clone()
    }
}

/// All live sessions, optionally persisted under one directory.
#[derive(Debug, Default)]
pub struct SessionStore {
    dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<Entry>>>,
}

/// A session that could not be restored from its log.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayFailure {
    pub path: PathBuf,
    pub message: String,
}

impl SessionStore {
    /// Sessions live only in memory.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Persists sessions under `dir`, replaying any logs already there.
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<(Self, Vec<ReplayFailure>)> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        let mut sessions = HashMap::new();
        let mut failures = Vec::new();
        for path in paths {
            match replay(&path) {
                Ok(session) => {
                    tracing::info!(session = %session.id, events = session.log.as_ref().map_or(0, |l| l.next), "replayed");
                    sessions.insert(session.id.clone(), Entry::new(session));
                }
                Err(message) => {
                    tracing::warn!(path = %path.display(), %message, "skipping session log");
                    failures.push(ReplayFailure { path, message });
                }
            }
        }
        let store = SessionStore {
            dir: Some(dir),
            sessions: RwLock::new(sessions),
        };
        Ok((store, failures))
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .sessions
            .read()
            .expect("session map")
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    fn entry(&self, id: &str) -> Result<Arc<Entry>, ApiError> {
        self.sessions
            .read()
            .expect("session map")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_session(id))
    }

    pub fn snapshot(&self, id: &str) -> Result<Arc<Snapshot>, ApiError> {
        Ok(self.entry(id)?.snapshot())
    }

    /// Builds the session, learning its first rules; blocking.
    pub fn create(&self, request: CreateSession) -> Result<Arc<Snapshot>, ApiError> {
        let id = uuid::Uuid::new_v4().to_string();
        let lp = start(&id, &request)?;
        let log = match &self.dir {
            Some(dir) => {
                let mut log = EventLog::create(dir.join(format!("{id}.jsonl")))
                    .map_err(|e| ApiError::internal("storage", e.to_string()))?;
                log.append(&Event::Created {
                    id: id.clone(),
                    request,
                })?;
                Some(log)
            }
            None => None,
        };
        let entry = Entry::new(Session {
            id: id.clone(),
            lp,
            log,
        });
        let snapshot = entry.snapshot();
        self.sessions
            .write()
            .expect("session map")
            .insert(id, entry);
        Ok(snapshot)
    }

    /// Applies one event under the session's lock; blocking work runs off the
    /// async executor.
    pub async fn mutate(
        &self,
        id: &str,
        event: Event,
    ) -> Result<(Arc<Snapshot>, Outcome), ApiError> {
        let entry = self.entry(id)?;
        let guard = entry.session.clone().lock_owned().await;
        let task = tokio::task::spawn_blocking(move || {
            let mut guard = guard;
            let session = &mut *guard;
            let mut next = session.lp.clone();
            let outcome = apply(&mut next, &event)?;
            if let Some(log) = session.log.as_mut() {
                log.append(&event)?;
            }
            session.lp = next;
            let snapshot = Arc::new(Snapshot::of(session));
            *entry.snapshot.write().expect("snapshot lock") = snapshot.clone();
            Ok((snapshot, outcome))
        });
        task.await
            .map_err(|e| ApiError::internal("worker_failed", e.to_string()))?
    }
}

fn replay(path: &Path) -> Result<Session, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let mut parsed = Vec::new();
    let mut valid = 0;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        match serde_json::from_str::<LogLine>(line.trim_end()) {
            Ok(l) if line.ends_with('\n') => {
                parsed.push(l);
                valid += line.len();
            }
            // A torn final write is dropped; the client never saw it succeed.
            _ if valid + line.len() == text.len() => {
                tracing::warn!(path = %path.display(), "dropping torn final event");
                fs::write(path, &text[..valid]).map_err(|e| e.to_string())?;
                break;
            }
            Ok(_) => unreachable!("only the final line can lack a newline"),
            Err(e) => return Err(format!("line {}: {e}", i + 1)),
        }
    }
    let mut events = parsed.into_iter();
    let Some(LogLine {
        event: Event::Created { id, request },
        ..
    }) = events.next()
    else {
        return Err("log does not start with a created event".into());
    };
    let mut lp = start(&id, &request).map_err(|e| e.body.message)?;
    let mut next = 1;
    for line in events {
        if line.seq != next {
            return Err(format!("expected event {next}, found {}", line.seq));
        }
        apply(&mut lp, &line.event)
            .map_err(|e| format!("event {}: {}", line.seq, e.body.message))?;
        next += 1;
    }
    let log = EventLog::reopen(path.to_path_buf(), next).map_err(|e| e.to_string())?;
    Ok(Session {
        id,
        lp,
        log: Some(log),
    })
}

/// The events of one session log, for inspection.
pub fn read_log(path: &Path) -> std::io::Result<Vec<Event>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str::<LogLine>(l)
                .map(|l| l.event)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
        })
        .collect()
}
