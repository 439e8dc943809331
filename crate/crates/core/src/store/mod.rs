//! Versioned document store with an append-only audit log.
//!
//! Layout of a store root:
//!
//! ```text
//! use_cases/<id>.json     scenarios/<id>.json     assessments/<id>.json
//! jobs/<id>.json          audit.log               store.lock
//! taxonomy/taxonomy.json  rubric/rubric.json      templates/stage{1,2,3}.toml
//! backends.json
//! ```
//!
//! Each document file is an envelope `{"kind", "revision", "document"}`. A write goes
//! temp file, fsync, audit line(s), fsync, rename. The audit line is the commit
//! point: on open, temp files whose audit line made it to disk are rolled forward
//! and everything else is discarded, together with any torn audit line or
//! incomplete batch.

pub mod export;

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, Document, ParseMode};
use crate::gateway::{BackendsFile, PromptTemplate, TemplateSet};
use crate::rubric::{RubricAssessment, RubricDefinition};
use crate::schema::{Scenario, Stage, Timestamp, UseCaseWorksheet};
use crate::taxonomy::{RiskTaxonomy, DEFAULT_TAXONOMY_JSON};

pub use export::{
    export_full, parse_summary, render_summary, summary_rows, ExportFormat, SummaryRow, SUMMARY_HEADERS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    UseCase,
    Scenario,
    Assessment,
    Job,
}

impl Kind {
    pub const ALL: [Kind; 4] = [Kind::UseCase, Kind::Scenario, Kind::Assessment, Kind::Job];

    pub fn dir(self) -> &'static str {
        match self {
            Kind::UseCase => "use_cases",
            Kind::Scenario => "scenarios",
            Kind::Assessment => "assessments",
            Kind::Job => "jobs",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Kind::UseCase => "use_case",
            Kind::Scenario => "scenario",
            Kind::Assessment => "assessment",
            Kind::Job => "job",
        }
    }
}

/// A document type the store can hold.
pub trait Stored: Document + Clone {
    const KIND: Kind;
    fn id(&self) -> &str;
}

impl Stored for UseCaseWorksheet {
    const KIND: Kind = Kind::UseCase;
    fn id(&self) -> &str {
        self.id.as_str()
    }
}

impl Stored for Scenario {
    const KIND: Kind = Kind::Scenario;
    fn id(&self) -> &str {
        self.id.as_str()
    }
}

impl Stored for RubricAssessment {
    const KIND: Kind = Kind::Assessment;
    fn id(&self) -> &str {
        &self.id
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("{kind} not found: {id}")]
    NotFound { kind: &'static str, id: String },
    #[error("revision conflict on {kind} {id}: expected {expected}, current {actual}")]
    Conflict { kind: &'static str, id: String, expected: u64, actual: u64 },
    #[error("invalid document id: {0:?}")]
    InvalidId(String),
    #[error("store at {0} is locked by another writer")]
    Locked(String),
    #[error("{0} is not a store (run init first)")]
    NotAStore(String),
    #[error("{0} already contains a store")]
    AlreadyExists(String),
    #[error("store was opened read-only")]
    ReadOnly,
    #[error("corrupt file {path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error("i/o error on {path}: {detail}")]
    Io { path: String, detail: String },
    #[error("write interrupted at {0:?}; reopen the store to recover")]
    Killed(KillPoint),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> StoreError + '_ {
    move |e| StoreError::Io { path: path.display().to_string(), detail: e.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditAction {
    UseCaseCreated,
    UseCaseUpdated,
    ScenarioCreated,
    ScenarioGenerated,
    ScenarioReviewed,
    ScenarioEdited,
    AssessmentRecorded,
    JobCreated,
    JobUpdated,
    GenerationFailed,
    GenerationRetried,
    StoreRecovered,
}

impl AuditAction {
    /// Whether the action accompanies a document write.
    pub fn is_mutating(self) -> bool {
        !matches!(self, AuditAction::GenerationFailed | AuditAction::GenerationRetried | AuditAction::StoreRecovered)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditEvent {
    pub seq: u64,
    pub actor: String,
    pub action: AuditAction,
    pub subject_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    #[serde(default)]
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub document: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<Batch>,
    pub timestamp: Timestamp,
}

/// Marks events written together; a batch counts only when all `size` lines exist.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Batch {
    pub first_seq: u64,
    pub size: u64,
}

/// What the caller says about a write, for the audit line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditNote {
    pub actor: String,
    pub action: AuditAction,
    pub stage: Option<Stage>,
    pub detail: String,
    pub timestamp: Timestamp,
}

impl AuditNote {
    pub fn new(actor: &str, action: AuditAction, timestamp: Timestamp) -> Self {
        AuditNote { actor: actor.to_string(), action, stage: None, detail: String::new(), timestamp }
    }

    pub fn stage(mut self, stage: Stage) -> Self {
        self.stage = Some(stage);
        self
    }

    pub fn detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

/// Points at which a write can be interrupted, for the crash-safety harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KillPoint {
    DuringTempWrite,
    AfterTempWrite,
    DuringAuditAppend,
    AfterAuditAppend,
    AfterRename,
}

impl KillPoint {
    pub const ALL: [KillPoint; 5] = [
        KillPoint::DuringTempWrite,
        KillPoint::AfterTempWrite,
        KillPoint::DuringAuditAppend,
        KillPoint::AfterAuditAppend,
        KillPoint::AfterRename,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct Versioned<D> {
    pub revision: u64,
    pub doc: D,
}

#[derive(Serialize)]
struct EnvelopeOut<'a, D> {
    kind: Kind,
    revision: u64,
    document: &'a D,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, bound = "D: DeserializeOwned")]
struct EnvelopeIn<D> {
    kind: Kind,
    revision: u64,
    document: D,
}

impl<D: Document> Serialize for EnvelopeIn<D> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        EnvelopeOut { kind: self.kind, revision: self.revision, document: &self.document }.serialize(s)
    }
}

impl<D: Document> Document for EnvelopeIn<D> {
    fn unknown_fields(&self) -> Vec<String> {
        self.document.unknown_fields()
    }
}

fn encode<D: Stored>(doc: &D, revision: u64) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(&EnvelopeOut { kind: D::KIND, revision, document: doc })
        .expect("documents are plain data");
    out.push(b'\n');
    out
}

fn decode<D: Stored>(path: &str, bytes: &[u8]) -> Result<Versioned<D>, StoreError> {
    let env: EnvelopeIn<D> = codec::parse(bytes, ParseMode::Strict)
        .map_err(|e| StoreError::Corrupt { path: path.to_string(), reason: e.to_string() })?;
    if env.kind != D::KIND {
        return Err(StoreError::Corrupt { path: path.to_string(), reason: format!("holds a {}", env.kind.key()) });
    }
    Ok(Versioned { revision: env.revision, doc: env.document })
}

// Only the revision, for conflict checks and recovery.
#[derive(Deserialize)]
struct RevisionOnly {
    revision: u64,
}

fn revision_of(bytes: &[u8]) -> Option<u64> {
    serde_json::from_slice::<RevisionOnly>(bytes).ok().map(|r| r.revision)
}

pub fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 200
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn doc_path(kind: Kind, id: &str) -> String {
    format!("{}/{id}.json", kind.dir())
}

const AUDIT: &str = "audit.log";
const LOCK: &str = "store.lock";
const TAXONOMY: &str = "taxonomy/taxonomy.json";
const RUBRIC: &str = "rubric/rubric.json";
const BACKENDS: &str = "backends.json";

#[derive(Debug)]
enum Backing {
    Disk { root: PathBuf, _lock: Option<File> },
    Memory(Mutex<BTreeMap<String, Vec<u8>>>),
}

#[derive(Debug, Default)]
struct WriteState {
    next_seq: u64,
    kill: Option<KillPoint>,
    killed: bool,
}

/// A document store. Writes are serialized through one handle; any number of
/// threads may read.
#[derive(Debug)]
pub struct Store {
    backing: Backing,
    writable: bool,
    state: Mutex<WriteState>,
}

/// One document write within [`Store::put_many`].
pub struct Put<'a, D> {
    pub doc: &'a D,
    pub expected_revision: u64,
    pub note: AuditNote,
}

impl Store {
    /// Creates the layout and default configuration files under `root`.
    pub fn init(root: impl AsRef<Path>) -> Result<Store, StoreError> {
        let root = root.as_ref();
        if root.join(AUDIT).exists() {
            return Err(StoreError::AlreadyExists(root.display().to_string()));
        }
        for dir in Kind::ALL.iter().map(|k| k.dir()).chain(["taxonomy", "rubric", "templates"]) {
            let p = root.join(dir);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        let mut files: Vec<(String, Vec<u8>)> = vec![
            (TAXONOMY.into(), DEFAULT_TAXONOMY_JSON.as_bytes().to_vec()),
            (RUBRIC.into(), crate::rubric::DEFAULT_RUBRIC_JSON.as_bytes().to_vec()),
            (BACKENDS.into(), {
                let mut b = serde_json::to_vec_pretty(&BackendsFile::default_file()).expect("plain data");
                b.push(b'\n');
                b
            }),
            (AUDIT.into(), Vec::new()),
        ];
        for stage in Stage::ALL {
            files.push((
                format!("templates/{}", TemplateSet::file_name(stage)),
                PromptTemplate::builtin_source(stage).as_bytes().to_vec(),
            ));
        }
        for (rel, bytes) in files {
            let p = root.join(rel);
            fs::write(&p, bytes).map_err(io_err(&p))?;
        }
        Store::open(root)
    }

    /// Opens an existing store for writing, taking the lock and running recovery.
    pub fn open(root: impl AsRef<Path>) -> Result<Store, StoreError> {
        let root = root.as_ref().to_path_buf();
        if !root.join(AUDIT).exists() {
            return Err(StoreError::NotAStore(root.display().to_string()));
        }
        let lock_path = root.join(LOCK);
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(io_err(&lock_path))?;
        lock.try_lock().map_err(|_| StoreError::Locked(root.display().to_string()))?;
        let store = Store {
            backing: Backing::Disk { root, _lock: Some(lock) },
            writable: true,
            state: Mutex::new(WriteState::default()),
        };
        store.recover()?;
        let next = store.audit_events()?.last().map_or(0, |e| e.seq + 1);
        store.state.lock().unwrap().next_seq = next;
        Ok(store)
    }

    /// Opens an existing store without the writer lock. Writes are refused.
    pub fn open_read_only(root: impl AsRef<Path>) -> Result<Store, StoreError> {
        let root = root.as_ref().to_path_buf();
        if !root.join(AUDIT).exists() {
            return Err(StoreError::NotAStore(root.display().to_string()));
        }
        Ok(Store { backing: Backing::Disk { root, _lock: None }, writable: false, state: Mutex::default() })
    }

    /// A store held entirely in memory with the default configuration.
    pub fn in_memory() -> Store {
        Store { backing: Backing::Memory(Mutex::default()), writable: true, state: Mutex::default() }
    }

    pub fn root(&self) -> Option<&Path> {
        match &self.backing {
            Backing::Disk { root, .. } => Some(root),
            Backing::Memory(_) => None,
        }
    }

    /// Arms a kill point for the next write.
    pub fn inject_kill(&self, point: Option<KillPoint>) {
        self.state.lock().unwrap().kill = point;
    }

    fn read_raw(&self, rel: &str) -> Result<Option<Vec<u8>>, StoreError> {
        match &self.backing {
            Backing::Disk { root, .. } => {
                let p = root.join(rel);
                match fs::read(&p) {
                    Ok(b) => Ok(Some(b)),
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                    Err(e) => Err(io_err(&p)(e)),
                }
            }
            Backing::Memory(m) => Ok(m.lock().unwrap().get(rel).cloned()),
        }
    }

    fn list_raw(&self, dir: &str) -> Result<Vec<String>, StoreError> {
        let mut ids: Vec<String> = match &self.backing {
            Backing::Disk { root, .. } => {
                let p = root.join(dir);
                match fs::read_dir(&p) {
                    Ok(rd) => rd
                        .filter_map(Result::ok)
                        .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix(".json")).map(String::from))
                        .collect(),
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
                    Err(e) => return Err(io_err(&p)(e)),
                }
            }
            Backing::Memory(m) => {
                let prefix = format!("{dir}/");
                m.lock()
                    .unwrap()
                    .keys()
                    .filter_map(|k| k.strip_prefix(&prefix).and_then(|n| n.strip_suffix(".json")).map(String::from))
                    .collect()
            }
        };
        ids.sort();
        Ok(ids)
    }

    pub fn get<D: Stored>(&self, id: &str) -> Result<Versioned<D>, StoreError> {
        if !valid_id(id) {
            return Err(StoreError::NotFound { kind: D::KIND.key(), id: id.to_string() });
        }
        let rel = doc_path(D::KIND, id);
        match self.read_raw(&rel)? {
            Some(bytes) => decode(&rel, &bytes),
            None => Err(StoreError::NotFound { kind: D::KIND.key(), id: id.to_string() }),
        }
    }

    pub fn exists<D: Stored>(&self, id: &str) -> Result<bool, StoreError> {
        Ok(valid_id(id) && self.read_raw(&doc_path(D::KIND, id))?.is_some())
    }

    /// Current revision, 0 when the document does not exist.
    pub fn revision<D: Stored>(&self, id: &str) -> Result<u64, StoreError> {
        let rel = doc_path(D::KIND, id);
        Ok(self.read_raw(&rel)?.and_then(|b| revision_of(&b)).unwrap_or(0))
    }

    /// Sorted ids of every stored document of a kind.
    pub fn ids(&self, kind: Kind) -> Result<Vec<String>, StoreError> {
        self.list_raw(kind.dir())
    }

    pub fn all<D: Stored>(&self) -> Result<Vec<D>, StoreError> {
        self.ids(D::KIND)?.iter().map(|id| self.get::<D>(id).map(|v| v.doc)).collect()
    }

    pub fn scenarios_for(&self, use_case_id: &str) -> Result<Vec<Scenario>, StoreError> {
        Ok(self.all::<Scenario>()?.into_iter().filter(|s| s.use_case_id.as_str() == use_case_id).collect())
    }

    /// Ids of the scenarios that belong to a use case.
    pub fn list_scenarios(&self, use_case_id: &str) -> Result<Vec<String>, StoreError> {
        Ok(self.scenarios_for(use_case_id)?.into_iter().map(|s| s.id.0).collect())
    }

    pub fn assessments_for(&self, scenario_id: &str) -> Result<Vec<RubricAssessment>, StoreError> {
        let mut list: Vec<RubricAssessment> =
            self.all::<RubricAssessment>()?.into_iter().filter(|a| a.scenario_id.as_str() == scenario_id).collect();
        list.sort_by(|a, b| (a.timestamp, &a.id).cmp(&(b.timestamp, &b.id)));
        Ok(list)
    }

    /// Writes one document. `expected_revision` is 0 for a new document.
    pub fn put<D: Stored>(&self, doc: &D, expected_revision: u64, note: AuditNote) -> Result<u64, StoreError> {
        Ok(self.put_many(vec![Put { doc, expected_revision, note }])?[0])
    }

    /// Writes several documents of one kind all-or-nothing.
    pub fn put_many<D: Stored>(&self, puts: Vec<Put<'_, D>>) -> Result<Vec<u64>, StoreError> {
        if !self.writable {
            return Err(StoreError::ReadOnly);
        }
        let mut state = self.state.lock().unwrap();
        if state.killed {
            return Err(StoreError::Killed(state.kill.unwrap_or(KillPoint::AfterRename)));
        }
        let mut staged = Vec::with_capacity(puts.len());
        let mut seen = std::collections::BTreeSet::new();
        for p in &puts {
            let id = p.doc.id();
            if !valid_id(id) || !seen.insert(id.to_string()) {
                return Err(StoreError::InvalidId(id.to_string()));
            }
            let rel = doc_path(D::KIND, id);
            let actual = self.read_raw(&rel)?.map(|b| revision_of(&b).unwrap_or(0)).unwrap_or(0);
            if actual != p.expected_revision {
                return Err(StoreError::Conflict {
                    kind: D::KIND.key(),
                    id: id.to_string(),
                    expected: p.expected_revision,
                    actual,
                });
            }
            let revision = actual + 1;
            staged.push((rel, revision, encode(p.doc, revision)));
        }
        if staged.is_empty() {
            return Ok(Vec::new());
        }
        let first_seq = state.next_seq;
        let batch = (puts.len() > 1).then_some(Batch { first_seq, size: puts.len() as u64 });
        let mut audit = Vec::new();
        for (i, (p, (rel, revision, _))) in puts.iter().zip(&staged).enumerate() {
            let event = AuditEvent {
                seq: first_seq + i as u64,
                actor: p.note.actor.clone(),
                action: p.note.action,
                subject_id: p.doc.id().to_string(),
                stage: p.note.stage,
                detail: p.note.detail.clone(),
                revision: Some(*revision),
                document: Some(rel.clone()),
                batch: batch.clone(),
                timestamp: p.note.timestamp,
            };
            audit.extend(serde_json::to_vec(&event).expect("plain data"));
            audit.push(b'\n');
        }
        let revisions = staged.iter().map(|(_, r, _)| *r).collect();
        match &self.backing {
            Backing::Memory(m) => {
                let mut m = m.lock().unwrap();
                m.entry(AUDIT.into()).or_default().extend(audit);
                for (rel, _, bytes) in staged {
                    m.insert(rel, bytes);
                }
            }
            Backing::Disk { root, .. } => {
                if let Err(e) = self.write_disk(root, &mut state, &staged, &audit) {
                    if matches!(e, StoreError::Killed(_)) {
                        state.killed = true;
                    }
                    return Err(e);
                }
            }
        }
        state.next_seq = first_seq + puts.len() as u64;
        Ok(revisions)
    }

    fn write_disk(
        &self,
        root: &Path,
        state: &mut WriteState,
        staged: &[(String, u64, Vec<u8>)],
        audit: &[u8],
    ) -> Result<(), StoreError> {
        let kill = state.kill;
        let hit = |p: KillPoint| if kill == Some(p) { Err(StoreError::Killed(p)) } else { Ok(()) };
        let mut temps = Vec::new();
        for (rel, revision, bytes) in staged {
            let tmp = root.join(format!("{rel}.r{revision}.tmp"));
            let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
            if kill == Some(KillPoint::DuringTempWrite) {
                f.write_all(&bytes[..bytes.len() / 2]).map_err(io_err(&tmp))?;
                return hit(KillPoint::DuringTempWrite);
            }
            f.write_all(bytes).map_err(io_err(&tmp))?;
            f.sync_all().map_err(io_err(&tmp))?;
            temps.push((tmp, root.join(rel)));
        }
        hit(KillPoint::AfterTempWrite)?;
        let audit_path = root.join(AUDIT);
        let mut log = OpenOptions::new().append(true).open(&audit_path).map_err(io_err(&audit_path))?;
        if kill == Some(KillPoint::DuringAuditAppend) {
            log.write_all(&audit[..audit.len() / 2]).map_err(io_err(&audit_path))?;
            return hit(KillPoint::DuringAuditAppend);
        }
        log.write_all(audit).map_err(io_err(&audit_path))?;
        log.sync_all().map_err(io_err(&audit_path))?;
        hit(KillPoint::AfterAuditAppend)?;
        for (tmp, target) in &temps {
            fs::rename(tmp, target).map_err(io_err(target))?;
        }
        sync_dirs(temps.iter().filter_map(|(_, t)| t.parent()));
        hit(KillPoint::AfterRename)
    }

    /// Appends an event that does not accompany a document write.
    pub fn record_event(&self, subject_id: &str, note: AuditNote) -> Result<u64, StoreError> {
        if !self.writable {
            return Err(StoreError::ReadOnly);
        }
        let mut state = self.state.lock().unwrap();
        if state.killed {
            return Err(StoreError::Killed(state.kill.unwrap_or(KillPoint::AfterRename)));
        }
        let seq = state.next_seq;
        let event = AuditEvent {
            seq,
            actor: note.actor,
            action: note.action,
            subject_id: subject_id.to_string(),
            stage: note.stage,
            detail: note.detail,
            revision: None,
            document: None,
            batch: None,
            timestamp: note.timestamp,
        };
        let mut line = serde_json::to_vec(&event).expect("plain data");
        line.push(b'\n');
        match &self.backing {
            Backing::Memory(m) => m.lock().unwrap().entry(AUDIT.into()).or_default().extend(line),
            Backing::Disk { root, .. } => {
                let p = root.join(AUDIT);
                let mut log = OpenOptions::new().append(true).open(&p).map_err(io_err(&p))?;
                log.write_all(&line).map_err(io_err(&p))?;
                log.sync_all().map_err(io_err(&p))?;
            }
        }
        state.next_seq = seq + 1;
        Ok(seq)
    }

    /// Every complete audit line, in order.
    pub fn audit_events(&self) -> Result<Vec<AuditEvent>, StoreError> {
        let bytes = self.read_raw(AUDIT)?.unwrap_or_default();
        let complete = match bytes.iter().rposition(|b| *b == b'\n') {
            Some(i) => &bytes[..=i],
            None => return Ok(Vec::new()),
        };
        complete
            .split(|b| *b == b'\n')
            .filter(|l| !l.is_empty())
            .map(|l| {
                serde_json::from_slice(l)
                    .map_err(|e| StoreError::Corrupt { path: AUDIT.into(), reason: e.to_string() })
            })
            .collect()
    }

    pub fn audit_for(&self, subject_id: &str) -> Result<Vec<AuditEvent>, StoreError> {
        Ok(self.audit_events()?.into_iter().filter(|e| e.subject_id == subject_id).collect())
    }

    fn recover(&self) -> Result<(), StoreError> {
        let Backing::Disk { root, .. } = &self.backing else { return Ok(()) };
        let audit_path = root.join(AUDIT);
        let bytes = fs::read(&audit_path).map_err(io_err(&audit_path))?;
        // drop a torn trailing line
        let mut keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
        let mut events: Vec<(usize, AuditEvent)> = Vec::new();
        let mut start = 0;
        for line in bytes[..keep].split_inclusive(|b| *b == b'\n') {
            let body = &line[..line.len() - 1];
            match serde_json::from_slice::<AuditEvent>(body) {
                Ok(e) => events.push((start, e)),
                Err(_) => {
                    keep = start;
                    break;
                }
            }
            start += line.len();
        }
        events.retain(|(offset, _)| *offset < keep);
        // drop an incomplete trailing batch
        if let Some((_, last)) = events.last() {
            if let Some(b) = last.batch.clone() {
                let present = events.iter().filter(|(_, e)| e.batch.as_ref() == Some(&b)).count() as u64;
                if present < b.size {
                    let cut = events.iter().position(|(_, e)| e.batch.as_ref() == Some(&b)).unwrap();
                    keep = events[cut].0;
                    events.truncate(cut);
                }
            }
        }
        let mut repaired = false;
        if keep < bytes.len() {
            let f = OpenOptions::new().write(true).open(&audit_path).map_err(io_err(&audit_path))?;
            f.set_len(keep as u64).map_err(io_err(&audit_path))?;
            f.sync_all().map_err(io_err(&audit_path))?;
            repaired = true;
        }
        let committed: std::collections::BTreeSet<(String, u64)> = events
            .iter()
            .filter_map(|(_, e)| Some((e.document.clone()?, e.revision?)))
            .collect();
        for kind in Kind::ALL {
            let dir = root.join(kind.dir());
            let Ok(rd) = fs::read_dir(&dir) else { continue };
            for entry in rd.filter_map(Result::ok) {
                let name = entry.file_name().to_string_lossy().to_string();
                let Some(stem) = name.strip_suffix(".tmp") else { continue };
                let tmp = entry.path();
                let forward = stem.rsplit_once(".r").and_then(|(file, rev)| {
                    let rev: u64 = rev.parse().ok()?;
                    let rel = format!("{}/{file}", kind.dir());
                    let current = fs::read(root.join(&rel)).ok().and_then(|b| revision_of(&b)).unwrap_or(0);
                    (committed.contains(&(rel.clone(), rev)) && current < rev).then_some(rel)
                });
                match forward {
                    Some(rel) => fs::rename(&tmp, root.join(&rel)).map_err(io_err(&tmp))?,
                    None => fs::remove_file(&tmp).map_err(io_err(&tmp))?,
                }
                repaired = true;
            }
        }
        if repaired {
            sync_dirs(Kind::ALL.iter().map(|k| root.join(k.dir())).collect::<Vec<_>>().iter().map(PathBuf::as_path));
            tracing::warn!(root = %root.display(), "recovered store after interrupted write");
        }
        Ok(())
    }

    pub fn taxonomy(&self) -> Result<RiskTaxonomy, StoreError> {
        match self.read_raw(TAXONOMY)? {
            Some(b) => RiskTaxonomy::from_json(&b)
                .map_err(|e| StoreError::Corrupt { path: TAXONOMY.into(), reason: e.to_string() }),
            None => Ok(RiskTaxonomy::default_taxonomy()),
        }
    }

    pub fn rubric(&self) -> Result<RubricDefinition, StoreError> {
        match self.read_raw(RUBRIC)? {
            Some(b) => RubricDefinition::from_json(&b)
                .map_err(|e| StoreError::Corrupt { path: RUBRIC.into(), reason: e.to_string() }),
            None => Ok(RubricDefinition::default_rubric()),
        }
    }

    pub fn templates(&self) -> TemplateSet {
        match &self.backing {
            Backing::Disk { root, .. } => TemplateSet::Dir(root.join("templates")),
            Backing::Memory(_) => TemplateSet::builtin(),
        }
    }

    pub fn backends(&self) -> Result<BackendsFile, StoreError> {
        match self.read_raw(BACKENDS)? {
            Some(b) => serde_json::from_slice(&b)
                .map_err(|e| StoreError::Corrupt { path: BACKENDS.into(), reason: e.to_string() }),
            None => Ok(BackendsFile::default_file()),
        }
    }

    /// Byte snapshot of every file except the lock, for side-effect checks.
    pub fn snapshot(&self) -> BTreeMap<String, Vec<u8>> {
        match &self.backing {
            Backing::Memory(m) => m.lock().unwrap().clone(),
            Backing::Disk { root, .. } => {
                let mut out = BTreeMap::new();
                let mut stack = vec![root.clone()];
                while let Some(dir) = stack.pop() {
                    let Ok(rd) = fs::read_dir(&dir) else { continue };
                    for e in rd.filter_map(Result::ok) {
                        let p = e.path();
                        if p.is_dir() {
                            stack.push(p);
                        } else if p.file_name().is_some_and(|n| n != LOCK) {
                            let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                            out.insert(rel, fs::read(&p).unwrap_or_default());
                        }
                    }
                }
                out
            }
        }
    }

    pub fn parse_document<D: Stored>(bytes: &[u8], mode: ParseMode) -> Result<D, crate::codec::ParseError> {
        codec::parse(bytes, mode)
    }
}

fn sync_dirs<'a>(dirs: impl Iterator<Item = &'a Path>) {
    let mut done = std::collections::BTreeSet::new();
    for d in dirs {
        if done.insert(d.to_path_buf()) {
            if let Ok(f) = File::open(d) {
                let _ = f.sync_all();
            }
        }
    }
}
