//! Stage-ordered scenario expansion with human review gates.
//!
//! Stage 1 drafts titles and descriptions for a use case, stage 2 fills the six
//! element groups of one approved scenario, stage 3 writes its narrative and
//! evaluation objective. Every generated stage lands in `PendingReview`; nothing
//! advances without a [`ReviewDecision`].

mod clock;
mod job;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{
    parse_stage1, parse_stage2, parse_stage3, render_prompt, BackendRegistry, GatewayError, GenerationRequest,
    GenerationResponse, MalformedOutput, PromptContext, RenderError,
};
use crate::rubric::{assess, HumanInput, RubricAssessment, RubricError};
use crate::schema::{
    check_description, check_title, diff_payloads, validate_scenario, validate_worksheet, FieldChange,
    ReviewDecision, RevisionOrigin, Rule, Scenario, ScenarioId, Stage, StagePayload, StageState, Timestamp,
    UseCaseId, UseCaseWorksheet, ValidationReport, Verdict,
};
use crate::store::{AuditAction, AuditNote, Kind, Put, Store, StoreError, Versioned};
use crate::taxonomy::{coverage_report, CoverageReport};

pub use clock::{Clock, StepClock, SystemClock};
pub use job::{ExpansionJob, JobFailure, JobStatus};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Generation attempts per expansion before the job fails.
    pub max_retries: u32,
    pub default_target_count: u32,
    /// Base seed passed to backends; retries add the attempt number.
    pub seed: Option<u64>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        // 107 scenarios over 6 use cases, rounded up
        EngineConfig { max_retries: 3, default_target_count: 18, seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("{kind} not found: {id}")]
    NotFound { kind: String, id: String },
    #[error("{0}")]
    InvalidRequest(String),
    #[error("use case worksheet is invalid: {0}")]
    WorksheetInvalid(ValidationReport),
    #[error("validation failed: {0}")]
    Validation(ValidationReport),
    #[error("stage order violation on {scenario_id} {stage}: {reason}")]
    StageOrder { scenario_id: String, stage: Stage, reason: String },
    #[error("{stage} of {scenario_id} is {state}, not pending_review")]
    ReviewState { scenario_id: String, stage: Stage, state: String },
    #[error("generation failed for job {job_id} after {attempts} attempt(s): {reason}")]
    Generation { job_id: String, attempts: u32, reason: String, malformed: Option<Box<MalformedOutput>> },
    #[error("backend error: {0}")]
    Backend(GatewayError),
    #[error("{0}")]
    Conflict(StoreError),
    #[error("store error: {0}")]
    Store(StoreError),
    #[error("template error: {0}")]
    Template(RenderError),
    #[error("rubric error: {0}")]
    Rubric(RubricError),
}

impl PipelineError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::NotFound { .. } => "not_found",
            PipelineError::InvalidRequest(_) => "invalid_request",
            PipelineError::WorksheetInvalid(_) => "worksheet_invalid",
            PipelineError::Validation(_) => "validation_failed",
            PipelineError::StageOrder { .. } => "stage_order",
            PipelineError::ReviewState { .. } => "review_state",
            PipelineError::Generation { .. } => "generation_failed",
            PipelineError::Backend(GatewayError::UnknownBackend(_)) => "unknown_backend",
            PipelineError::Backend(_) => "backend_error",
            PipelineError::Conflict(_) => "conflict",
            PipelineError::Store(_) => "store_error",
            PipelineError::Template(_) => "template_error",
            PipelineError::Rubric(RubricError::ScoreOutOfRange { .. } | RubricError::UnknownCategory(_)) => {
                "invalid_request"
            }
            PipelineError::Rubric(_) => "rubric_error",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.code() {
            "not_found" | "invalid_request" | "worksheet_invalid" | "validation_failed" => 2,
            "stage_order" | "review_state" => 3,
            "generation_failed" | "unknown_backend" | "backend_error" => 4,
            "conflict" => 5,
            _ => 1,
        }
    }

    pub fn findings(&self) -> Option<&ValidationReport> {
        match self {
            PipelineError::WorksheetInvalid(r) | PipelineError::Validation(r) => Some(r),
            _ => None,
        }
    }
}

impl From<StoreError> for PipelineError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound { kind, id } => PipelineError::NotFound { kind: kind.to_string(), id },
            StoreError::Conflict { .. } => PipelineError::Conflict(e),
            other => PipelineError::Store(other),
        }
    }
}

impl From<RenderError> for PipelineError {
    fn from(e: RenderError) -> Self {
        PipelineError::Template(e)
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// Per-stage counts of scenarios in each state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusSummary {
    pub use_case_id: UseCaseId,
    pub scenario_count: usize,
    pub stages: BTreeMap<Stage, BTreeMap<StageState, usize>>,
}

impl StatusSummary {
    pub fn count(&self, stage: Stage, state: StageState) -> usize {
        self.stages.get(&stage).and_then(|m| m.get(&state)).copied().unwrap_or(0)
    }

    /// Recounts from scenarios; the engine and tests share this definition.
    pub fn tally(use_case_id: UseCaseId, scenarios: &[Scenario]) -> Self {
        let mut stages: BTreeMap<Stage, BTreeMap<StageState, usize>> = Stage::ALL
            .iter()
            .map(|st| (*st, StageState::ALL.iter().map(|s| (*s, 0)).collect()))
            .collect();
        for s in scenarios {
            for stage in Stage::ALL {
                *stages.get_mut(&stage).unwrap().get_mut(&s.state(stage)).unwrap() += 1;
            }
        }
        StatusSummary { use_case_id, scenario_count: scenarios.len(), stages }
    }
}

/// A scenario stage waiting for a reviewer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingReview {
    pub scenario_id: ScenarioId,
    pub use_case_id: UseCaseId,
    pub stage: Stage,
    pub title: String,
    pub since: Timestamp,
    pub revision: u64,
}

/// What to expand, before a job exists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandRequest {
    pub stage: Stage,
    #[serde(default)]
    pub use_case_id: Option<UseCaseId>,
    #[serde(default)]
    pub scenario_id: Option<ScenarioId>,
    #[serde(default)]
    pub target_count: Option<u32>,
    pub backend_id: String,
    #[serde(default)]
    pub actor: String,
}

impl ExpandRequest {
    pub fn stage1(use_case_id: &str, target_count: u32, backend_id: &str) -> Self {
        ExpandRequest {
            stage: Stage::Stage1,
            use_case_id: Some(use_case_id.into()),
            scenario_id: None,
            target_count: Some(target_count),
            backend_id: backend_id.into(),
            actor: String::new(),
        }
    }

    pub fn scenario(stage: Stage, scenario_id: &str, backend_id: &str) -> Self {
        ExpandRequest {
            stage,
            use_case_id: None,
            scenario_id: Some(scenario_id.into()),
            target_count: None,
            backend_id: backend_id.into(),
            actor: String::new(),
        }
    }

    pub fn by(mut self, actor: &str) -> Self {
        self.actor = actor.into();
        self
    }
}

#[derive(Default)]
struct Locks {
    map: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Locks {
    fn get(&self, key: String) -> Arc<Mutex<()>> {
        self.map.lock().unwrap().entry(key).or_default().clone()
    }
}

/// The expansion engine. Mutations are serialized per scenario (and per use case
/// for anything touching titles); reads go straight to the store.
pub struct Engine {
    store: Arc<Store>,
    registry: BackendRegistry,
    config: EngineConfig,
    clock: Arc<dyn Clock>,
    locks: Locks,
    job_seq: Mutex<Option<u64>>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("registry", &self.registry).field("config", &self.config).finish()
    }
}

fn stage1_transition(s: &mut Scenario, stage: Stage) {
    if s.state(stage) == StageState::ChangesRequested || s.state(stage) == StageState::NotStarted {
        s.stage_states.insert(stage, StageState::Drafted);
    }
    debug_assert!(s.state(stage).can_transition_to(StageState::PendingReview));
    s.stage_states.insert(stage, StageState::PendingReview);
}

fn regeneration_note(feedback: Option<&String>, attempt: u32) -> Option<String> {
    match feedback.map(|f| f.trim()).filter(|f| !f.is_empty()) {
        Some(f) => Some(f.to_string()),
        None if attempt > 1 => Some(format!("Regeneration attempt {attempt}.")),
        None => None,
    }
}

fn stage_order(s: &Scenario, stage: Stage, reason: impl Into<String>) -> PipelineError {
    PipelineError::StageOrder { scenario_id: s.id.to_string(), stage, reason: reason.into() }
}

impl Engine {
    pub fn new(store: Arc<Store>, registry: BackendRegistry, config: EngineConfig) -> Self {
        Engine { store, registry, config, clock: Arc::new(SystemClock), locks: Locks::default(), job_seq: Mutex::new(None) }
    }

    /// Uses the backends configured in the store.
    pub fn from_store(store: Arc<Store>, config: EngineConfig) -> Result<Self> {
        let file = store.backends()?;
        let registry = BackendRegistry::from_configs(&file.backends)
            .map_err(|e| PipelineError::InvalidRequest(format!("backend configuration: {e}")))?;
        Ok(Self::new(store, registry, config))
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn registry(&self) -> &BackendRegistry {
        &self.registry
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    fn note(&self, actor: &str, action: AuditAction) -> AuditNote {
        AuditNote::new(if actor.is_empty() { "system" } else { actor }, action, self.clock.now())
    }

    // ---- use cases -------------------------------------------------------------

    pub fn add_use_case(&self, w: &UseCaseWorksheet, actor: &str) -> Result<u64> {
        let report = validate_worksheet(w);
        if !report.is_clean() {
            return Err(PipelineError::WorksheetInvalid(report));
        }
        if !crate::store::valid_id(w.id.as_str()) {
            return Err(PipelineError::InvalidRequest(format!("invalid use case id: {:?}", w.id.as_str())));
        }
        let lock = self.locks.get(format!("uc:{}", w.id));
        let _g = lock.lock().unwrap();
        if self.store.exists::<UseCaseWorksheet>(w.id.as_str())? {
            return Err(PipelineError::InvalidRequest(format!("use case already exists: {}", w.id)));
        }
        Ok(self.store.put(w, 0, self.note(actor, AuditAction::UseCaseCreated).detail(&w.name))?)
    }

    pub fn update_use_case(&self, w: &UseCaseWorksheet, expected_revision: u64, actor: &str) -> Result<u64> {
        let report = validate_worksheet(w);
        if !report.is_clean() {
            return Err(PipelineError::WorksheetInvalid(report));
        }
        let lock = self.locks.get(format!("uc:{}", w.id));
        let _g = lock.lock().unwrap();
        let current = self.store.get::<UseCaseWorksheet>(w.id.as_str())?;
        if current.doc.sector != w.sector && !self.store.list_scenarios(w.id.as_str())?.is_empty() {
            return Err(PipelineError::InvalidRequest(
                "sector cannot change once scenarios exist for the use case".into(),
            ));
        }
        Ok(self.store.put(w, expected_revision, self.note(actor, AuditAction::UseCaseUpdated))?)
    }

    pub fn use_case(&self, id: &str) -> Result<Versioned<UseCaseWorksheet>> {
        Ok(self.store.get(id)?)
    }

    pub fn scenario(&self, id: &str) -> Result<Versioned<Scenario>> {
        Ok(self.store.get(id)?)
    }

    // ---- jobs ------------------------------------------------------------------

    fn next_job_id(&self) -> Result<String> {
        let mut seq = self.job_seq.lock().unwrap();
        let n = match *seq {
            Some(n) => n + 1,
            None => {
                self.store
                    .ids(Kind::Job)?
                    .iter()
                    .filter_map(|id| id.strip_prefix("job-").and_then(|n| n.parse::<u64>().ok()))
                    .max()
                    .unwrap_or(0)
                    + 1
            }
        };
        *seq = Some(n);
        Ok(format!("job-{n:06}"))
    }

    fn save_job(&self, job: &mut ExpansionJob, revision: &mut u64, action: AuditAction, detail: String) -> Result<()> {
        job.updated_at = self.clock.now();
        let mut note = self.note(&job.actor, action).stage(job.stage).detail(detail);
        note.timestamp = job.updated_at;
        *revision = self.store.put(job, *revision, note)?;
        Ok(())
    }

    /// Job with its status brought up to date: a job awaiting review completes once
    /// none of its scenarios is still pending at its stage.
    pub fn job(&self, id: &str) -> Result<ExpansionJob> {
        let mut job = self.store.get::<ExpansionJob>(id)?.doc;
        if job.status == JobStatus::AwaitingReview {
            let pending = job.produced.iter().any(|sid| {
                self.store
                    .get::<Scenario>(sid.as_str())
                    .map(|v| v.doc.state(job.stage) == StageState::PendingReview)
                    .unwrap_or(false)
            });
            if !pending {
                job.status = JobStatus::Completed;
            }
        }
        Ok(job)
    }

    pub fn jobs(&self) -> Result<Vec<ExpansionJob>> {
        self.store.ids(Kind::Job)?.iter().map(|id| self.job(id)).collect()
    }

    fn check_backend(&self, backend_id: &str) -> Result<()> {
        if self.registry.contains(backend_id) {
            Ok(())
        } else {
            Err(PipelineError::Backend(GatewayError::UnknownBackend(backend_id.to_string())))
        }
    }

    fn check_stage1_request(&self, use_case_id: &str, count: u32) -> Result<UseCaseWorksheet> {
        if count == 0 {
            return Err(PipelineError::InvalidRequest("target_count must be ≥ 1".into()));
        }
        let w = self.store.get::<UseCaseWorksheet>(use_case_id)?.doc;
        let report = validate_worksheet(&w);
        if !report.is_clean() {
            return Err(PipelineError::WorksheetInvalid(report));
        }
        Ok(w)
    }

    fn check_scenario_stage(&self, s: &Scenario, stage: Stage) -> Result<()> {
        if stage == Stage::Stage1 {
            if s.is_rejected() {
                return Err(stage_order(s, stage, "scenario was rejected"));
            }
            if s.state(Stage::Stage1) != StageState::ChangesRequested {
                return Err(stage_order(
                    s,
                    stage,
                    format!("stage 1 can only be regenerated after changes were requested (currently {})", s.state(stage).key()),
                ));
            }
            return Ok(());
        }
        let prev = stage.previous().expect("stage 2 and 3 have a predecessor");
        if !s.is_approved(prev) {
            return Err(stage_order(
                s,
                stage,
                format!("{stage} requires {prev} to be approved (currently {})", s.state(prev).key()),
            ));
        }
        if s.is_rejected() {
            return Err(stage_order(s, stage, "scenario was rejected"));
        }
        match s.state(stage) {
            StageState::NotStarted | StageState::ChangesRequested => Ok(()),
            other => Err(stage_order(s, stage, format!("{stage} is already {}", other.key()))),
        }
    }

    /// Checks preconditions and records a queued job. Nothing is written when a
    /// precondition fails.
    pub fn plan_expansion(&self, req: &ExpandRequest) -> Result<ExpansionJob> {
        self.check_backend(&req.backend_id)?;
        let (use_case_id, scenario_id, target_count) = match (req.stage, &req.use_case_id, &req.scenario_id) {
            (Stage::Stage1, Some(uc), None) => {
                let count = req.target_count.unwrap_or(self.config.default_target_count);
                self.check_stage1_request(uc.as_str(), count)?;
                (uc.clone(), None, Some(count))
            }
            (_, None, Some(sid)) => {
                if req.target_count.is_some() {
                    return Err(PipelineError::InvalidRequest("target_count applies to stage 1 only".into()));
                }
                let s = self.store.get::<Scenario>(sid.as_str())?.doc;
                self.check_scenario_stage(&s, req.stage)?;
                (s.use_case_id.clone(), Some(sid.clone()), None)
            }
            (stage, Some(uc), None) => {
                if req.target_count.is_some() {
                    return Err(PipelineError::InvalidRequest("target_count applies to stage 1 only".into()));
                }
                let targets = self.eligible(uc.as_str(), stage)?;
                if targets.is_empty() {
                    let prev = stage.previous().expect("stage 2 and 3 have a predecessor");
                    return Err(PipelineError::StageOrder {
                        scenario_id: uc.to_string(),
                        stage,
                        reason: format!("no scenario of {uc} has {prev} approved with {stage} still open"),
                    });
                }
                (uc.clone(), None, None)
            }
            (Stage::Stage1, None, None) | (_, None, None) => {
                return Err(PipelineError::InvalidRequest("a use_case_id (stage 1) or scenario_id is required".into()))
            }
            _ => {
                return Err(PipelineError::InvalidRequest(
                    "give use_case_id for stage 1 drafting or scenario_id for a single scenario, not both".into(),
                ))
            }
        };
        let targets = match (req.stage, &scenario_id) {
            (Stage::Stage2 | Stage::Stage3, None) => self.eligible(use_case_id.as_str(), req.stage)?,
            _ => Vec::new(),
        };
        let now = self.clock.now();
        let mut job = ExpansionJob {
            id: self.next_job_id()?,
            use_case_id,
            scenario_id,
            targets,
            stage: req.stage,
            target_count,
            backend_id: req.backend_id.clone(),
            status: JobStatus::Queued,
            attempts: 0,
            produced: Vec::new(),
            failures: Vec::new(),
            actor: req.actor.clone(),
            created_at: now,
            updated_at: now,
            extra: Default::default(),
        };
        let mut rev = 0;
        self.save_job(&mut job, &mut rev, AuditAction::JobCreated, "queued".into())?;
        Ok(job)
    }

    /// Runs a queued job to completion.
    pub fn run_job(&self, job_id: &str) -> Result<ExpansionJob> {
        let Versioned { revision, doc: mut job } = self.store.get::<ExpansionJob>(job_id)?;
        if job.status != JobStatus::Queued {
            return Err(PipelineError::InvalidRequest(format!("job {job_id} is {}", job.status.key())));
        }
        let mut rev = revision;
        job.status = JobStatus::Running;
        self.save_job(&mut job, &mut rev, AuditAction::JobUpdated, "running".into())?;
        let outcome = match job.stage {
            Stage::Stage1 if job.scenario_id.is_none() => self.run_stage1(&mut job),
            _ if job.scenario_id.is_none() => self.run_targets(&mut job),
            _ => {
                let sid = job.scenario_id.clone().expect("checked above");
                self.run_scenario_stage(&mut job, sid)
            }
        };
        match outcome {
            Ok(()) => {
                job.status = JobStatus::AwaitingReview;
                let detail = format!("{} scenario(s) awaiting review", job.produced.len());
                self.save_job(&mut job, &mut rev, AuditAction::JobUpdated, detail)?;
                Ok(job)
            }
            Err(e) => {
                job.status = JobStatus::Failed;
                if job.failures.is_empty() || !matches!(e, PipelineError::Generation { .. }) {
                    job.failures.push(JobFailure { scenario_id: job.scenario_id.clone(), reason: e.to_string(), raw: None });
                }
                self.save_job(&mut job, &mut rev, AuditAction::JobUpdated, format!("failed: {e}"))?;
                Err(e)
            }
        }
    }

    fn seed(&self, attempt: u32) -> Option<u64> {
        self.config.seed.map(|s| s.wrapping_add(u64::from(attempt.saturating_sub(1))))
    }

    fn generate(&self, job: &ExpansionJob, stage: Stage, prompt: String, attempt: u32) -> Result<GenerationResponse> {
        let req = GenerationRequest { rendered_prompt: prompt, stage, seed: self.seed(attempt), backend_id: job.backend_id.clone() };
        self.registry.generate(&req).map_err(PipelineError::Backend)
    }

    fn log_malformed(&self, job: &mut ExpansionJob, subject: &str, scenario: Option<&ScenarioId>, m: &MalformedOutput) -> Result<()> {
        job.failures.push(JobFailure {
            scenario_id: scenario.cloned(),
            reason: m.to_string(),
            raw: Some(m.raw.chars().take(4000).collect()),
        });
        let note = self.note(&job.actor, AuditAction::GenerationRetried).stage(m.stage).detail(format!("{}: {m}", job.id));
        self.store.record_event(subject, note)?;
        Ok(())
    }

    fn generation_failed(&self, job: &ExpansionJob, subject: &str, reason: String, last: Option<MalformedOutput>) -> PipelineError {
        let note = self.note(&job.actor, AuditAction::GenerationFailed).stage(job.stage).detail(format!("{}: {reason}", job.id));
        let _ = self.store.record_event(subject, note);
        PipelineError::Generation { job_id: job.id.clone(), attempts: job.attempts, reason, malformed: last.map(Box::new) }
    }

    fn titles_in_use_case(&self, use_case_id: &str, except: Option<&str>) -> Result<Vec<String>> {
        Ok(self
            .store
            .scenarios_for(use_case_id)?
            .into_iter()
            .filter(|s| Some(s.id.as_str()) != except)
            .map(|s| s.title)
            .collect())
    }

    fn next_scenario_numbers(&self, use_case_id: &str, n: usize) -> Result<Vec<String>> {
        let slug = use_case_id.strip_prefix("uc-").unwrap_or(use_case_id);
        let prefix = format!("sc-{slug}-");
        let max = self
            .store
            .ids(Kind::Scenario)?
            .iter()
            .filter_map(|id| id.strip_prefix(&prefix).and_then(|k| k.parse::<u64>().ok()))
            .max()
            .unwrap_or(0);
        Ok((1..=n as u64).map(|k| format!("{prefix}{}", max + k)).collect())
    }

    /// Drafts `count` titles and descriptions for a use case.
    fn run_stage1(&self, job: &mut ExpansionJob) -> Result<()> {
        let count = job.target_count.unwrap_or(self.config.default_target_count);
        let lock = self.locks.get(format!("uc:{}", job.use_case_id));
        let _g = lock.lock().unwrap();
        let w = self.check_stage1_request(job.use_case_id.as_str(), count)?;
        let template = self.store.templates().get(Stage::Stage1)?;
        let mut taken: BTreeSet<String> =
            self.titles_in_use_case(w.id.as_str(), None)?.iter().map(|t| t.to_lowercase()).collect();
        let mut known: Vec<String> = self.titles_in_use_case(w.id.as_str(), None)?;
        let mut accepted: Vec<(String, String, String)> = Vec::new();
        let mut problems: Vec<String> = Vec::new();
        let mut last = None;
        while accepted.len() < count as usize && job.attempts < self.config.max_retries {
            job.attempts += 1;
            let need = count as usize - accepted.len();
            let mut feedback = String::new();
            if !known.is_empty() {
                feedback.push_str("Do not reuse any of these existing titles:\n");
                for t in &known {
                    feedback.push_str(&format!("- {t}\n"));
                }
            }
            if !problems.is_empty() {
                feedback.push_str("Problems with the previous answer:\n");
                for p in problems.drain(..) {
                    feedback.push_str(&format!("- {p}\n"));
                }
            }
            let ctx = PromptContext::stage1(&w, need as u32, Some(feedback.as_str()).filter(|f| !f.is_empty()));
            let prompt = render_prompt(&template, &ctx)?;
            let response = self.generate(job, Stage::Stage1, prompt, job.attempts)?;
            let parsed = match parse_stage1(&response.raw_text) {
                Ok(p) => p,
                Err(m) => {
                    self.log_malformed(job, w.id.as_str(), None, &m)?;
                    problems.push(m.reason.clone());
                    last = Some(m);
                    continue;
                }
            };
            for r in parsed.rejects {
                problems.push(format!("{}: {}", r.item, r.reason));
            }
            for (title, description) in parsed.pairs {
                let mut issues = check_title("title", &title);
                issues.extend(check_description("description", &description));
                if let Some((_, _, msg)) = issues.first() {
                    problems.push(format!("{title}: {msg}"));
                    continue;
                }
                if !taken.insert(title.to_lowercase()) {
                    problems.push(format!("duplicate title: {title}"));
                    continue;
                }
                if accepted.len() < count as usize {
                    known.push(title.clone());
                    accepted.push((title, description, response.fingerprint.clone()));
                }
            }
            if !problems.is_empty() {
                let detail = format!("{}: {}", job.id, problems.join("; "));
                self.store
                    .record_event(w.id.as_str(), self.note(&job.actor, AuditAction::GenerationRetried).stage(Stage::Stage1).detail(detail))?;
                for p in &problems {
                    job.failures.push(JobFailure { scenario_id: None, reason: p.clone(), raw: None });
                }
            }
        }
        if accepted.len() < count as usize {
            let reason = format!("only {} of {count} usable distinct scenarios after {} attempt(s)", accepted.len(), job.attempts);
            return Err(self.generation_failed(job, w.id.as_str(), reason, last));
        }
        let ids = self.next_scenario_numbers(w.id.as_str(), accepted.len())?;
        let now = self.clock.now();
        let scenarios: Vec<Scenario> = accepted
            .into_iter()
            .zip(ids)
            .map(|((title, description, fp), id)| {
                let mut s = Scenario::draft(id.into(), &w, title, description, now);
                let payload = s.payload(Stage::Stage1);
                s.push_revision(payload, RevisionOrigin::Generated, Some(fp), now);
                stage1_transition(&mut s, Stage::Stage1);
                s
            })
            .collect();
        let puts = scenarios
            .iter()
            .map(|s| Put {
                doc: s,
                expected_revision: 0,
                note: self.note(&job.actor, AuditAction::ScenarioCreated).stage(Stage::Stage1).detail(job.id.clone()),
            })
            .collect();
        self.store.put_many(puts)?;
        job.produced = scenarios.into_iter().map(|s| s.id).collect();
        Ok(())
    }

    /// Works through a use-case-wide job. Scenarios that fail are listed on the job;
    /// the job fails only when none succeeded.
    fn run_targets(&self, job: &mut ExpansionJob) -> Result<()> {
        let mut first_error = None;
        for sid in job.targets.clone() {
            if let Err(e) = self.run_scenario_stage(job, sid.clone()) {
                if !matches!(e, PipelineError::Generation { .. }) {
                    job.failures.push(JobFailure { scenario_id: Some(sid), reason: e.to_string(), raw: None });
                }
                first_error.get_or_insert(e);
            }
        }
        match first_error {
            Some(e) if job.produced.is_empty() => Err(e),
            _ => Ok(()),
        }
    }

    /// Stage 1 regeneration, stage 2 or stage 3 for one scenario.
    fn run_scenario_stage(&self, job: &mut ExpansionJob, sid: ScenarioId) -> Result<()> {
        let stage = job.stage;
        let _uc = (stage == Stage::Stage1).then(|| self.locks.get(format!("uc:{}", job.use_case_id)));
        let _uc_guard = _uc.as_ref().map(|l| l.lock().unwrap());
        let lock = self.locks.get(format!("sc:{sid}"));
        let _g = lock.lock().unwrap();
        let Versioned { revision, doc: mut s } = self.store.get::<Scenario>(sid.as_str())?;
        self.check_scenario_stage(&s, stage)?;
        let w = self.store.get::<UseCaseWorksheet>(s.use_case_id.as_str())?.doc;
        let taxonomy = self.store.taxonomy()?;
        let template = self.store.templates().get(stage)?;
        let others: BTreeSet<String> = if stage == Stage::Stage1 {
            self.titles_in_use_case(w.id.as_str(), Some(sid.as_str()))?.iter().map(|t| t.to_lowercase()).collect()
        } else {
            BTreeSet::new()
        };
        let mut last = None;
        let mut problem = None::<String>;
        let mut produced = None;
        let mut attempts = 0;
        while attempts < self.config.max_retries {
            attempts += 1;
            job.attempts += 1;
            let mut feedback = regeneration_note(s.pending_feedback.get(&stage), attempts).unwrap_or_default();
            if stage == Stage::Stage1 {
                feedback.push_str("\nReplace this scenario with a new one. Do not reuse any of these titles:\n");
                feedback.push_str(&format!("- {}\n", s.title));
                for t in self.titles_in_use_case(w.id.as_str(), Some(sid.as_str()))? {
                    feedback.push_str(&format!("- {t}\n"));
                }
            }
            if let Some(p) = problem.take() {
                feedback.push_str(&format!("\nProblem with the previous answer: {p}\n"));
            }
            let feedback = Some(feedback.trim()).filter(|f| !f.is_empty());
            let ctx = match stage {
                Stage::Stage1 => PromptContext::stage1(&w, 1, feedback),
                Stage::Stage2 => PromptContext::stage2(&w, &s, &taxonomy, feedback),
                Stage::Stage3 => PromptContext::stage3(&w, &s, feedback),
            };
            let response = self.generate(job, stage, render_prompt(&template, &ctx)?, attempts)?;
            let parsed: Result<StagePayload, MalformedOutput> = match stage {
                Stage::Stage1 => parse_stage1(&response.raw_text).and_then(|p| {
                    let pair = p.pairs.into_iter().find(|(t, d)| {
                        check_title("t", t).is_empty()
                            && check_description("d", d).is_empty()
                            && !others.contains(&t.to_lowercase())
                    });
                    pair.map(|(title, description)| StagePayload::Stage1 { title, description }).ok_or_else(|| MalformedOutput {
                        stage,
                        part: "pairs".into(),
                        reason: "no usable title that is distinct within the use case".into(),
                        raw: response.raw_text.clone(),
                    })
                }),
                Stage::Stage2 => parse_stage2(&response.raw_text, &taxonomy).map(|p| StagePayload::Stage2(p.elements)),
                Stage::Stage3 => parse_stage3(&response.raw_text)
                    .map(|(narrative, evaluation_objective)| StagePayload::Stage3 { narrative, evaluation_objective }),
            };
            match parsed {
                Ok(payload) => {
                    produced = Some((payload, response.fingerprint));
                    break;
                }
                Err(m) => {
                    self.log_malformed(job, sid.as_str(), Some(&sid), &m)?;
                    problem = Some(m.reason.clone());
                    last = Some(m);
                }
            }
        }
        let Some((payload, fingerprint)) = produced else {
            let reason = last.as_ref().map_or_else(|| "no output".to_string(), |m| m.to_string());
            return Err(self.generation_failed(job, sid.as_str(), reason, last));
        };
        let now = self.clock.now();
        s.apply_payload(payload.clone());
        s.push_revision(payload, RevisionOrigin::Generated, Some(fingerprint), now);
        stage1_transition(&mut s, stage);
        s.pending_feedback.remove(&stage);
        s.updated_at = now;
        let report = validate_scenario(&s, &taxonomy);
        if !report.is_clean() {
            return Err(self.generation_failed(job, sid.as_str(), format!("generated content fails validation: {report}"), None));
        }
        let note = self.note(&job.actor, AuditAction::ScenarioGenerated).stage(stage).detail(job.id.clone());
        self.store.put(&s, revision, note)?;
        job.produced.push(sid);
        Ok(())
    }

    fn expand(&self, req: ExpandRequest) -> Result<ExpansionJob> {
        let job = self.plan_expansion(&req)?;
        self.run_job(&job.id)
    }

    /// Drafts `target_count` scenarios for a use case; they land in stage 1
    /// `PendingReview`.
    pub fn expand_stage1(&self, use_case_id: &str, target_count: u32, backend_id: &str, actor: &str) -> Result<Vec<Scenario>> {
        let job = self.expand(ExpandRequest::stage1(use_case_id, target_count, backend_id).by(actor))?;
        job.produced.iter().map(|id| Ok(self.store.get::<Scenario>(id.as_str())?.doc)).collect()
    }

    /// Replaces a scenario whose stage 1 review requested changes.
    pub fn regenerate_stage1(&self, scenario_id: &str, backend_id: &str, actor: &str) -> Result<Scenario> {
        self.expand_one(Stage::Stage1, scenario_id, backend_id, actor)
    }

    pub fn expand_stage2(&self, scenario_id: &str, backend_id: &str, actor: &str) -> Result<Scenario> {
        self.expand_one(Stage::Stage2, scenario_id, backend_id, actor)
    }

    pub fn expand_stage3(&self, scenario_id: &str, backend_id: &str, actor: &str) -> Result<Scenario> {
        self.expand_one(Stage::Stage3, scenario_id, backend_id, actor)
    }

    /// Runs `stage` (2 or 3) over every eligible scenario of a use case.
    pub fn expand_use_case(&self, use_case_id: &str, stage: Stage, backend_id: &str, actor: &str) -> Result<ExpansionJob> {
        self.expand(ExpandRequest {
            stage,
            use_case_id: Some(use_case_id.into()),
            scenario_id: None,
            target_count: None,
            backend_id: backend_id.into(),
            actor: actor.into(),
        })
    }

    /// Scenarios of a use case that `stage` can run on now.
    pub fn eligible(&self, use_case_id: &str, stage: Stage) -> Result<Vec<ScenarioId>> {
        self.store.get::<UseCaseWorksheet>(use_case_id)?;
        Ok(self
            .store
            .scenarios_for(use_case_id)?
            .into_iter()
            .filter(|s| self.check_scenario_stage(s, stage).is_ok())
            .map(|s| s.id)
            .collect())
    }

    fn expand_one(&self, stage: Stage, scenario_id: &str, backend_id: &str, actor: &str) -> Result<Scenario> {
        self.expand(ExpandRequest::scenario(stage, scenario_id, backend_id).by(actor))?;
        Ok(self.store.get::<Scenario>(scenario_id)?.doc)
    }

    // ---- review ----------------------------------------------------------------

    /// Applies a human checkpoint decision. `expected_revision`, when given, must
    /// match the stored scenario revision.
    pub fn submit_review(&self, decision: &ReviewDecision, expected_revision: Option<u64>) -> Result<Scenario> {
        let sid = decision.scenario_id.as_str();
        if decision.reviewer.trim().is_empty() {
            return Err(PipelineError::InvalidRequest("reviewer must not be empty".into()));
        }
        match (&decision.verdict, &decision.edited_payload) {
            (Verdict::EditAndApprove, None) => {
                return Err(PipelineError::InvalidRequest("edit_and_approve requires edited_payload".into()))
            }
            (Verdict::EditAndApprove, Some(p)) if p.stage() != decision.stage => {
                return Err(PipelineError::InvalidRequest(format!("edited_payload is {} content, decision is for {}", p.stage(), decision.stage)))
            }
            (Verdict::EditAndApprove, Some(_)) => {}
            (_, Some(_)) => {
                return Err(PipelineError::InvalidRequest("edited_payload is only allowed with edit_and_approve".into()))
            }
            (_, None) => {}
        }
        let use_case_lock = self.store.get::<Scenario>(sid)?.doc.use_case_id;
        let _uc = (decision.stage == Stage::Stage1).then(|| self.locks.get(format!("uc:{use_case_lock}")));
        let _uc_guard = _uc.as_ref().map(|l| l.lock().unwrap());
        let lock = self.locks.get(format!("sc:{sid}"));
        let _g = lock.lock().unwrap();
        let Versioned { revision, doc: mut s } = self.store.get::<Scenario>(sid)?;
        if let Some(expected) = expected_revision {
            if expected != revision {
                return Err(PipelineError::Conflict(StoreError::Conflict {
                    kind: "scenario",
                    id: sid.to_string(),
                    expected,
                    actual: revision,
                }));
            }
        }
        let state = s.state(decision.stage);
        if state != StageState::PendingReview {
            return Err(PipelineError::ReviewState { scenario_id: sid.into(), stage: decision.stage, state: state.key().into() });
        }
        let now = self.clock.now();
        let action = match decision.verdict {
            Verdict::Approve => {
                s.stage_states.insert(decision.stage, StageState::Approved);
                AuditAction::ScenarioReviewed
            }
            Verdict::EditAndApprove => {
                let payload = decision.edited_payload.clone().expect("checked above");
                let mut edited = s.clone();
                edited.apply_payload(payload.clone());
                edited.stage_states.insert(decision.stage, StageState::Approved);
                let mut report = validate_scenario(&edited, &self.store.taxonomy()?);
                if let StagePayload::Stage1 { title, .. } = &payload {
                    let clash = self
                        .titles_in_use_case(s.use_case_id.as_str(), Some(sid))?
                        .iter()
                        .any(|t| t.eq_ignore_ascii_case(title));
                    if clash {
                        report.push("title", Rule::DuplicateTitle, format!("title already used in this use case: {title}"));
                    }
                }
                if !report.is_clean() {
                    return Err(PipelineError::Validation(report));
                }
                s = edited;
                s.push_revision(payload, RevisionOrigin::HumanEdited, None, now);
                AuditAction::ScenarioEdited
            }
            Verdict::RequestRegeneration => {
                s.stage_states.insert(decision.stage, StageState::ChangesRequested);
                let comments = decision.comments.trim();
                let feedback = if comments.is_empty() { "The reviewer asked for a different version." } else { comments };
                s.pending_feedback.insert(decision.stage, feedback.to_string());
                AuditAction::ScenarioReviewed
            }
            Verdict::Reject => {
                s.stage_states.insert(decision.stage, StageState::Rejected);
                AuditAction::ScenarioReviewed
            }
        };
        s.reviews.push(decision.clone());
        s.updated_at = now;
        let verdict = serde_json::to_value(decision.verdict).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let mut note = AuditNote::new(&decision.reviewer, action, now).stage(decision.stage).detail(verdict);
        if !decision.comments.trim().is_empty() {
            note.detail = format!("{}: {}", note.detail, decision.comments.trim());
        }
        self.store.put(&s, revision, note)?;
        Ok(s)
    }

    /// Stages waiting for review, oldest first.
    pub fn pending_reviews(&self, use_case_id: Option<&str>, stage: Option<Stage>) -> Result<Vec<PendingReview>> {
        let mut out = Vec::new();
        for id in self.store.ids(Kind::Scenario)? {
            let Versioned { revision, doc: s } = self.store.get::<Scenario>(&id)?;
            if use_case_id.is_some_and(|u| u != s.use_case_id.as_str()) {
                continue;
            }
            for st in Stage::ALL {
                if stage.is_some_and(|x| x != st) || s.state(st) != StageState::PendingReview {
                    continue;
                }
                let since = s.latest_revision(st).map_or(s.updated_at, |r| r.timestamp);
                out.push(PendingReview {
                    scenario_id: s.id.clone(),
                    use_case_id: s.use_case_id.clone(),
                    stage: st,
                    title: s.title.clone(),
                    since,
                    revision,
                });
            }
        }
        out.sort_by(|a, b| (a.since, &a.scenario_id, a.stage).cmp(&(b.since, &b.scenario_id, b.stage)));
        Ok(out)
    }

    pub fn pipeline_status(&self, use_case_id: &str) -> Result<StatusSummary> {
        if !self.store.exists::<UseCaseWorksheet>(use_case_id)? {
            return Err(PipelineError::NotFound { kind: "use_case".into(), id: use_case_id.into() });
        }
        Ok(StatusSummary::tally(use_case_id.into(), &self.store.scenarios_for(use_case_id)?))
    }

    // ---- rubric, coverage, history ---------------------------------------------

    /// Scores a scenario and appends the assessment.
    pub fn record_assessment(
        &self,
        scenario_id: &str,
        input: &BTreeMap<String, HumanInput>,
        assessed_by: &str,
    ) -> Result<RubricAssessment> {
        let s = self.store.get::<Scenario>(scenario_id)?.doc;
        let lock = self.locks.get(format!("as:{scenario_id}"));
        let _g = lock.lock().unwrap();
        let rubric = self.store.rubric()?;
        let mut a = assess(&s, &self.store.taxonomy()?, &rubric, input, assessed_by, self.clock.now())
            .map_err(PipelineError::Rubric)?;
        let n = self.store.assessments_for(scenario_id)?.len() + 1;
        a.id = format!("as-{scenario_id}-{n}");
        let detail = format!("{:?} {}", a.verdict, a.weighted_score_exact);
        self.store.put(&a, 0, self.note(assessed_by, AuditAction::AssessmentRecorded).detail(detail))?;
        Ok(a)
    }

    /// Coverage over non-rejected scenarios, optionally of one use case.
    pub fn coverage(&self, use_case_id: Option<&str>, floor: usize) -> Result<CoverageReport> {
        let scenarios: Vec<Scenario> = self
            .store
            .all::<Scenario>()?
            .into_iter()
            .filter(|s| !s.is_rejected() && use_case_id.is_none_or(|u| s.use_case_id.as_str() == u))
            .collect();
        Ok(coverage_report(&scenarios, &self.store.taxonomy()?, floor))
    }

    /// Field-level changes between two revisions of a scenario.
    pub fn diff(&self, scenario_id: &str, from: u64, to: u64) -> Result<Vec<FieldChange>> {
        let s = self.store.get::<Scenario>(scenario_id)?.doc;
        let find = |i: u64| {
            s.revisions
                .get(i as usize)
                .ok_or_else(|| PipelineError::NotFound { kind: "revision".into(), id: format!("{scenario_id}#{i}") })
        };
        Ok(diff_payloads(&find(from)?.payload, &find(to)?.payload))
    }
}
