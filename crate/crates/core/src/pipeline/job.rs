use serde::{Deserialize, Serialize};

use crate::codec::Document;
use crate::schema::{Extra, ScenarioId, Stage, Timestamp, UseCaseId};
use crate::store::{Kind, Stored};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    AwaitingReview,
    Completed,
    Failed,
}

impl JobStatus {
    pub fn key(self) -> &'static str {
        match self {
            JobStatus::Queued => "queued",
            JobStatus::Running => "running",
            JobStatus::AwaitingReview => "awaiting_review",
            JobStatus::Completed => "completed",
            JobStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobFailure {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_id: Option<ScenarioId>,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

/// One expansion run: stage 1 drafting for a use case, one stage of one scenario,
/// or one stage of every eligible scenario of a use case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionJob {
    pub id: String,
    pub use_case_id: UseCaseId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_id: Option<ScenarioId>,
    /// Scenarios a use-case-wide stage 2 or 3 job works through.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<ScenarioId>,
    pub stage: Stage,
    /// Set for stage 1 drafting only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_count: Option<u32>,
    pub backend_id: String,
    pub status: JobStatus,
    /// Generation calls made; at most the engine's `max_retries` per scenario.
    pub attempts: u32,
    #[serde(default)]
    pub produced: Vec<ScenarioId>,
    #[serde(default)]
    pub failures: Vec<JobFailure>,
    #[serde(default)]
    pub actor: String,
    pub created_at: Timestamp,
    pub updated_at: Timestamp,
    #[serde(flatten)]
    pub extra: Extra,
}

impl Document for ExpansionJob {
    fn unknown_fields(&self) -> Vec<String> {
        self.extra.keys().cloned().collect()
    }
}

impl Stored for ExpansionJob {
    const KIND: Kind = Kind::Job;
    fn id(&self) -> &str {
        &self.id
    }
}
