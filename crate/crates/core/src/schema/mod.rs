//! Domain documents: use-case worksheets, scenarios and the review/revision records
//! that travel with them.
//!
//! Every type here is a plain value. Mutation happens by building a new value and
//! appending a [`RevisionRecord`]; nothing in this module performs IO.

mod diff;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, SubsecRound, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

pub use diff::{diff_payloads, FieldChange};
pub use validate::{
    check_description, check_title, validate_scenario, validate_scenario_with_parent,
    validate_worksheet, Finding, Rule, ValidationReport, MAX_DESCRIPTION_CHARS, MAX_TITLE_CHARS,
};

/// Unknown top-level fields kept by lenient parsing.
pub type Extra = BTreeMap<String, Value>;

/// A UTC instant stored with microsecond precision as `YYYY-MM-DDTHH:MM:SS.ffffffZ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(DateTime<Utc>);

impl Timestamp {
    pub fn now() -> Self {
        Self::from_datetime(Utc::now())
    }

    pub fn from_datetime(dt: DateTime<Utc>) -> Self {
        Timestamp(dt.trunc_subsecs(6))
    }

    pub fn from_unix_micros(micros: i64) -> Self {
        Self::from_datetime(DateTime::from_timestamp_micros(micros).unwrap_or_default())
    }

    pub fn as_datetime(&self) -> DateTime<Utc> {
        self.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.to_rfc3339_opts(SecondsFormat::Micros, true))
    }
}

impl FromStr for Timestamp {
    type Err = chrono::ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Self::from_datetime(DateTime::parse_from_rfc3339(s)?.with_timezone(&Utc)))
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                $name(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(s)
            }
        }
    };
}

string_id!(
    /// Opaque use-case identifier, conventionally `uc-<slug>`.
    UseCaseId
);
string_id!(
    /// Opaque scenario identifier, conventionally `sc-<slug>-<n>`.
    ScenarioId
);

/// Lowercase ASCII slug: alphanumerics kept, every other run collapsed to `-`.
pub fn slugify(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut dash = false;
    for c in text.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
            dash = false;
        } else if !dash && !out.is_empty() {
            out.push('-');
            dash = true;
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserDescriptor {
    pub role: String,
    #[serde(default)]
    pub characteristics: String,
}

impl UserDescriptor {
    pub fn new(role: impl Into<String>, characteristics: impl Into<String>) -> Self {
        Self { role: role.into(), characteristics: characteristics.into() }
    }
}

/// Where a worksheet came from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElicitationProvenance {
    /// e.g. "SME discussion", "fixture".
    pub method: String,
    #[serde(default)]
    pub participants: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elicited_on: Option<String>,
    #[serde(default)]
    pub notes: String,
}

/// A use case as captured on the elicitation worksheet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UseCaseWorksheet {
    pub id: UseCaseId,
    pub name: String,
    pub sector: String,
    #[serde(default)]
    pub sub_sectors: Vec<String>,
    pub summary: String,
    pub direct_users: Vec<UserDescriptor>,
    #[serde(default)]
    pub indirect_users: Vec<UserDescriptor>,
    pub intended_outcomes: Vec<String>,
    #[serde(default)]
    pub positive_impacts: Vec<String>,
    #[serde(default)]
    pub negative_impacts: Vec<String>,
    pub kpis: Vec<String>,
    #[serde(default)]
    pub provenance: ElicitationProvenance,
    pub created_at: Timestamp,
    pub updated_at: Timestamp,
    #[serde(flatten)]
    pub extra: Extra,
}

/// A scenario risk tagged with a taxonomy category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaggedRisk {
    pub text: String,
    pub category_id: String,
}

impl TaggedRisk {
    pub fn new(category_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self { text: text.into(), category_id: category_id.into() }
    }
}

/// The three expansion stages. Ordered: `Stage1 < Stage2 < Stage3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Titles and one-sentence descriptions.
    Stage1,
    /// Users, outcomes, benefits, risks and KPIs.
    Stage2,
    /// Narrative and evaluation objective.
    Stage3,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Stage1, Stage::Stage2, Stage::Stage3];

    pub fn number(self) -> u8 {
        match self {
            Stage::Stage1 => 1,
            Stage::Stage2 => 2,
            Stage::Stage3 => 3,
        }
    }

    pub fn from_number(n: u64) -> Option<Stage> {
        match n {
            1 => Some(Stage::Stage1),
            2 => Some(Stage::Stage2),
            3 => Some(Stage::Stage3),
            _ => None,
        }
    }

    pub fn previous(self) -> Option<Stage> {
        match self {
            Stage::Stage1 => None,
            Stage::Stage2 => Some(Stage::Stage1),
            Stage::Stage3 => Some(Stage::Stage2),
        }
    }

    pub fn next(self) -> Option<Stage> {
        match self {
            Stage::Stage1 => Some(Stage::Stage2),
            Stage::Stage2 => Some(Stage::Stage3),
            Stage::Stage3 => None,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Stage::Stage1 => "stage1",
            Stage::Stage2 => "stage2",
            Stage::Stage3 => "stage3",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {}", self.number())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        let digits = t.strip_prefix("stage").unwrap_or(&t).trim();
        digits
            .parse::<u64>()
            .ok()
            .and_then(Stage::from_number)
            .ok_or_else(|| format!("unknown stage: {s}"))
    }
}

// Accepts "stage2" as well as the bare number 2.
impl<'de> Deserialize<'de> for Stage {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct StageVisitor;

        impl serde::de::Visitor<'_> for StageVisitor {
            type Value = Stage;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a stage (\"stage1\".. \"stage3\" or 1..3)")
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<Stage, E> {
                Stage::from_number(v).ok_or_else(|| E::custom(format!("unknown stage: {v}")))
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<Stage, E> {
                u64::try_from(v)
                    .ok()
                    .and_then(Stage::from_number)
                    .ok_or_else(|| E::custom(format!("unknown stage: {v}")))
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<Stage, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(StageVisitor)
    }
}

/// Review state of one stage of one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageState {
    NotStarted,
    Drafted,
    PendingReview,
    ChangesRequested,
    Approved,
    Rejected,
}

impl StageState {
    pub const ALL: [StageState; 6] = [
        StageState::NotStarted,
        StageState::Drafted,
        StageState::PendingReview,
        StageState::ChangesRequested,
        StageState::Approved,
        StageState::Rejected,
    ];

    pub fn can_transition_to(self, next: StageState) -> bool {
        use StageState::*;
        matches!(
            (self, next),
            (NotStarted, Drafted)
                | (Drafted, PendingReview)
                | (PendingReview, Approved)
                | (PendingReview, ChangesRequested)
                | (PendingReview, Rejected)
                | (ChangesRequested, Drafted)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, StageState::Approved | StageState::Rejected)
    }

    pub fn key(self) -> &'static str {
        match self {
            StageState::NotStarted => "not_started",
            StageState::Drafted => "drafted",
            StageState::PendingReview => "pending_review",
            StageState::ChangesRequested => "changes_requested",
            StageState::Approved => "approved",
            StageState::Rejected => "rejected",
        }
    }
}

impl fmt::Display for StageState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// The six element groups produced by the second stage.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage2Elements {
    pub direct_users: Vec<UserDescriptor>,
    pub indirect_users: Vec<UserDescriptor>,
    pub intended_outcomes: Vec<String>,
    pub benefits: Vec<String>,
    pub risks: Vec<TaggedRisk>,
    pub kpis: Vec<String>,
}

impl Stage2Elements {
    pub fn is_empty(&self) -> bool {
        self.direct_users.is_empty()
            && self.indirect_users.is_empty()
            && self.intended_outcomes.is_empty()
            && self.benefits.is_empty()
            && self.risks.is_empty()
            && self.kpis.is_empty()
    }
}

/// Content owned by one stage; also the snapshot stored in each revision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum StagePayload {
    Stage1 { title: String, description: String },
    Stage2(Stage2Elements),
    Stage3 { narrative: String, evaluation_objective: String },
}

impl StagePayload {
    pub fn stage(&self) -> Stage {
        match self {
            StagePayload::Stage1 { .. } => Stage::Stage1,
            StagePayload::Stage2(_) => Stage::Stage2,
            StagePayload::Stage3 { .. } => Stage::Stage3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevisionOrigin {
    Generated,
    HumanEdited,
}

/// One entry of a scenario's append-only content history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevisionRecord {
    pub index: u64,
    pub stage: Stage,
    pub payload: StagePayload,
    pub origin: RevisionOrigin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_fingerprint: Option<String>,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Approve,
    EditAndApprove,
    RequestRegeneration,
    Reject,
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "approve" => Ok(Verdict::Approve),
            "edit_and_approve" | "edit" => Ok(Verdict::EditAndApprove),
            "request_regeneration" | "regenerate" => Ok(Verdict::RequestRegeneration),
            "reject" => Ok(Verdict::Reject),
            _ => Err(format!("unknown verdict: {s}")),
        }
    }
}

/// Outcome of a human checkpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewDecision {
    pub reviewer: String,
    pub scenario_id: ScenarioId,
    pub stage: Stage,
    pub verdict: Verdict,
    #[serde(default)]
    pub comments: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_payload: Option<StagePayload>,
    pub timestamp: Timestamp,
}

/// A scenario carrying the twelve scenario elements plus its pipeline state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: ScenarioId,
    pub use_case_id: UseCaseId,
    pub sector: String,
    pub title: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub narrative: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation_objective: Option<String>,
    #[serde(default)]
    pub direct_users: Vec<UserDescriptor>,
    #[serde(default)]
    pub indirect_users: Vec<UserDescriptor>,
    #[serde(default)]
    pub intended_outcomes: Vec<String>,
    #[serde(default)]
    pub benefits: Vec<String>,
    #[serde(default)]
    pub risks: Vec<TaggedRisk>,
    #[serde(default)]
    pub kpis: Vec<String>,
    pub stage_states: BTreeMap<Stage, StageState>,
    #[serde(default)]
    pub revisions: Vec<RevisionRecord>,
    /// Reviewer comments waiting to be fed into the next regeneration of a stage.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub pending_feedback: BTreeMap<Stage, String>,
    #[serde(default)]
    pub reviews: Vec<ReviewDecision>,
    pub created_at: Timestamp,
    pub updated_at: Timestamp,
    #[serde(flatten)]
    pub extra: Extra,
}

/// Scenario element names paired with the field that holds each one.
pub const SCENARIO_ELEMENTS: [(&str, &str); 12] = [
    ("Sector", "sector"),
    ("Use Case", "use_case_id"),
    ("Scenario Title", "title"),
    ("Scenario Description", "description"),
    ("Scenario Narrative", "narrative"),
    ("Evaluation Objective", "evaluation_objective"),
    ("Direct Users", "direct_users"),
    ("Indirect Users", "indirect_users"),
    ("Intended Outcomes", "intended_outcomes"),
    ("Positive Impacts/Benefits", "benefits"),
    ("Negative Impacts/Risks", "risks"),
    ("KPIs and Metrics", "kpis"),
];

impl Scenario {
    /// A freshly drafted scenario: stage 1 content only, all stages `NotStarted`.
    pub fn draft(
        id: ScenarioId,
        parent: &UseCaseWorksheet,
        title: impl Into<String>,
        description: impl Into<String>,
        now: Timestamp,
    ) -> Self {
        Scenario {
            id,
            use_case_id: parent.id.clone(),
            sector: parent.sector.clone(),
            title: title.into(),
            description: description.into(),
            narrative: None,
            evaluation_objective: None,
            direct_users: Vec::new(),
            indirect_users: Vec::new(),
            intended_outcomes: Vec::new(),
            benefits: Vec::new(),
            risks: Vec::new(),
            kpis: Vec::new(),
            stage_states: Stage::ALL.iter().map(|s| (*s, StageState::NotStarted)).collect(),
            revisions: Vec::new(),
            pending_feedback: BTreeMap::new(),
            reviews: Vec::new(),
            created_at: now,
            updated_at: now,
            extra: Extra::new(),
        }
    }

    pub fn state(&self, stage: Stage) -> StageState {
        self.stage_states.get(&stage).copied().unwrap_or(StageState::NotStarted)
    }

    pub fn is_approved(&self, stage: Stage) -> bool {
        self.state(stage) == StageState::Approved
    }

    /// True once any stage was rejected; the scenario is frozen from then on.
    pub fn is_rejected(&self) -> bool {
        self.stage_states.values().any(|s| *s == StageState::Rejected)
    }

    /// Content currently held for a stage.
    pub fn payload(&self, stage: Stage) -> StagePayload {
        match stage {
            Stage::Stage1 => StagePayload::Stage1 {
                title: self.title.clone(),
                description: self.description.clone(),
            },
            Stage::Stage2 => StagePayload::Stage2(self.stage2_elements()),
            Stage::Stage3 => StagePayload::Stage3 {
                narrative: self.narrative.clone().unwrap_or_default(),
                evaluation_objective: self.evaluation_objective.clone().unwrap_or_default(),
            },
        }
    }

    pub fn stage2_elements(&self) -> Stage2Elements {
        Stage2Elements {
            direct_users: self.direct_users.clone(),
            indirect_users: self.indirect_users.clone(),
            intended_outcomes: self.intended_outcomes.clone(),
            benefits: self.benefits.clone(),
            risks: self.risks.clone(),
            kpis: self.kpis.clone(),
        }
    }

    /// Replaces the content of the payload's stage.
    pub fn apply_payload(&mut self, payload: StagePayload) {
        match payload {
            StagePayload::Stage1 { title, description } => {
                self.title = title;
                self.description = description;
            }
            StagePayload::Stage2(e) => {
                self.direct_users = e.direct_users;
                self.indirect_users = e.indirect_users;
                self.intended_outcomes = e.intended_outcomes;
                self.benefits = e.benefits;
                self.risks = e.risks;
                self.kpis = e.kpis;
            }
            StagePayload::Stage3 { narrative, evaluation_objective } => {
                self.narrative = Some(narrative);
                self.evaluation_objective = Some(evaluation_objective);
            }
        }
    }

    /// Appends a revision with the next contiguous index.
    pub fn push_revision(
        &mut self,
        payload: StagePayload,
        origin: RevisionOrigin,
        prompt_fingerprint: Option<String>,
        timestamp: Timestamp,
    ) -> &RevisionRecord {
        let index = self.revisions.len() as u64;
        self.revisions.push(RevisionRecord {
            index,
            stage: payload.stage(),
            payload,
            origin,
            prompt_fingerprint,
            timestamp,
        });
        self.revisions.last().expect("just pushed")
    }

    pub fn latest_revision(&self, stage: Stage) -> Option<&RevisionRecord> {
        self.revisions.iter().rev().find(|r| r.stage == stage)
    }
}
