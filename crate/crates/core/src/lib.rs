//! Turns SME-elicited AI use cases into evaluation-ready scenarios.
//!
//! The crate is organised around the lifecycle of a scenario:
//!
//! - [`schema`] holds the worksheet and scenario documents plus their validation rules.
//! - [`codec`] is the canonical on-disk encoding (strict and lenient parsing).
//! - [`taxonomy`] loads the risk category list and computes coverage.
//! - [`gateway`] renders prompts, talks to text-generation backends and parses their output.
//! - [`pipeline`] is the three-stage expansion state machine with human review gates.
//! - [`rubric`] scores scenario readiness.
//! - [`store`] persists documents with optimistic concurrency, keeps the audit log and exports.

pub mod codec;
pub mod fixtures;
pub mod gateway;
pub mod pipeline;
pub mod rubric;
pub mod schema;
pub mod store;
pub mod taxonomy;

pub use codec::{parse, serialize, Document, ParseError, ParseMode};
pub use gateway::{Backend, BackendRegistry, GatewayError, GenerationRequest, GenerationResponse};
pub use pipeline::{Engine, EngineConfig, ExpansionJob, JobStatus, PipelineError, StatusSummary};
pub use rubric::{RubricAssessment, RubricDefinition, Verdict as ReadinessVerdict};
pub use schema::{
    Finding, ReviewDecision, RevisionRecord, Scenario, ScenarioId, Stage, StagePayload,
    StageState, TaggedRisk, Timestamp, UseCaseId, UseCaseWorksheet, UserDescriptor,
    ValidationReport, Verdict,
};
pub use store::{Store, StoreError};
pub use taxonomy::{CoverageReport, RiskCategory, RiskTaxonomy};
