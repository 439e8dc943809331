use std::fmt;

use serde::{Deserialize, Serialize};

use super::{
    RevisionOrigin, Scenario, Stage, StageState, UseCaseWorksheet, UserDescriptor,
};
use crate::taxonomy::RiskTaxonomy;

pub const MAX_TITLE_CHARS: usize = 120;
pub const MAX_DESCRIPTION_CHARS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Required,
    NonEmptyList,
    TooLong,
    SingleLine,
    OneSentence,
    StageOrder,
    StateContent,
    UnknownCategory,
    UnresolvedReference,
    SectorMismatch,
    RevisionSequence,
    Fingerprint,
    DuplicateTitle,
    PayloadStage,
}

/// One violated rule, anchored at a field path such as `risks[2].category_id`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub field: String,
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn len(&self) -> usize {
        self.findings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn push(&mut self, field: impl Into<String>, rule: Rule, message: impl Into<String>) {
        self.findings.push(Finding { field: field.into(), rule, message: message.into() });
    }

    pub fn on_field<'a>(&'a self, field: &'a str) -> impl Iterator<Item = &'a Finding> + 'a {
        self.findings.iter().filter(move |f| f.field == field)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.findings.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

fn blank(s: &str) -> bool {
    s.trim().is_empty()
}

fn required(report: &mut ValidationReport, field: &str, value: &str) {
    if blank(value) {
        report.push(field, Rule::Required, "must not be empty");
    }
}

fn text_list(report: &mut ValidationReport, field: &str, items: &[String], min_one: bool) {
    if min_one && items.is_empty() {
        report.push(field, Rule::NonEmptyList, "needs at least one entry");
    }
    for (i, item) in items.iter().enumerate() {
        if blank(item) {
            report.push(format!("{field}[{i}]"), Rule::Required, "entry must not be empty");
        }
    }
}

fn user_list(report: &mut ValidationReport, field: &str, users: &[UserDescriptor], min_one: bool) {
    if min_one && users.is_empty() {
        report.push(field, Rule::NonEmptyList, "needs at least one entry");
    }
    for (i, u) in users.iter().enumerate() {
        if blank(&u.role) {
            report.push(format!("{field}[{i}].role"), Rule::Required, "role must not be empty");
        }
    }
}

/// Findings for a scenario title, anchored at `field`.
pub fn check_title(field: &str, title: &str) -> Vec<(String, Rule, String)> {
    let mut out = Vec::new();
    if blank(title) {
        out.push((field.to_string(), Rule::Required, "must not be empty".to_string()));
        return out;
    }
    let n = title.chars().count();
    if n > MAX_TITLE_CHARS {
        out.push((field.to_string(), Rule::TooLong, format!("{n} characters exceeds {MAX_TITLE_CHARS}")));
    }
    if title.contains(['\n', '\r']) {
        out.push((field.to_string(), Rule::SingleLine, "must be a single line".to_string()));
    }
    out
}

/// Findings for a scenario description. A description is one sentence when it holds
/// exactly one of `.`, `!`, `?` and that mark is the final character.
pub fn check_description(field: &str, description: &str) -> Vec<(String, Rule, String)> {
    let mut out = Vec::new();
    if blank(description) {
        out.push((field.to_string(), Rule::Required, "must not be empty".to_string()));
        return out;
    }
    let n = description.chars().count();
    if n > MAX_DESCRIPTION_CHARS {
        out.push((
            field.to_string(),
            Rule::TooLong,
            format!("{n} characters exceeds {MAX_DESCRIPTION_CHARS}"),
        ));
    }
    if description.contains(['\n', '\r']) {
        out.push((field.to_string(), Rule::SingleLine, "must be a single line".to_string()));
    }
    let marks = description.chars().filter(|c| matches!(c, '.' | '!' | '?')).count();
    let ends = description.ends_with(['.', '!', '?']);
    if marks != 1 || !ends {
        out.push((
            field.to_string(),
            Rule::OneSentence,
            "must be exactly one sentence: a single terminal '.', '!' or '?' at the end".to_string(),
        ));
    }
    out
}

fn extend(report: &mut ValidationReport, found: Vec<(String, Rule, String)>) {
    for (field, rule, message) in found {
        report.push(field, rule, message);
    }
}

pub fn validate_worksheet(w: &UseCaseWorksheet) -> ValidationReport {
    let mut r = ValidationReport::default();
    required(&mut r, "id", w.id.as_str());
    required(&mut r, "name", &w.name);
    required(&mut r, "sector", &w.sector);
    required(&mut r, "summary", &w.summary);
    text_list(&mut r, "sub_sectors", &w.sub_sectors, false);
    user_list(&mut r, "direct_users", &w.direct_users, true);
    user_list(&mut r, "indirect_users", &w.indirect_users, false);
    text_list(&mut r, "intended_outcomes", &w.intended_outcomes, true);
    text_list(&mut r, "positive_impacts", &w.positive_impacts, false);
    text_list(&mut r, "negative_impacts", &w.negative_impacts, false);
    text_list(&mut r, "kpis", &w.kpis, true);
    r
}

/// Structural checks that need only the scenario and the taxonomy.
pub fn validate_scenario(s: &Scenario, taxonomy: &RiskTaxonomy) -> ValidationReport {
    let mut r = ValidationReport::default();
    required(&mut r, "id", s.id.as_str());
    required(&mut r, "use_case_id", s.use_case_id.as_str());
    required(&mut r, "sector", &s.sector);
    extend(&mut r, check_title("title", &s.title));
    extend(&mut r, check_description("description", &s.description));

    user_list(&mut r, "direct_users", &s.direct_users, false);
    user_list(&mut r, "indirect_users", &s.indirect_users, false);
    text_list(&mut r, "intended_outcomes", &s.intended_outcomes, false);
    text_list(&mut r, "benefits", &s.benefits, false);
    text_list(&mut r, "kpis", &s.kpis, false);
    for (i, risk) in s.risks.iter().enumerate() {
        if blank(&risk.text) {
            r.push(format!("risks[{i}].text"), Rule::Required, "risk text must not be empty");
        }
        if blank(&risk.category_id) {
            r.push(format!("risks[{i}].category_id"), Rule::Required, "risk must be tagged");
        } else if !taxonomy.contains(&risk.category_id) {
            r.push(
                format!("risks[{i}].category_id"),
                Rule::UnknownCategory,
                format!("unknown risk category '{}'", risk.category_id),
            );
        }
    }
    if let Some(n) = &s.narrative {
        required(&mut r, "narrative", n);
    }
    if let Some(o) = &s.evaluation_objective {
        required(&mut r, "evaluation_objective", o);
    }

    stage_rules(s, &mut r);
    revision_rules(s, &mut r);
    r
}

fn stage_rules(s: &Scenario, r: &mut ValidationReport) {
    let stage1_ok = s.is_approved(Stage::Stage1);
    let stage2_ok = s.is_approved(Stage::Stage2);

    let stage2_fields: [(&str, bool); 6] = [
        ("direct_users", !s.direct_users.is_empty()),
        ("indirect_users", !s.indirect_users.is_empty()),
        ("intended_outcomes", !s.intended_outcomes.is_empty()),
        ("benefits", !s.benefits.is_empty()),
        ("risks", !s.risks.is_empty()),
        ("kpis", !s.kpis.is_empty()),
    ];
    if !stage1_ok {
        for (field, present) in stage2_fields {
            if present {
                r.push(field, Rule::StageOrder, "stage 2 content present before stage 1 approval");
            }
        }
    }
    if !stage2_ok {
        if s.narrative.is_some() {
            r.push("narrative", Rule::StageOrder, "stage 3 content present before stage 2 approval");
        }
        if s.evaluation_objective.is_some() {
            r.push(
                "evaluation_objective",
                Rule::StageOrder,
                "stage 3 content present before stage 2 approval",
            );
        }
    }

    // A stage can only be in progress once the one before it is approved.
    for stage in [Stage::Stage2, Stage::Stage3] {
        let prev = stage.previous().expect("has previous");
        if s.state(stage) != StageState::NotStarted && !s.is_approved(prev) {
            r.push(
                format!("stage_states.{}", stage.key()),
                Rule::StageOrder,
                format!("{stage} is {} while {prev} is {}", s.state(stage), s.state(prev)),
            );
        }
    }

    if s.state(Stage::Stage1) == StageState::NotStarted {
        r.push("stage_states.stage1", Rule::StateContent, "a scenario exists only once stage 1 is drafted");
    }
    let stage3_reviewable =
        matches!(s.state(Stage::Stage3), StageState::PendingReview | StageState::Approved);
    if stage3_reviewable {
        if s.narrative.is_none() {
            r.push("narrative", Rule::StateContent, format!("required when stage 3 is {}", s.state(Stage::Stage3)));
        }
        if s.evaluation_objective.is_none() {
            r.push(
                "evaluation_objective",
                Rule::StateContent,
                format!("required when stage 3 is {}", s.state(Stage::Stage3)),
            );
        }
    }
}

fn revision_rules(s: &Scenario, r: &mut ValidationReport) {
    for (pos, rev) in s.revisions.iter().enumerate() {
        let field = format!("revisions[{pos}]");
        if rev.index != pos as u64 {
            r.push(
                format!("{field}.index"),
                Rule::RevisionSequence,
                format!("index {} where {pos} expected", rev.index),
            );
        }
        if rev.payload.stage() != rev.stage {
            r.push(format!("{field}.payload"), Rule::PayloadStage, "payload belongs to a different stage");
        }
        match (rev.origin, &rev.prompt_fingerprint) {
            (RevisionOrigin::Generated, None) => {
                r.push(format!("{field}.prompt_fingerprint"), Rule::Fingerprint, "generated revision lacks a fingerprint")
            }
            (RevisionOrigin::HumanEdited, Some(_)) => r.push(
                format!("{field}.prompt_fingerprint"),
                Rule::Fingerprint,
                "human edits carry no prompt fingerprint",
            ),
            _ => {}
        }
    }
}

/// [`validate_scenario`] plus the cross-document checks against the parent use case.
/// `parent` is `None` when the referenced use case could not be found.
pub fn validate_scenario_with_parent(
    s: &Scenario,
    taxonomy: &RiskTaxonomy,
    parent: Option<&UseCaseWorksheet>,
) -> ValidationReport {
    let mut r = validate_scenario(s, taxonomy);
    match parent {
        None => r.push(
            "use_case_id",
            Rule::UnresolvedReference,
            format!("use case '{}' does not exist", s.use_case_id),
        ),
        Some(p) if p.id != s.use_case_id => r.push(
            "use_case_id",
            Rule::UnresolvedReference,
            format!("scenario references '{}' but was checked against '{}'", s.use_case_id, p.id),
        ),
        Some(p) if p.sector != s.sector => r.push(
            "sector",
            Rule::SectorMismatch,
            format!("sector '{}' differs from the use case sector '{}'", s.sector, p.sector),
        ),
        Some(_) => {}
    }
    r
}
