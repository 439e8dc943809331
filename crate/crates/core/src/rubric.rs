//! Readiness rubric: automatic completeness checks plus human scores per category.
//!
//! The weighted score is computed in exact rational arithmetic. Weights are read as
//! binary floats and converted without rounding, so the reported fraction is the
//! exact value of `Σ w·s / (scale_max·Σ w)` for the weights as stored.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, Document, ParseError, ParseMode};
use crate::schema::{Extra, Scenario, ScenarioId, Timestamp};
use crate::taxonomy::RiskTaxonomy;

pub const DEFAULT_RUBRIC_JSON: &str = include_str!("../data/rubric/default.json");

/// Every autocheck id the engine knows how to run.
pub const AUTOCHECKS: [&str; 8] = [
    "narrative_present",
    "narrative_length",
    "direct_users_present",
    "indirect_users_present",
    "benefits_present",
    "risks_present",
    "kpis_present",
    "risk_categories_present",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RubricCategory {
    pub id: String,
    pub name: String,
    pub guiding_questions: Vec<String>,
    #[serde(default)]
    pub autochecks: Vec<String>,
}

fn default_scale() -> u32 {
    5
}

fn default_threshold() -> f64 {
    0.7
}

fn default_narrative_min() -> usize {
    400
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RubricDefinition {
    pub categories: Vec<RubricCategory>,
    #[serde(default = "default_scale")]
    pub scale_max: u32,
    /// Missing entries weigh 1.0.
    #[serde(default)]
    pub weights: BTreeMap<String, f64>,
    #[serde(default = "default_threshold")]
    pub readiness_threshold: f64,
    #[serde(default)]
    pub mandatory_autochecks: Vec<String>,
    #[serde(default = "default_narrative_min")]
    pub narrative_min_chars: usize,
}

impl Document for RubricDefinition {}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RubricError {
    #[error("invalid rubric: {0}")]
    Invalid(String),
    #[error("unknown rubric category: {0}")]
    UnknownCategory(String),
    #[error("score {score} for {category} is outside 1..={max}")]
    ScoreOutOfRange { category: String, score: u32, max: u32 },
    #[error("malformed rubric: {0}")]
    Parse(#[from] ParseError),
    #[error("cannot read rubric file {path}: {detail}")]
    Io { path: String, detail: String },
}

impl RubricDefinition {
    /// The shipped eight-category rubric with equal weights.
    pub fn default_rubric() -> Self {
        Self::from_json(DEFAULT_RUBRIC_JSON.as_bytes()).expect("shipped rubric is valid")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, RubricError> {
        let r: RubricDefinition = codec::parse(bytes, ParseMode::Strict)?;
        r.check()?;
        Ok(r)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RubricError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)
            .map_err(|e| RubricError::Io { path: path.display().to_string(), detail: e.to_string() })?;
        Self::from_json(&bytes)
    }

    pub fn check(&self) -> Result<(), RubricError> {
        let bad = |m: String| Err(RubricError::Invalid(m));
        if self.categories.is_empty() {
            return bad("at least one category is required".into());
        }
        if self.scale_max < 2 {
            return bad(format!("scale_max must be at least 2, got {}", self.scale_max));
        }
        if !(0.0..=1.0).contains(&self.readiness_threshold) {
            return bad(format!("readiness_threshold {} is outside [0, 1]", self.readiness_threshold));
        }
        let mut ids = BTreeSet::new();
        for c in &self.categories {
            if c.id.trim().is_empty() || c.name.trim().is_empty() {
                return bad("category id and name must not be empty".into());
            }
            if !ids.insert(c.id.as_str()) {
                return bad(format!("duplicate category id {}", c.id));
            }
            if !c.guiding_questions.iter().any(|q| !q.trim().is_empty()) {
                return bad(format!("category {} has no guiding question", c.id));
            }
            if let Some(a) = c.autochecks.iter().find(|a| !AUTOCHECKS.contains(&a.as_str())) {
                return bad(format!("category {} names unknown autocheck {a}", c.id));
            }
        }
        for (id, w) in &self.weights {
            if !ids.contains(id.as_str()) {
                return bad(format!("weight given for unknown category {id}"));
            }
            if !w.is_finite() || *w < 0.0 {
                return bad(format!("weight for {id} must be a non-negative number"));
            }
        }
        if let Some(a) = self.mandatory_autochecks.iter().find(|a| !AUTOCHECKS.contains(&a.as_str())) {
            return bad(format!("unknown mandatory autocheck {a}"));
        }
        Ok(())
    }

    pub fn weight(&self, category_id: &str) -> f64 {
        self.weights.get(category_id).copied().unwrap_or(1.0)
    }

    pub fn category(&self, id: &str) -> Option<&RubricCategory> {
        self.categories.iter().find(|c| c.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoFinding {
    pub check: String,
    pub message: String,
}

/// Runs one autocheck; `Some(message)` when it fails.
pub fn run_check(check: &str, s: &Scenario, taxonomy: &RiskTaxonomy, rubric: &RubricDefinition) -> Option<String> {
    let narrative = s.narrative.as_deref().unwrap_or("").trim();
    match check {
        "narrative_present" if narrative.is_empty() => Some("narrative is absent".into()),
        "narrative_length" if narrative.chars().count() < rubric.narrative_min_chars => Some(format!(
            "narrative has {} characters, fewer than {}",
            narrative.chars().count(),
            rubric.narrative_min_chars
        )),
        "direct_users_present" if s.direct_users.is_empty() => Some("no direct users listed".into()),
        "indirect_users_present" if s.indirect_users.is_empty() => Some("no indirect users listed".into()),
        "benefits_present" if s.benefits.is_empty() => Some("no benefits listed".into()),
        "risks_present" if s.risks.is_empty() => Some("no risks listed".into()),
        "kpis_present" if s.kpis.is_empty() => Some("no KPIs or metrics listed".into()),
        "risk_categories_present" => {
            let distinct: BTreeSet<&str> =
                s.risks.iter().map(|r| r.category_id.as_str()).filter(|id| taxonomy.contains(id)).collect();
            distinct.is_empty().then(|| "risks cover no taxonomy category".to_string())
        }
        _ => None,
    }
}

/// Findings per category id, covering every category of the rubric.
pub fn autocheck(s: &Scenario, taxonomy: &RiskTaxonomy, rubric: &RubricDefinition) -> BTreeMap<String, Vec<AutoFinding>> {
    rubric
        .categories
        .iter()
        .map(|c| {
            let findings = c
                .autochecks
                .iter()
                .filter_map(|check| {
                    run_check(check, s, taxonomy, rubric).map(|message| AutoFinding { check: check.clone(), message })
                })
                .collect();
            (c.id.clone(), findings)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Ready,
    NotReady,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryResult {
    pub auto_findings: Vec<AutoFinding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_score: Option<u32>,
    #[serde(default)]
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubricAssessment {
    /// Assigned when the assessment is persisted.
    #[serde(default)]
    pub id: String,
    pub scenario_id: ScenarioId,
    pub per_category: BTreeMap<String, CategoryResult>,
    pub weighted_score: f64,
    /// The exact score as `numerator/denominator`.
    pub weighted_score_exact: String,
    pub verdict: Verdict,
    pub mandatory_failures: Vec<String>,
    pub unscored: Vec<String>,
    pub assessed_by: String,
    pub timestamp: Timestamp,
    #[serde(flatten)]
    pub extra: Extra,
}

impl Document for RubricAssessment {
    fn unknown_fields(&self) -> Vec<String> {
        self.extra.keys().cloned().collect()
    }
}

/// Human input for one category.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanInput {
    pub score: Option<u32>,
    #[serde(default)]
    pub notes: String,
}

fn exact(x: f64) -> BigRational {
    // weights are validated finite
    BigRational::from_float(x).unwrap_or_else(BigRational::zero)
}

/// `Σ w·s / (scale_max·Σ w)` over scored categories, exactly; zero when no
/// scored category carries weight.
pub fn weighted_score(rubric: &RubricDefinition, scores: &BTreeMap<String, u32>) -> BigRational {
    let mut num = BigRational::zero();
    let mut den = BigRational::zero();
    for c in &rubric.categories {
        if let Some(&s) = scores.get(&c.id) {
            let w = exact(rubric.weight(&c.id));
            num += &w * BigRational::from_integer(BigInt::from(s));
            den += w;
        }
    }
    if den.is_zero() {
        return BigRational::zero();
    }
    num / (den * BigRational::from_integer(BigInt::from(rubric.scale_max)))
}

pub fn assess(
    s: &Scenario,
    taxonomy: &RiskTaxonomy,
    rubric: &RubricDefinition,
    input: &BTreeMap<String, HumanInput>,
    assessed_by: &str,
    now: Timestamp,
) -> Result<RubricAssessment, RubricError> {
    rubric.check()?;
    let mut scores = BTreeMap::new();
    for (id, h) in input {
        if rubric.category(id).is_none() {
            return Err(RubricError::UnknownCategory(id.clone()));
        }
        if let Some(score) = h.score {
            if score < 1 || score > rubric.scale_max {
                return Err(RubricError::ScoreOutOfRange { category: id.clone(), score, max: rubric.scale_max });
            }
            scores.insert(id.clone(), score);
        }
    }
    let mut auto = autocheck(s, taxonomy, rubric);
    let per_category: BTreeMap<String, CategoryResult> = rubric
        .categories
        .iter()
        .map(|c| {
            let h = input.get(&c.id).cloned().unwrap_or_default();
            let result = CategoryResult {
                auto_findings: auto.remove(&c.id).unwrap_or_default(),
                human_score: h.score,
                notes: h.notes,
            };
            (c.id.clone(), result)
        })
        .collect();
    let mandatory_failures: Vec<String> = rubric
        .mandatory_autochecks
        .iter()
        .filter(|check| run_check(check, s, taxonomy, rubric).is_some())
        .cloned()
        .collect();
    let unscored: Vec<String> =
        rubric.categories.iter().filter(|c| !scores.contains_key(&c.id)).map(|c| c.id.clone()).collect();
    let score = weighted_score(rubric, &scores);
    let ready = score >= exact(rubric.readiness_threshold) && mandatory_failures.is_empty() && unscored.is_empty();
    Ok(RubricAssessment {
        id: String::new(),
        scenario_id: s.id.clone(),
        per_category,
        weighted_score: score.to_f64().unwrap_or(0.0),
        weighted_score_exact: format!("{}/{}", score.numer(), score.denom()),
        verdict: if ready { Verdict::Ready } else { Verdict::NotReady },
        mandatory_failures,
        unscored,
        assessed_by: assessed_by.to_string(),
        timestamp: now,
        extra: Extra::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::schema::{TaggedRisk, UserDescriptor};

    fn full_scenario() -> Scenario {
        let w = fixtures::worksheet("uc-cyber-defense-enablement").unwrap();
        let mut s = Scenario::draft(
            "sc-x".into(),
            &w,
            "Malware Analysis and Sandboxing",
            "An assistant summarises sandbox detonation results for analysts.",
            Timestamp::from_unix_micros(0),
        );
        s.direct_users = vec![UserDescriptor::new("Analyst", "")];
        s.indirect_users = vec![UserDescriptor::new("Customers", "")];
        s.intended_outcomes = vec!["Faster triage".into()];
        s.benefits = vec!["Less manual work".into()];
        s.risks = vec![TaggedRisk::new("confabulation", "Invented indicators")];
        s.kpis = vec!["Time to verdict".into()];
        s.narrative = Some("n".repeat(400));
        s.evaluation_objective = Some("Probe for invented indicators.".into());
        s
    }

    fn all(score: u32) -> BTreeMap<String, HumanInput> {
        RubricDefinition::default_rubric()
            .categories
            .iter()
            .map(|c| (c.id.clone(), HumanInput { score: Some(score), notes: String::new() }))
            .collect()
    }

    #[test]
    fn default_rubric_shape() {
        let r = RubricDefinition::default_rubric();
        assert_eq!(r.categories.len(), 8);
        assert_eq!(r.categories[0].name, "Use Case Relevance and Clarity");
        assert!(r.categories.iter().all(|c| c.guiding_questions.len() >= 2));
        assert!(r.categories.iter().all(|c| r.weight(&c.id) == 1.0));
    }

    #[test]
    fn missing_narrative_is_flagged_under_narrative_completeness() {
        let mut s = full_scenario();
        s.narrative = None;
        let f = autocheck(&s, &RiskTaxonomy::default_taxonomy(), &RubricDefinition::default_rubric());
        let flagged: Vec<_> = f.iter().filter(|(_, v)| !v.is_empty()).map(|(k, _)| k.as_str()).collect();
        assert_eq!(flagged, ["scenario-narrative-completeness"]);
    }

    #[test]
    fn full_scenario_has_no_findings() {
        let f = autocheck(&full_scenario(), &RiskTaxonomy::default_taxonomy(), &RubricDefinition::default_rubric());
        assert!(f.values().all(Vec::is_empty));
    }

    #[test]
    fn no_risks_flags_impact_and_landscape() {
        let mut s = full_scenario();
        s.risks.clear();
        let f = autocheck(&s, &RiskTaxonomy::default_taxonomy(), &RubricDefinition::default_rubric());
        let flagged: Vec<_> = f.iter().filter(|(_, v)| !v.is_empty()).map(|(k, _)| k.as_str()).collect();
        assert_eq!(flagged, ["impact-assessment", "risk-landscape-transparency"]);
    }

    #[test]
    fn all_fives_ready_all_threes_not() {
        let (t, r, s) = (RiskTaxonomy::default_taxonomy(), RubricDefinition::default_rubric(), full_scenario());
        let a = assess(&s, &t, &r, &all(5), "r", Timestamp::from_unix_micros(0)).unwrap();
        assert_eq!((a.weighted_score, a.verdict), (1.0, Verdict::Ready));
        let a = assess(&s, &t, &r, &all(3), "r", Timestamp::from_unix_micros(0)).unwrap();
        assert_eq!(a.weighted_score_exact, "3/5");
        assert_eq!(a.verdict, Verdict::NotReady);
    }

    #[test]
    fn mandatory_failure_blocks_ready() {
        let (t, r, mut s) = (RiskTaxonomy::default_taxonomy(), RubricDefinition::default_rubric(), full_scenario());
        s.kpis.clear();
        let a = assess(&s, &t, &r, &all(5), "r", Timestamp::from_unix_micros(0)).unwrap();
        assert_eq!(a.mandatory_failures, ["kpis_present"]);
        assert_eq!(a.verdict, Verdict::NotReady);
    }

    #[test]
    fn unscored_category_blocks_ready() {
        let (t, r, s) = (RiskTaxonomy::default_taxonomy(), RubricDefinition::default_rubric(), full_scenario());
        let mut input = all(5);
        input.remove("attacker-modeling");
        let a = assess(&s, &t, &r, &input, "r", Timestamp::from_unix_micros(0)).unwrap();
        assert_eq!(a.weighted_score, 1.0);
        assert_eq!(a.unscored, ["attacker-modeling"]);
        assert_eq!(a.verdict, Verdict::NotReady);
    }

    #[test]
    fn input_errors() {
        let (t, r, s) = (RiskTaxonomy::default_taxonomy(), RubricDefinition::default_rubric(), full_scenario());
        let mut input = all(6);
        assert!(matches!(
            assess(&s, &t, &r, &input, "r", Timestamp::from_unix_micros(0)),
            Err(RubricError::ScoreOutOfRange { score: 6, .. })
        ));
        input = BTreeMap::from([("nope".to_string(), HumanInput { score: Some(1), notes: String::new() })]);
        assert_eq!(
            assess(&s, &t, &r, &input, "r", Timestamp::from_unix_micros(0)).unwrap_err(),
            RubricError::UnknownCategory("nope".into())
        );
    }

    #[test]
    fn definition_checks() {
        let mut r = RubricDefinition::default_rubric();
        r.scale_max = 1;
        assert!(r.check().is_err());
        let mut r = RubricDefinition::default_rubric();
        r.weights.insert("ghost".into(), 1.0);
        assert!(r.check().is_err());
        let mut r = RubricDefinition::default_rubric();
        r.weights.insert("attacker-modeling".into(), -1.0);
        assert!(r.check().is_err());
        let mut r = RubricDefinition::default_rubric();
        r.categories.clear();
        assert!(r.check().is_err());
    }

    #[test]
    fn zero_weights_give_zero() {
        let mut r = RubricDefinition::default_rubric();
        for c in r.categories.clone() {
            r.weights.insert(c.id, 0.0);
        }
        let scores = all(4).into_iter().map(|(k, v)| (k, v.score.unwrap())).collect();
        assert!(weighted_score(&r, &scores).is_zero());
    }
}
