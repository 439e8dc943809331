//! Risk taxonomy loading and coverage reporting.
//!
//! The taxonomy is data. The default file ships the generative-AI risk list from
//! NIST AI 600-1; any file with the same shape can replace it.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, Document, ParseError, ParseMode};
use crate::schema::{Scenario, UseCaseId};

pub const DEFAULT_TAXONOMY_JSON: &str = include_str!("../data/taxonomy/nist-ai-600-1.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskCategory {
    pub id: String,
    pub name: String,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskTaxonomy {
    pub source_name: String,
    pub version: String,
    pub categories: Vec<RiskCategory>,
}

impl Document for RiskTaxonomy {}

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("cannot read taxonomy file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed taxonomy: {0}")]
    Parse(#[from] ParseError),
    #[error("empty taxonomy")]
    Empty,
    #[error("duplicate category id: {0}")]
    DuplicateId(String),
    #[error("category {index}: {field} must not be empty")]
    BlankField { index: usize, field: &'static str },
    #[error("taxonomy {0} must not be empty")]
    BlankHeader(&'static str),
}

impl RiskTaxonomy {
    pub fn from_json(bytes: &[u8]) -> Result<Self, TaxonomyError> {
        let t: RiskTaxonomy = codec::parse(bytes, ParseMode::Strict)?;
        t.check()?;
        Ok(t)
    }

    /// The shipped NIST AI 600-1 category list.
    pub fn default_taxonomy() -> Self {
        Self::from_json(DEFAULT_TAXONOMY_JSON.as_bytes()).expect("shipped taxonomy is valid")
    }

    pub fn check(&self) -> Result<(), TaxonomyError> {
        if self.source_name.trim().is_empty() {
            return Err(TaxonomyError::BlankHeader("source_name"));
        }
        if self.version.trim().is_empty() {
            return Err(TaxonomyError::BlankHeader("version"));
        }
        if self.categories.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        let mut seen = HashSet::new();
        for (index, c) in self.categories.iter().enumerate() {
            for (field, value) in [("id", &c.id), ("name", &c.name), ("summary", &c.summary)] {
                if value.trim().is_empty() {
                    return Err(TaxonomyError::BlankField { index, field });
                }
            }
            if !seen.insert(c.id.as_str()) {
                return Err(TaxonomyError::DuplicateId(c.id.clone()));
            }
        }
        Ok(())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.categories.iter().any(|c| c.id == id)
    }

    pub fn category(&self, id: &str) -> Option<&RiskCategory> {
        self.categories.iter().find(|c| c.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.categories.iter().map(|c| c.id.as_str())
    }
}

pub fn load_taxonomy(path: impl AsRef<Path>) -> Result<RiskTaxonomy, TaxonomyError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)
        .map_err(|source| TaxonomyError::Io { path: path.display().to_string(), source })?;
    RiskTaxonomy::from_json(&bytes)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCoverage {
    pub category_id: String,
    pub name: String,
    /// Scenarios with at least one risk tagged with this category.
    pub scenario_count: usize,
    pub below_floor: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub source_name: String,
    pub version: String,
    pub floor: usize,
    pub scenario_count: usize,
    pub scenarios_with_risks: usize,
    /// Corpus-wide counts, in taxonomy order.
    pub categories: Vec<CategoryCoverage>,
    pub per_use_case: BTreeMap<UseCaseId, Vec<CategoryCoverage>>,
}

impl CoverageReport {
    pub fn count(&self, category_id: &str) -> Option<usize> {
        self.categories.iter().find(|c| c.category_id == category_id).map(|c| c.scenario_count)
    }

    pub fn flagged(&self) -> impl Iterator<Item = &CategoryCoverage> {
        self.categories.iter().filter(|c| c.below_floor)
    }
}

fn tally<'a>(
    scenarios: impl Iterator<Item = &'a Scenario>,
    taxonomy: &RiskTaxonomy,
    floor: usize,
) -> Vec<CategoryCoverage> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in scenarios {
        let tagged: BTreeSet<&str> = s.risks.iter().map(|r| r.category_id.as_str()).collect();
        for id in tagged {
            *counts.entry(id).or_default() += 1;
        }
    }
    taxonomy
        .categories
        .iter()
        .map(|c| {
            let n = counts.get(c.id.as_str()).copied().unwrap_or(0);
            CategoryCoverage {
                category_id: c.id.clone(),
                name: c.name.clone(),
                scenario_count: n,
                below_floor: n < floor,
            }
        })
        .collect()
}

/// Per-category scenario counts across the whole list and per use case. Categories
/// with fewer than `floor` scenarios are flagged; a floor of 0 only reports.
pub fn coverage_report(scenarios: &[Scenario], taxonomy: &RiskTaxonomy, floor: usize) -> CoverageReport {
    let mut by_use_case: BTreeMap<UseCaseId, Vec<&Scenario>> = BTreeMap::new();
    for s in scenarios {
        by_use_case.entry(s.use_case_id.clone()).or_default().push(s);
    }
    CoverageReport {
        source_name: taxonomy.source_name.clone(),
        version: taxonomy.version.clone(),
        floor,
        scenario_count: scenarios.len(),
        scenarios_with_risks: scenarios.iter().filter(|s| !s.risks.is_empty()).count(),
        categories: tally(scenarios.iter(), taxonomy, floor),
        per_use_case: by_use_case
            .into_iter()
            .map(|(id, list)| (id, tally(list.into_iter(), taxonomy, floor)))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::schema::{Scenario, TaggedRisk, Timestamp};

    fn taxonomy_json(ids: &[&str]) -> String {
        let cats: Vec<_> = ids
            .iter()
            .map(|id| serde_json::json!({"id": id, "name": format!("Name {id}"), "summary": "s"}))
            .collect();
        serde_json::json!({"source_name": "test", "version": "1", "categories": cats}).to_string()
    }

    #[test]
    fn default_taxonomy_has_unique_ids() {
        let t = RiskTaxonomy::default_taxonomy();
        assert_eq!(t.categories.len(), 12);
        let mut ids: Vec<_> = t.ids().collect();
        ids.sort();
        assert!(ids.windows(2).all(|w| w[0] != w[1]));
    }

    #[test]
    fn empty_taxonomy_rejected() {
        let err = RiskTaxonomy::from_json(taxonomy_json(&[]).as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "empty taxonomy");
    }

    #[test]
    fn duplicate_id_named() {
        let err = RiskTaxonomy::from_json(taxonomy_json(&["cbrn", "data-privacy", "cbrn"]).as_bytes()).unwrap_err();
        assert!(matches!(&err, TaxonomyError::DuplicateId(id) if id == "cbrn"));
        assert!(err.to_string().contains("cbrn"));
    }

    #[test]
    fn missing_file() {
        let err = load_taxonomy("/nonexistent/taxonomy.json").unwrap_err();
        assert!(matches!(err, TaxonomyError::Io { .. }));
    }

    #[test]
    fn loads_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        std::fs::write(&path, taxonomy_json(&["a", "b"])).unwrap();
        assert_eq!(load_taxonomy(&path).unwrap().categories.len(), 2);
    }

    fn scenario_with(ids: &[&str], n: usize) -> Scenario {
        let uc = fixtures::worksheet("uc-cyber-defense-enablement").unwrap();
        let mut s = Scenario::draft(format!("sc-{n}").into(), &uc, "T", "D.", Timestamp::from_unix_micros(0));
        s.risks = ids.iter().map(|id| TaggedRisk::new(*id, "r")).collect();
        s
    }

    #[test]
    fn empty_list_counts_zero() {
        let t = RiskTaxonomy::default_taxonomy();
        let r = coverage_report(&[], &t, 0);
        assert!(r.categories.iter().all(|c| c.scenario_count == 0 && !c.below_floor));
        assert!(r.per_use_case.is_empty());
    }

    #[test]
    fn two_scenarios_tag_one_category() {
        let t = RiskTaxonomy::default_taxonomy();
        let list = [scenario_with(&["confabulation"], 1), scenario_with(&["confabulation"], 2)];
        let r = coverage_report(&list, &t, 0);
        for c in &r.categories {
            assert_eq!(c.scenario_count, if c.category_id == "confabulation" { 2 } else { 0 });
        }
    }

    #[test]
    fn repeated_tag_counts_scenario_once_and_floor_flags() {
        let t = RiskTaxonomy::default_taxonomy();
        let list = [scenario_with(&["data-privacy", "data-privacy"], 1)];
        let r = coverage_report(&list, &t, 1);
        assert_eq!(r.count("data-privacy"), Some(1));
        assert_eq!(r.flagged().count(), 11);
        assert_eq!(r.per_use_case.len(), 1);
    }
}
