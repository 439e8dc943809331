//! Canonical stage output formats and their parsers.
//!
//! Stage 1 is a numbered list of `TITLE:` / `DESCRIPTION:` pairs, stage 2 is six
//! labelled sections with one `- ` item per line, stage 3 is a `NARRATIVE:` block
//! followed by an `EVALUATION OBJECTIVE:` block. Parsers never panic: bad items land
//! in `rejects` and unusable output becomes [`MalformedOutput`], which keeps the raw
//! text for audit.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{check_description, check_title, Stage, Stage2Elements, TaggedRisk, UserDescriptor};
use crate::taxonomy::RiskTaxonomy;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("malformed {stage} output: {part}: {reason}")]
pub struct MalformedOutput {
    pub stage: Stage,
    /// The missing or unusable part, e.g. `kpis` or `narrative`.
    pub part: String,
    pub reason: String,
    pub raw: String,
}

/// An output item that was dropped, with the rule it broke.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub item: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage1Parse {
    pub pairs: Vec<(String, String)>,
    pub rejects: Vec<Reject>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage2Parse {
    pub elements: Stage2Elements,
    pub rejects: Vec<Reject>,
}

fn malformed(stage: Stage, part: &str, reason: impl Into<String>, raw: &str) -> MalformedOutput {
    MalformedOutput { stage, part: part.into(), reason: reason.into(), raw: raw.into() }
}

// Drops list markers, numbering and markdown emphasis around a line.
fn strip_marker(line: &str) -> &str {
    let mut s = line.trim();
    s = s.trim_start_matches('#').trim_start();
    if let Some(rest) = s.strip_prefix("- ").or_else(|| s.strip_prefix("* ")).or_else(|| s.strip_prefix("• ")) {
        s = rest.trim_start();
    } else {
        let digits = s.bytes().take_while(u8::is_ascii_digit).count();
        if digits > 0 && matches!(s.as_bytes().get(digits), Some(b'.') | Some(b')')) {
            s = s[digits + 1..].trim_start();
        }
    }
    s.trim_matches('*').trim()
}

/// Splits `LABEL: rest` when the label matches case-insensitively.
fn labelled<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let s = strip_marker(line);
    let (head, rest) = s.split_once(':')?;
    head.trim().trim_matches('*').trim().eq_ignore_ascii_case(label).then(|| rest.trim().trim_start_matches('*').trim())
}

pub fn format_stage1(pairs: &[(String, String)]) -> String {
    let mut out = String::new();
    for (i, (title, description)) in pairs.iter().enumerate() {
        let _ = writeln!(out, "{}. TITLE: {title}", i + 1);
        let _ = writeln!(out, "   DESCRIPTION: {description}");
    }
    out
}

pub fn parse_stage1(raw: &str) -> Result<Stage1Parse, MalformedOutput> {
    let mut candidates: Vec<(String, Option<String>)> = Vec::new();
    let mut rejects = Vec::new();
    let mut in_description = false;
    for line in raw.lines() {
        if let Some(title) = labelled(line, "title") {
            candidates.push((title.to_string(), None));
            in_description = false;
        } else if let Some(desc) = labelled(line, "description") {
            match candidates.last_mut() {
                Some((_, d @ None)) => {
                    *d = Some(desc.to_string());
                    in_description = true;
                }
                _ => rejects.push(Reject { item: desc.to_string(), reason: "description without a title".into() }),
            }
        } else if in_description && !line.trim().is_empty() {
            // wrapped description line
            if let Some((_, Some(d))) = candidates.last_mut() {
                d.push(' ');
                d.push_str(line.trim());
            }
        } else if line.trim().is_empty() {
            in_description = false;
        }
    }

    let mut pairs = Vec::new();
    for (title, description) in candidates {
        let Some(description) = description else {
            rejects.push(Reject { item: title, reason: "title without a description".into() });
            continue;
        };
        let mut problems: Vec<String> = check_title("title", &title)
            .into_iter()
            .chain(check_description("description", &description))
            .map(|(field, _, msg)| format!("{field} {msg}"))
            .collect();
        if problems.is_empty() {
            pairs.push((title, description));
        } else {
            problems.dedup();
            rejects.push(Reject { item: format!("{title}: {description}"), reason: problems.join("; ") });
        }
    }
    if pairs.is_empty() {
        let reason = if rejects.is_empty() {
            "no title/description pairs found".to_string()
        } else {
            format!("no usable pairs ({} rejected: {})", rejects.len(), rejects[0].reason)
        };
        return Err(malformed(Stage::Stage1, "pairs", reason, raw));
    }
    Ok(Stage1Parse { pairs, rejects })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Group {
    DirectUsers,
    IndirectUsers,
    IntendedOutcomes,
    Benefits,
    Risks,
    Kpis,
}

const GROUPS: [(Group, &str, &str); 6] = [
    (Group::DirectUsers, "direct_users", "DIRECT USERS"),
    (Group::IndirectUsers, "indirect_users", "INDIRECT USERS"),
    (Group::IntendedOutcomes, "intended_outcomes", "INTENDED OUTCOMES"),
    (Group::Benefits, "benefits", "BENEFITS"),
    (Group::Risks, "risks", "RISKS"),
    (Group::Kpis, "kpis", "KPIS AND METRICS"),
];

fn header(line: &str) -> Option<Group> {
    let s = line.trim().trim_start_matches('#').trim().trim_matches('*').trim();
    let name = s.strip_suffix(':')?.trim().trim_matches('*').trim().to_ascii_lowercase();
    let g = match name.as_str() {
        "direct users" | "direct user" => Group::DirectUsers,
        "indirect users" | "indirect user" => Group::IndirectUsers,
        "intended outcomes" | "outcomes" => Group::IntendedOutcomes,
        "benefits" | "positive impacts/benefits" | "positive impacts" => Group::Benefits,
        "risks" | "negative impacts/risks" | "negative impacts" => Group::Risks,
        "kpis and metrics" | "kpis & metrics" | "kpis" | "metrics" => Group::Kpis,
        _ => return None,
    };
    Some(g)
}

fn item(line: &str) -> Option<&str> {
    let t = line.trim();
    let is_item = t.starts_with("- ")
        || t.starts_with("* ")
        || t.starts_with("• ")
        || {
            let digits = t.bytes().take_while(u8::is_ascii_digit).count();
            digits > 0 && matches!(t.as_bytes().get(digits), Some(b'.') | Some(b')'))
        };
    is_item.then(|| strip_marker(line))
}

fn user(text: &str) -> UserDescriptor {
    match text.split_once('|') {
        Some((role, chars)) => UserDescriptor::new(role.trim(), chars.trim()),
        None => UserDescriptor::new(text.trim(), ""),
    }
}

pub fn format_stage2(e: &Stage2Elements) -> String {
    let mut out = String::new();
    let users = |out: &mut String, label: &str, list: &[UserDescriptor]| {
        let _ = writeln!(out, "{label}:");
        for u in list {
            if u.characteristics.is_empty() {
                let _ = writeln!(out, "- {}", u.role);
            } else {
                let _ = writeln!(out, "- {} | {}", u.role, u.characteristics);
            }
        }
    };
    let texts = |out: &mut String, label: &str, list: &[String]| {
        let _ = writeln!(out, "{label}:");
        for t in list {
            let _ = writeln!(out, "- {t}");
        }
    };
    users(&mut out, "DIRECT USERS", &e.direct_users);
    users(&mut out, "INDIRECT USERS", &e.indirect_users);
    texts(&mut out, "INTENDED OUTCOMES", &e.intended_outcomes);
    texts(&mut out, "BENEFITS", &e.benefits);
    let _ = writeln!(out, "RISKS:");
    for r in &e.risks {
        let _ = writeln!(out, "- [{}] {}", r.category_id, r.text);
    }
    texts(&mut out, "KPIS AND METRICS", &e.kpis);
    out
}

fn tagged_risk(text: &str, taxonomy: &RiskTaxonomy) -> Result<TaggedRisk, String> {
    let rest = text.trim();
    let Some(inner) = rest.strip_prefix('[') else {
        return Err("risk is not tagged with a [category id]".into());
    };
    let Some((id, body)) = inner.split_once(']') else {
        return Err("unterminated category tag".into());
    };
    let id = id.trim();
    let body = body.trim();
    if body.is_empty() {
        return Err("risk text is empty".into());
    }
    if !taxonomy.contains(id) {
        return Err(format!("unknown risk category '{id}'"));
    }
    Ok(TaggedRisk::new(id, body))
}

pub fn parse_stage2(raw: &str, taxonomy: &RiskTaxonomy) -> Result<Stage2Parse, MalformedOutput> {
    let mut e = Stage2Elements::default();
    let mut seen = Vec::new();
    let mut rejects = Vec::new();
    let mut current: Option<Group> = None;
    for line in raw.lines() {
        if let Some(g) = header(line) {
            current = Some(g);
            if !seen.contains(&g) {
                seen.push(g);
            }
            continue;
        }
        let Some(text) = item(line) else { continue };
        let Some(group) = current else {
            rejects.push(Reject { item: text.into(), reason: "item outside any section".into() });
            continue;
        };
        if text.is_empty() {
            continue;
        }
        match group {
            Group::DirectUsers | Group::IndirectUsers => {
                let u = user(text);
                if u.role.is_empty() {
                    rejects.push(Reject { item: text.into(), reason: "user role is empty".into() });
                } else if group == Group::DirectUsers {
                    e.direct_users.push(u);
                } else {
                    e.indirect_users.push(u);
                }
            }
            Group::IntendedOutcomes => e.intended_outcomes.push(text.into()),
            Group::Benefits => e.benefits.push(text.into()),
            Group::Kpis => e.kpis.push(text.into()),
            Group::Risks => match tagged_risk(text, taxonomy) {
                Ok(r) => e.risks.push(r),
                Err(reason) => rejects.push(Reject { item: text.into(), reason }),
            },
        }
    }
    for (group, key, label) in GROUPS {
        let empty = match group {
            Group::DirectUsers => e.direct_users.is_empty(),
            Group::IndirectUsers => e.indirect_users.is_empty(),
            Group::IntendedOutcomes => e.intended_outcomes.is_empty(),
            Group::Benefits => e.benefits.is_empty(),
            Group::Risks => e.risks.is_empty(),
            Group::Kpis => e.kpis.is_empty(),
        };
        if !seen.contains(&group) {
            return Err(malformed(Stage::Stage2, key, format!("section {label} is missing"), raw));
        }
        if empty {
            return Err(malformed(Stage::Stage2, key, format!("section {label} has no usable items"), raw));
        }
    }
    Ok(Stage2Parse { elements: e, rejects })
}

pub fn format_stage3(narrative: &str, objective: &str) -> String {
    format!("NARRATIVE:\n{narrative}\n\nEVALUATION OBJECTIVE:\n{objective}\n")
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Block {
    Narrative,
    Objective,
}

fn block_header(line: &str) -> Option<(Block, &str)> {
    let s = line.trim().trim_start_matches('#').trim();
    let (head, rest) = s.split_once(':')?;
    let head = head.trim().trim_matches('*').trim().to_ascii_lowercase();
    let rest = rest.trim_start_matches('*').trim();
    match head.as_str() {
        "narrative" | "scenario narrative" => Some((Block::Narrative, rest)),
        "evaluation objective" | "objective" => Some((Block::Objective, rest)),
        _ => None,
    }
}

/// Returns `(narrative, evaluation_objective)`.
pub fn parse_stage3(raw: &str) -> Result<(String, String), MalformedOutput> {
    let mut narrative: Option<Vec<&str>> = None;
    let mut objective: Option<Vec<&str>> = None;
    let mut current: Option<Block> = None;
    for line in raw.lines() {
        if let Some((block, inline)) = block_header(line) {
            let slot = match block {
                Block::Narrative => &mut narrative,
                Block::Objective => &mut objective,
            };
            let lines = slot.get_or_insert_with(Vec::new);
            if !inline.is_empty() {
                lines.push(inline);
            }
            current = Some(block);
            continue;
        }
        match current {
            Some(Block::Narrative) => narrative.as_mut().expect("opened").push(line),
            Some(Block::Objective) => objective.as_mut().expect("opened").push(line),
            None => {}
        }
    }
    let join = |lines: Option<Vec<&str>>| lines.map(|l| l.join("\n").trim().to_string()).unwrap_or_default();
    let narrative = join(narrative);
    let objective = join(objective);
    if narrative.is_empty() {
        return Err(malformed(Stage::Stage3, "narrative", "narrative block is missing or empty", raw));
    }
    if objective.is_empty() {
        return Err(malformed(
            Stage::Stage3,
            "evaluation_objective",
            "evaluation objective block is missing or empty",
            raw,
        ));
    }
    Ok((narrative, objective))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(t: &str, d: &str) -> (String, String) {
        (t.to_string(), d.to_string())
    }

    #[test]
    fn stage1_inverts_format() {
        let pairs = vec![
            pair("Threat Intelligence Correlation", "An assistant links threat feeds to internal alerts."),
            pair("Malware Analysis and Sandboxing", "An assistant summarises sandbox detonation reports for analysts."),
            pair("Phishing Triage", "Does the assistant flag phishing reports correctly?"),
        ];
        let parsed = parse_stage1(&format_stage1(&pairs)).unwrap();
        assert_eq!(parsed.pairs, pairs);
        assert!(parsed.rejects.is_empty());
    }

    #[test]
    fn stage1_empty_is_malformed() {
        let err = parse_stage1("").unwrap_err();
        assert_eq!(err.stage, Stage::Stage1);
        assert_eq!(err.raw, "");
    }

    #[test]
    fn stage1_rejects_two_sentence_description() {
        let raw = format_stage1(&[
            pair("A", "First valid description."),
            pair("B", "Two sentences here. Second one."),
            pair("C", "Another valid description."),
        ]);
        let parsed = parse_stage1(&raw).unwrap();
        assert_eq!(parsed.pairs.len(), 2);
        assert_eq!(parsed.rejects.len(), 1);
        assert!(parsed.rejects[0].reason.contains("one sentence"), "{:?}", parsed.rejects);
    }

    #[test]
    fn stage1_tolerates_markdown_and_wrapping() {
        let raw = "Here you go:\n\n1) **Title:** Alert Triage\n   **Description:** An assistant ranks alerts\n   by severity for analysts.\n\n2. TITLE: Orphan\n";
        let parsed = parse_stage1(raw).unwrap();
        assert_eq!(parsed.pairs, vec![pair("Alert Triage", "An assistant ranks alerts by severity for analysts.")]);
        assert_eq!(parsed.rejects[0].reason, "title without a description");
    }

    fn sample_elements() -> Stage2Elements {
        Stage2Elements {
            direct_users: vec![UserDescriptor::new("SOC analyst", "Tier 2, triages alerts")],
            indirect_users: vec![UserDescriptor::new("Customers", "")],
            intended_outcomes: vec!["Faster correlation of indicators".into()],
            benefits: vec!["Less manual lookup".into(), "Broader context".into()],
            risks: vec![
                TaggedRisk::new("confabulation", "Invented indicators of compromise"),
                TaggedRisk::new("information-security", "Prompt injection through threat feeds"),
            ],
            kpis: vec!["Mean time to triage".into()],
        }
    }

    #[test]
    fn stage2_inverts_format() {
        let t = RiskTaxonomy::default_taxonomy();
        let e = sample_elements();
        let parsed = parse_stage2(&format_stage2(&e), &t).unwrap();
        assert_eq!(parsed.elements, e);
        assert!(parsed.rejects.is_empty());
    }

    #[test]
    fn stage2_missing_kpis() {
        let t = RiskTaxonomy::default_taxonomy();
        let text = format_stage2(&sample_elements());
        let cut = &text[..text.find("KPIS AND METRICS:").unwrap()];
        let err = parse_stage2(cut, &t).unwrap_err();
        assert_eq!(err.part, "kpis");
        assert_eq!(err.raw, cut);
    }

    #[test]
    fn stage2_unknown_category_lands_in_rejects() {
        let t = RiskTaxonomy::default_taxonomy();
        let text = format_stage2(&sample_elements())
            .replace("RISKS:\n", "RISKS:\n- [made-up] Something odd\n- untagged risk line\n");
        let parsed = parse_stage2(&text, &t).unwrap();
        assert_eq!(parsed.elements.risks, sample_elements().risks);
        let reasons: Vec<_> = parsed.rejects.iter().map(|r| r.reason.as_str()).collect();
        assert_eq!(reasons, ["unknown risk category 'made-up'", "risk is not tagged with a [category id]"]);
    }

    #[test]
    fn stage2_all_risks_rejected_is_malformed() {
        let t = RiskTaxonomy::default_taxonomy();
        let mut e = sample_elements();
        e.risks = vec![TaggedRisk::new("nope", "x")];
        assert_eq!(parse_stage2(&format_stage2(&e), &t).unwrap_err().part, "risks");
    }

    #[test]
    fn stage2_header_variants() {
        let t = RiskTaxonomy::default_taxonomy();
        let raw = "## Direct Users:\n* Analyst\n**Indirect Users:**\n1. Customers | retail\nOutcomes:\n- o\nPositive Impacts/Benefits:\n- b\nNegative Impacts/Risks:\n- [data-privacy] leak\nKPIs:\n- k\n";
        let e = parse_stage2(raw, &t).unwrap().elements;
        assert_eq!(e.direct_users[0].role, "Analyst");
        assert_eq!(e.indirect_users[0], UserDescriptor::new("Customers", "retail"));
        assert_eq!(e.kpis, ["k"]);
    }

    #[test]
    fn stage3_objective_only() {
        let err = parse_stage3("EVALUATION OBJECTIVE:\nProbe it.\n").unwrap_err();
        assert_eq!(err.part, "narrative");
        let err = parse_stage3("NARRATIVE:\nStory.\n").unwrap_err();
        assert_eq!(err.part, "evaluation_objective");
    }

    #[test]
    fn stage3_inline_headers() {
        let (n, o) = parse_stage3("Narrative: A story\ncontinues here.\nObjective: Probe it.").unwrap();
        assert_eq!(n, "A story\ncontinues here.");
        assert_eq!(o, "Probe it.");
    }

    fn block_text() -> impl Strategy<Value = String> {
        "[a-z][a-z ,\n]{0,80}[a-z.]".prop_map(|s| s.trim().to_string())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn stage3_round_trip(n in block_text(), o in block_text()) {
            prop_assert_eq!(parse_stage3(&format_stage3(&n, &o)).unwrap(), (n, o));
        }

        #[test]
        fn parsers_are_total(raw in "\\PC{0,400}") {
            let t = RiskTaxonomy::default_taxonomy();
            let _ = parse_stage1(&raw);
            let _ = parse_stage2(&raw, &t);
            let _ = parse_stage3(&raw);
        }
    }
}
