//! Summary tables and full scenario documents.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AuditEvent, Store, StoreError};
use crate::schema::{Scenario, Stage, StageState, UseCaseWorksheet, UserDescriptor};

pub const SUMMARY_HEADERS: [&str; 3] = ["Use Case", "Scenario Title", "Scenario Description"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Markdown,
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "md" | "markdown" => Ok(ExportFormat::Markdown),
            other => Err(format!("unknown export format: {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SummaryRow {
    pub use_case: String,
    pub title: String,
    pub description: String,
}

/// Rows for the given scenarios, ordered by use case name then title. Rejected
/// scenarios are dropped unless asked for.
pub fn summary_rows(
    scenarios: &[Scenario],
    use_case_names: &BTreeMap<String, String>,
    include_rejected: bool,
) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = scenarios
        .iter()
        .filter(|s| include_rejected || !s.is_rejected())
        .map(|s| SummaryRow {
            use_case: use_case_names.get(s.use_case_id.as_str()).cloned().unwrap_or_else(|| s.use_case_id.0.clone()),
            title: s.title.clone(),
            description: s.description.clone(),
        })
        .collect();
    rows.sort();
    rows
}

fn md_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '|' => out.push_str("\\|"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn md_cells(line: &str) -> Result<Vec<String>, String> {
    let inner = line
        .trim_end()
        .strip_prefix("| ")
        .and_then(|l| l.strip_suffix(" |"))
        .ok_or_else(|| format!("not a table row: {line}"))?;
    let mut cells = vec![String::new()];
    let mut chars = inner.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some('\\') => cells.last_mut().unwrap().push('\\'),
                Some('|') => cells.last_mut().unwrap().push('|'),
                Some('n') => cells.last_mut().unwrap().push('\n'),
                Some('r') => cells.last_mut().unwrap().push('\r'),
                other => return Err(format!("bad escape \\{}", other.map(String::from).unwrap_or_default())),
            },
            ' ' if chars.peek() == Some(&'|') => {
                chars.next();
                if chars.next() != Some(' ') {
                    return Err(format!("malformed cell separator in: {line}"));
                }
                cells.push(String::new());
            }
            c => cells.last_mut().unwrap().push(c),
        }
    }
    Ok(cells)
}

pub fn render_summary(rows: &[SummaryRow], format: ExportFormat) -> Vec<u8> {
    match format {
        ExportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
            w.write_record(SUMMARY_HEADERS).expect("in-memory write");
            for r in rows {
                w.write_record([&r.use_case, &r.title, &r.description]).expect("in-memory write");
            }
            w.into_inner().expect("in-memory write")
        }
        ExportFormat::Markdown => {
            let mut out = format!("| {} |\n| --- | --- | --- |\n", SUMMARY_HEADERS.join(" | "));
            for r in rows {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} |",
                    md_escape(&r.use_case),
                    md_escape(&r.title),
                    md_escape(&r.description)
                );
            }
            out.into_bytes()
        }
    }
}

/// Reads a summary table back; the inverse of [`render_summary`].
pub fn parse_summary(bytes: &[u8], format: ExportFormat) -> Result<Vec<SummaryRow>, String> {
    let row = |cells: Vec<String>| -> Result<SummaryRow, String> {
        match <[String; 3]>::try_from(cells) {
            Ok([use_case, title, description]) => Ok(SummaryRow { use_case, title, description }),
            Err(c) => Err(format!("expected 3 columns, found {}", c.len())),
        }
    };
    match format {
        ExportFormat::Csv => {
            let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
            let headers = r.headers().map_err(|e| e.to_string())?;
            if headers.iter().collect::<Vec<_>>() != SUMMARY_HEADERS {
                return Err(format!("unexpected header: {headers:?}"));
            }
            r.records().map(|rec| row(rec.map_err(|e| e.to_string())?.iter().map(String::from).collect())).collect()
        }
        ExportFormat::Markdown => {
            let text = std::str::from_utf8(bytes).map_err(|e| e.to_string())?;
            let mut lines = text.lines();
            let header = md_cells(lines.next().ok_or("empty table")?)?;
            if header != SUMMARY_HEADERS {
                return Err(format!("unexpected header: {header:?}"));
            }
            lines.next().ok_or("missing separator row")?;
            lines.map(|l| row(md_cells(l)?)).collect()
        }
    }
}

fn block(text: &str) -> String {
    text.lines()
        .map(|l| if l.starts_with('#') { format!("\\{l}") } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n")
}

fn list(out: &mut String, items: Vec<String>, absent: &str) {
    if items.is_empty() {
        let _ = writeln!(out, "{absent}");
    }
    for i in items {
        let _ = writeln!(out, "- {}", block(&i).replace('\n', " "));
    }
}

fn users(list: &[UserDescriptor]) -> Vec<String> {
    list.iter()
        .map(|u| if u.characteristics.is_empty() { u.role.clone() } else { format!("{}: {}", u.role, u.characteristics) })
        .collect()
}

/// A readable document with the twelve scenario elements as `## ` sections in
/// element order, then the revision history and audit trail.
pub fn export_full(s: &Scenario, use_case: Option<&UseCaseWorksheet>, audit: &[AuditEvent]) -> Vec<u8> {
    const NOT_YET: &str = "not yet generated";
    let stage2_absent = if matches!(s.state(Stage::Stage2), StageState::NotStarted) { NOT_YET } else { "none listed" };
    let mut out = String::new();
    let _ = writeln!(out, "# {}\n", block(&s.title));
    let _ = writeln!(out, "Scenario id: {}\n", s.id);
    let use_case_line = match use_case {
        Some(w) => format!("{} ({})", w.name, w.id),
        None => s.use_case_id.to_string(),
    };
    let optional = |v: &Option<String>| v.as_deref().filter(|t| !t.trim().is_empty()).map(block);
    let sections: [(&str, Vec<String>, bool); 12] = [
        ("Sector", vec![block(&s.sector)], false),
        ("Use Case", vec![block(&use_case_line)], false),
        ("Scenario Title", vec![block(&s.title)], false),
        ("Scenario Description", vec![block(&s.description)], false),
        ("Scenario Narrative", optional(&s.narrative).into_iter().collect(), false),
        ("Evaluation Objective", optional(&s.evaluation_objective).into_iter().collect(), false),
        ("Direct Users", users(&s.direct_users), true),
        ("Indirect Users", users(&s.indirect_users), true),
        ("Intended Outcomes", s.intended_outcomes.clone(), true),
        ("Positive Impacts/Benefits", s.benefits.clone(), true),
        ("Negative Impacts/Risks", s.risks.iter().map(|r| format!("[{}] {}", r.category_id, r.text)).collect(), true),
        ("KPIs and Metrics", s.kpis.clone(), true),
    ];
    for (heading, body, is_list) in sections {
        let _ = writeln!(out, "## {heading}\n");
        if is_list {
            list(&mut out, body, stage2_absent);
        } else if body.is_empty() {
            let _ = writeln!(out, "{NOT_YET}");
        } else {
            let _ = writeln!(out, "{}", body.join("\n"));
        }
        out.push('\n');
    }
    let _ = writeln!(out, "### Stage status\n");
    for stage in Stage::ALL {
        let _ = writeln!(out, "- {stage}: {}", s.state(stage).key());
    }
    let _ = writeln!(out, "\n### Revision history\n");
    let _ = writeln!(out, "| # | Stage | Origin | Fingerprint | Timestamp |\n| --- | --- | --- | --- | --- |");
    for r in &s.revisions {
        let origin = match r.origin {
            crate::schema::RevisionOrigin::Generated => "generated",
            crate::schema::RevisionOrigin::HumanEdited => "human edited",
        };
        let fp = r.prompt_fingerprint.as_deref().map_or("-".to_string(), |f| f.chars().take(12).collect());
        let _ = writeln!(out, "| {} | {} | {origin} | {fp} | {} |", r.index, r.stage, r.timestamp);
    }
    let _ = writeln!(out, "\n### Audit trail\n");
    if audit.is_empty() {
        let _ = writeln!(out, "no events");
    }
    for e in audit {
        let action = serde_json::to_value(e.action).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let stage = e.stage.map(|s| format!(" ({s})")).unwrap_or_default();
        let detail = if e.detail.is_empty() { String::new() } else { format!(": {}", block(&e.detail).replace('\n', " ")) };
        let _ = writeln!(out, "- #{} {} {} by {}{stage}{detail}", e.seq, e.timestamp, action, e.actor);
    }
    out.into_bytes()
}

impl Store {
    fn use_case_names(&self) -> Result<BTreeMap<String, String>, StoreError> {
        Ok(self.all::<UseCaseWorksheet>()?.into_iter().map(|w| (w.id.0, w.name)).collect())
    }

    /// Summary table of the given scenarios.
    pub fn export_summary(
        &self,
        scenario_ids: &[String],
        format: ExportFormat,
        include_rejected: bool,
    ) -> Result<Vec<u8>, StoreError> {
        let scenarios =
            scenario_ids.iter().map(|id| self.get::<Scenario>(id).map(|v| v.doc)).collect::<Result<Vec<_>, _>>()?;
        Ok(render_summary(&summary_rows(&scenarios, &self.use_case_names()?, include_rejected), format))
    }

    pub fn export_full(&self, scenario_id: &str) -> Result<Vec<u8>, StoreError> {
        let s = self.get::<Scenario>(scenario_id)?.doc;
        let w = self.get::<UseCaseWorksheet>(s.use_case_id.as_str()).ok().map(|v| v.doc);
        Ok(export_full(&s, w.as_ref(), &self.audit_for(scenario_id)?))
    }
}
