use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::parse::format_stage2;
use crate::schema::{Scenario, Stage, UseCaseWorksheet};
use crate::taxonomy::RiskTaxonomy;

pub const KNOWN_PLACEHOLDERS: [&str; 9] = [
    "use_case_name",
    "sector",
    "impacts",
    "title",
    "description",
    "elements",
    "taxonomy_categories",
    "count",
    "feedback",
];

const STAGE1_TEMPLATE: &str = include_str!("../../data/templates/stage1.toml");
const STAGE2_TEMPLATE: &str = include_str!("../../data/templates/stage2.toml");
const STAGE3_TEMPLATE: &str = include_str!("../../data/templates/stage3.toml");

/// Placeholders a stage's context always supplies a real value for.
pub fn required_placeholders(stage: Stage) -> &'static [&'static str] {
    match stage {
        Stage::Stage1 => &["use_case_name", "sector", "impacts", "count"],
        Stage::Stage2 => &["use_case_name", "sector", "title", "description", "taxonomy_categories"],
        Stage::Stage3 => &["use_case_name", "sector", "title", "description", "elements"],
    }
}

/// Everything the stage renderer fills in, including the optional feedback slot.
pub fn renderer_placeholders(stage: Stage) -> Vec<&'static str> {
    let mut all = required_placeholders(stage).to_vec();
    all.push("feedback");
    all
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplate {
    pub stage: Stage,
    pub style_guideline: String,
    pub body: String,
    /// Placeholders that render as empty text when the context has no value.
    #[serde(default)]
    pub optional: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("missing placeholder: {0}")]
    MissingPlaceholder(String),
    #[error("unknown placeholder: {0}")]
    UnknownPlaceholder(String),
    #[error("unclosed placeholder starting at byte {0}")]
    Unclosed(usize),
    #[error("{stage} template does not use placeholder {name} and does not declare it optional")]
    Unused { stage: Stage, name: String },
    #[error("template for {expected} has stage {found}")]
    WrongStage { expected: Stage, found: Stage },
    #[error("cannot read template {path}: {detail}")]
    Load { path: String, detail: String },
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

// `{name}` is a slot; `{{` and `}}` are literal braces.
fn pieces(body: &str) -> Result<Vec<Piece<'_>>, RenderError> {
    let mut out = Vec::new();
    let bytes = body.as_bytes();
    let (mut i, mut start) = (0, 0);
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                out.push(Piece::Text(&body[start..=i]));
                i += 2;
                start = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                out.push(Piece::Text(&body[start..=i]));
                i += 2;
                start = i;
            }
            b'{' => {
                let close = body[i..].find('}').ok_or(RenderError::Unclosed(i))? + i;
                out.push(Piece::Text(&body[start..i]));
                out.push(Piece::Slot(body[i + 1..close].trim()));
                i = close + 1;
                start = i;
            }
            _ => i += 1,
        }
    }
    out.push(Piece::Text(&body[start..]));
    Ok(out)
}

impl PromptTemplate {
    pub fn from_toml(text: &str) -> Result<Self, RenderError> {
        let t: PromptTemplate = toml::from_str(text)
            .map_err(|e| RenderError::Load { path: "<inline>".into(), detail: e.to_string() })?;
        t.check()?;
        Ok(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RenderError> {
        let path = path.as_ref();
        let load_err = |detail: String| RenderError::Load { path: path.display().to_string(), detail };
        let text = std::fs::read_to_string(path).map_err(|e| load_err(e.to_string()))?;
        let t: PromptTemplate = toml::from_str(&text).map_err(|e| load_err(e.to_string()))?;
        t.check()?;
        Ok(t)
    }

    pub fn builtin(stage: Stage) -> Self {
        let text = match stage {
            Stage::Stage1 => STAGE1_TEMPLATE,
            Stage::Stage2 => STAGE2_TEMPLATE,
            Stage::Stage3 => STAGE3_TEMPLATE,
        };
        Self::from_toml(text).expect("shipped templates are valid")
    }

    pub fn builtin_source(stage: Stage) -> &'static str {
        match stage {
            Stage::Stage1 => STAGE1_TEMPLATE,
            Stage::Stage2 => STAGE2_TEMPLATE,
            Stage::Stage3 => STAGE3_TEMPLATE,
        }
    }

    pub fn placeholders(&self) -> Result<Vec<&str>, RenderError> {
        Ok(pieces(&self.body)?
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot(name) => Some(name),
                Piece::Text(_) => None,
            })
            .collect())
    }

    /// Every slot is a known name and every placeholder the stage renderer fills is
    /// either used in the body or declared optional.
    pub fn check(&self) -> Result<(), RenderError> {
        let used = self.placeholders()?;
        if let Some(unknown) = used.iter().find(|n| !KNOWN_PLACEHOLDERS.contains(n)) {
            return Err(RenderError::UnknownPlaceholder(unknown.to_string()));
        }
        for name in renderer_placeholders(self.stage) {
            if !used.contains(&name) && !self.optional.iter().any(|o| o == name) {
                return Err(RenderError::Unused { stage: self.stage, name: name.into() });
            }
        }
        Ok(())
    }
}

/// Values for template placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PromptContext {
    values: BTreeMap<String, String>,
}

fn bullets(items: &[String]) -> String {
    items.iter().map(|i| format!("- {i}")).collect::<Vec<_>>().join("\n")
}

fn feedback_text(feedback: Option<&str>) -> String {
    match feedback.map(str::trim) {
        Some(f) if !f.is_empty() => format!("Reviewer feedback to address:\n{f}"),
        _ => String::new(),
    }
}

impl PromptContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, key: &str, value: impl Into<String>) -> Self {
        self.values.insert(key.to_string(), value.into());
        self
    }

    pub fn remove(mut self, key: &str) -> Self {
        self.values.remove(key);
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn base(w: &UseCaseWorksheet, feedback: Option<&str>) -> Self {
        Self::new()
            .set("use_case_name", &w.name)
            .set("sector", &w.sector)
            .set("feedback", feedback_text(feedback))
    }

    pub fn stage1(w: &UseCaseWorksheet, count: u32, feedback: Option<&str>) -> Self {
        let impacts = format!(
            "Positive:\n{}\nNegative:\n{}",
            bullets(&w.positive_impacts),
            bullets(&w.negative_impacts)
        );
        Self::base(w, feedback).set("impacts", impacts).set("count", count.to_string())
    }

    pub fn stage2(w: &UseCaseWorksheet, s: &Scenario, t: &RiskTaxonomy, feedback: Option<&str>) -> Self {
        let cats: Vec<String> = t.categories.iter().map(|c| format!("- [{}] {}", c.id, c.name)).collect();
        Self::base(w, feedback)
            .set("title", &s.title)
            .set("description", &s.description)
            .set("taxonomy_categories", cats.join("\n"))
    }

    pub fn stage3(w: &UseCaseWorksheet, s: &Scenario, feedback: Option<&str>) -> Self {
        Self::base(w, feedback)
            .set("title", &s.title)
            .set("description", &s.description)
            .set("elements", format_stage2(&s.stage2_elements()).trim_end())
    }
}

/// Guideline followed by the body with every slot substituted. Substituted values
/// are not re-scanned.
pub fn render_prompt(template: &PromptTemplate, context: &PromptContext) -> Result<String, RenderError> {
    let mut body = String::with_capacity(template.body.len() * 2);
    for piece in pieces(&template.body)? {
        match piece {
            Piece::Text(t) => body.push_str(t),
            Piece::Slot(name) => {
                if !KNOWN_PLACEHOLDERS.contains(&name) {
                    return Err(RenderError::UnknownPlaceholder(name.into()));
                }
                match context.get(name) {
                    Some(v) => body.push_str(v),
                    None if template.optional.iter().any(|o| o == name) => {}
                    None => return Err(RenderError::MissingPlaceholder(name.into())),
                }
            }
        }
    }
    let guideline = template.style_guideline.trim();
    let body = body.trim();
    Ok(if guideline.is_empty() { format!("{body}\n") } else { format!("{guideline}\n\n{body}\n") })
}

/// Templates for all three stages, either fixed in memory or re-read from a
/// directory (`stage1.toml` .. `stage3.toml`) on every call.
#[derive(Debug, Clone)]
pub enum TemplateSet {
    Fixed(BTreeMap<Stage, PromptTemplate>),
    Dir(PathBuf),
}

impl TemplateSet {
    pub fn builtin() -> Self {
        TemplateSet::Fixed(Stage::ALL.iter().map(|s| (*s, PromptTemplate::builtin(*s))).collect())
    }

    pub fn file_name(stage: Stage) -> String {
        format!("{}.toml", stage.key())
    }

    pub fn get(&self, stage: Stage) -> Result<PromptTemplate, RenderError> {
        let t = match self {
            TemplateSet::Fixed(map) => map.get(&stage).cloned().unwrap_or_else(|| PromptTemplate::builtin(stage)),
            TemplateSet::Dir(dir) => {
                let path = dir.join(Self::file_name(stage));
                if path.exists() {
                    PromptTemplate::load(path)?
                } else {
                    PromptTemplate::builtin(stage)
                }
            }
        };
        if t.stage != stage {
            return Err(RenderError::WrongStage { expected: stage, found: t.stage });
        }
        Ok(t)
    }
}
