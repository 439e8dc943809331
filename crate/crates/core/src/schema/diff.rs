use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::StagePayload;

/// A field whose value differs between two revisions. `None` means the field is
/// not part of that revision's stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldChange {
    pub field: String,
    pub before: Option<Value>,
    pub after: Option<Value>,
}

fn fields(payload: &StagePayload) -> BTreeMap<String, Value> {
    let value = match payload {
        StagePayload::Stage1 { title, description } => {
            serde_json::json!({ "title": title, "description": description })
        }
        StagePayload::Stage2(e) => serde_json::to_value(e).expect("plain data serializes"),
        StagePayload::Stage3 { narrative, evaluation_objective } => {
            serde_json::json!({ "narrative": narrative, "evaluation_objective": evaluation_objective })
        }
    };
    match value {
        Value::Object(map) => map.into_iter().collect(),
        _ => unreachable!("payload fields serialize as an object"),
    }
}

/// Field-level differences between two revision payloads, sorted by field name.
pub fn diff_payloads(before: &StagePayload, after: &StagePayload) -> Vec<FieldChange> {
    let a = fields(before);
    let b = fields(after);
    let mut names: Vec<&String> = a.keys().chain(b.keys()).collect();
    names.sort();
    names.dedup();
    names
        .into_iter()
        .filter_map(|name| {
            let (x, y) = (a.get(name), b.get(name));
            (x != y).then(|| FieldChange { field: name.clone(), before: x.cloned(), after: y.cloned() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Stage2Elements, TaggedRisk};

    #[test]
    fn identical_payloads_have_no_changes() {
        let p = StagePayload::Stage1 { title: "T".into(), description: "D.".into() };
        assert!(diff_payloads(&p, &p).is_empty());
    }

    #[test]
    fn changed_fields_only() {
        let a = StagePayload::Stage2(Stage2Elements {
            benefits: vec!["faster".into()],
            risks: vec![TaggedRisk::new("confabulation", "x")],
            ..Default::default()
        });
        let mut e = match &a {
            StagePayload::Stage2(e) => e.clone(),
            _ => unreachable!(),
        };
        e.benefits.push("cheaper".into());
        let b = StagePayload::Stage2(e);
        let changes = diff_payloads(&a, &b);
        assert_eq!(changes.len(), 1);
        assert_eq!(changes[0].field, "benefits");
    }

    #[test]
    fn cross_stage_diff_lists_both_sides() {
        let a = StagePayload::Stage1 { title: "T".into(), description: "D.".into() };
        let b = StagePayload::Stage3 { narrative: "N".into(), evaluation_objective: "O".into() };
        let names: Vec<_> = diff_payloads(&a, &b).into_iter().map(|c| c.field).collect();
        assert_eq!(names, ["description", "evaluation_objective", "narrative", "title"]);
    }
}
