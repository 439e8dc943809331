use std::path::Path;
use std::process::{Command, Output};

use scenariokit::store::export::{parse_summary, ExportFormat};
use scenariokit::{parse, ExpansionJob, ParseMode, Scenario, UseCaseWorksheet};

const UC: &str = "uc-developer-productivity";

fn run(store: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scenariokit"))
        .arg("--store")
        .arg(store)
        .args(["--seed", "7", "--actor", "tester"])
        .args(args)
        .env_remove("SCENARIOKIT_STORE")
        .output()
        .expect("binary runs")
}

fn ok(store: &Path, args: &[&str]) -> Vec<u8> {
    let out = run(store, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn init() -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let out = Command::new(env!("CARGO_BIN_EXE_scenariokit")).arg("init").arg(&store).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (dir, store)
}

fn error_of(out: &Output) -> serde_json::Value {
    let line = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(line.trim()).unwrap_or_else(|e| panic!("stderr is not one JSON line ({e}): {line}"))
}

#[test]
fn init_seeds_the_six_use_cases() {
    let (_dir, store) = init();
    let list: Vec<UseCaseWorksheet> = serde_json::from_slice(&ok(&store, &["--json", "usecase", "list"])).unwrap();
    assert_eq!(list.len(), 6);
    let text = String::from_utf8(ok(&store, &["usecase", "list"])).unwrap();
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn stage_two_before_any_approval_exits_three() {
    let (_dir, store) = init();
    let out = run(&store, &["expand", "--use-case", UC, "--stage", "2"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_of(&out)["code"], "stage_order");
    assert!(out.stdout.is_empty());
}

#[test]
fn errors_map_to_exit_codes() {
    let (_dir, store) = init();
    let out = run(&store, &["usecase", "show", "uc-missing"]);
    assert_eq!((out.status.code(), error_of(&out)["code"].as_str()), (Some(2), Some("not_found")));
    let out = run(&store, &["expand", "--use-case", UC, "--stage", "1", "--count", "1", "--backend", "absent"]);
    assert_eq!((out.status.code(), error_of(&out)["code"].as_str()), (Some(4), Some("unknown_backend")));
    let out = run(&store, &["expand", "--use-case", UC, "--stage", "1", "--count", "1"]);
    assert!(out.status.success());
    let id = format!("sc-{}-1", UC.trim_start_matches("uc-"));
    let out = run(&store, &["review", "decide", "--scenario", &id, "--stage", "1", "--verdict", "approve", "--if-revision", "99"]);
    assert_eq!((out.status.code(), error_of(&out)["code"].as_str()), (Some(5), Some("conflict")));
    ok(&store, &["review", "decide", "--scenario", &id, "--stage", "1", "--verdict", "approve"]);
    let out = run(&store, &["review", "decide", "--scenario", &id, "--stage", "1", "--verdict", "approve"]);
    assert_eq!((out.status.code(), error_of(&out)["code"].as_str()), (Some(3), Some("review_state")));
    let out = Command::new(env!("CARGO_BIN_EXE_scenariokit")).args(["usecase", "list"]).env_remove("SCENARIOKIT_STORE").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_worksheet_is_reported_with_findings() {
    let (dir, store) = init();
    let mut w = scenariokit::fixtures::worksheets().remove(0);
    w.id = "uc-broken".into();
    w.kpis.clear();
    let path = dir.path().join("w.json");
    std::fs::write(&path, scenariokit::serialize(&w)).unwrap();
    for args in [["usecase", "validate"], ["usecase", "add"]] {
        let out = run(&store, &[args[0], args[1], path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = error_of(&out);
        assert!(err["findings"].as_array().is_some_and(|f| f.iter().any(|f| f["field"] == "kpis")), "{err}");
    }
    w.kpis.push("Hours saved per week".into());
    std::fs::write(&path, scenariokit::serialize(&w)).unwrap();
    ok(&store, &["usecase", "add", path.to_str().unwrap()]);
    let shown = ok(&store, &["--json", "usecase", "show", "uc-broken"]);
    assert_eq!(parse::<UseCaseWorksheet>(&shown, ParseMode::Strict).unwrap(), w);
}

#[test]
fn scripted_run_exports_eighteen_rows() {
    let (dir, store) = init();
    let job: ExpansionJob =
        parse(&ok(&store, &["--json", "expand", "--use-case", UC, "--stage", "1", "--count", "18"]), ParseMode::Strict).unwrap();
    assert_eq!(job.produced.len(), 18);
    for stage in ["1", "2", "3"] {
        if stage != "1" {
            let job: ExpansionJob =
                parse(&ok(&store, &["--json", "expand", "--use-case", UC, "--stage", stage]), ParseMode::Strict).unwrap();
            assert_eq!(job.produced.len(), 18, "stage {stage}");
        }
        let approved: Vec<String> =
            serde_json::from_slice(&ok(&store, &["--json", "review", "approve-all", "--use-case", UC, "--stage", stage])).unwrap();
        assert_eq!(approved.len(), 18, "stage {stage}");
    }
    let pending: Vec<serde_json::Value> = serde_json::from_slice(&ok(&store, &["--json", "review", "list"])).unwrap();
    assert!(pending.is_empty());

    let out = dir.path().join("summary.csv");
    ok(&store, &["export", "summary", "--use-case", UC, "--out", out.to_str().unwrap()]);
    let rows = parse_summary(&std::fs::read(&out).unwrap(), ExportFormat::Csv).unwrap();
    assert_eq!(rows.len(), 18);
    assert!(rows.iter().all(|r| r.use_case == "Developer Productivity"));
    let md = ok(&store, &["export", "summary", "--format", "md"]);
    assert_eq!(parse_summary(&md, ExportFormat::Markdown).unwrap(), rows);

    let scenarios: Vec<Scenario> = serde_json::from_slice(&ok(&store, &["--json", "scenario", "list", "--use-case", UC])).unwrap();
    assert_eq!(scenarios.len(), 18);
    let first = &scenarios[0];
    let shown = ok(&store, &["--json", "scenario", "show", first.id.as_str()]);
    assert_eq!(&parse::<Scenario>(&shown, ParseMode::Strict).unwrap(), first);
    let full = String::from_utf8(ok(&store, &["export", "full", "--scenario", first.id.as_str()])).unwrap();
    assert!(full.contains("## Scenario Narrative"));

    let status: serde_json::Value = serde_json::from_slice(&ok(&store, &["--json", "status", "--use-case", UC])).unwrap();
    assert_eq!(status["stages"]["stage3"]["approved"], 18, "{status}");
}

#[test]
fn edit_and_rubric_commands() {
    let (dir, store) = init();
    ok(&store, &["expand", "--use-case", UC, "--stage", "1", "--count", "1"]);
    let id = format!("sc-{}-1", UC.trim_start_matches("uc-"));
    let edit = dir.path().join("edit.json");
    std::fs::write(&edit, r#"{"title": "Reviewer Chosen Title", "description": "The assistant drafts release notes from merged changes."}"#).unwrap();
    let s: Scenario = parse(
        &ok(&store, &["--json", "review", "decide", "--scenario", &id, "--stage", "1", "--verdict", "edit", "--edit-file", edit.to_str().unwrap()]),
        ParseMode::Strict,
    )
    .unwrap();
    assert_eq!(s.title, "Reviewer Chosen Title");
    assert!(s.is_approved(scenariokit::Stage::Stage1));

    let changes: Vec<serde_json::Value> =
        serde_json::from_slice(&ok(&store, &["--json", "diff", "--scenario", &id, "--from", "0", "--to", "1"])).unwrap();
    let fields: Vec<&str> = changes.iter().filter_map(|c| c["field"].as_str()).collect();
    assert_eq!(fields, ["description", "title"]);

    let rubric = scenariokit::RubricDefinition::default_rubric();
    let scores: serde_json::Map<String, serde_json::Value> =
        rubric.categories.iter().map(|c| (c.id.clone(), serde_json::json!(rubric.scale_max))).collect();
    let path = dir.path().join("scores.json");
    std::fs::write(&path, serde_json::to_vec(&scores).unwrap()).unwrap();
    let a: serde_json::Value =
        serde_json::from_slice(&ok(&store, &["--json", "rubric", "assess", "--scenario", &id, "--scores", path.to_str().unwrap()])).unwrap();
    assert_eq!(a["weighted_score_exact"], "1/1");
    assert!(a["unscored"].as_array().unwrap().is_empty());
}
