//! Acceptance suite: one PASS/FAIL line per criterion; exits non-zero on any FAIL.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenariokit::rubric::{assess, weighted_score, HumanInput};
use scenariokit::schema::{validate_scenario, ReviewDecision, StagePayload, StageState, Verdict};
use scenariokit::store::export::{parse_summary, ExportFormat, SummaryRow, SUMMARY_HEADERS};
use scenariokit::store::{AuditNote, AuditAction, KillPoint, Put};
use scenariokit::taxonomy::coverage_report;
use scenariokit::{
    fixtures, parse, serialize, BackendRegistry, Engine, EngineConfig, ParseMode, PipelineError,
    ReadinessVerdict, RubricDefinition, RiskTaxonomy, Scenario, Stage, Store, TaggedRisk, Timestamp,
    UseCaseWorksheet, UserDescriptor,
};

type Outcome = Result<String, String>;

fn engine(store: Store) -> Engine {
    Engine::new(Arc::new(store), BackendRegistry::with_mock(), EngineConfig { seed: Some(42), ..Default::default() })
}

fn decision(e: &Engine, s: &Scenario, stage: Stage, verdict: Verdict, payload: Option<StagePayload>) -> ReviewDecision {
    ReviewDecision {
        reviewer: "reviewer".into(),
        scenario_id: s.id.clone(),
        stage,
        verdict,
        comments: String::new(),
        edited_payload: payload,
        timestamp: e.now(),
    }
}

// ---- end-to-end ---------------------------------------------------------------

fn end_to_end(e: &Engine) -> Outcome {
    let started = Instant::now();
    let approve = |s: &Scenario, stage| {
        e.submit_review(&decision(e, s, stage, Verdict::Approve, None), None).map_err(|x| x.to_string())
    };
    for w in fixtures::worksheets() {
        e.add_use_case(&w, "sme").map_err(|x| x.to_string())?;
        let drafted = e.expand_stage1(w.id.as_str(), 18, "mock", "operator").map_err(|x| x.to_string())?;
        for s in drafted {
            approve(&s, Stage::Stage1)?;
            let s = e.expand_stage2(s.id.as_str(), "mock", "operator").map_err(|x| x.to_string())?;
            approve(&s, Stage::Stage2)?;
            let s = e.expand_stage3(s.id.as_str(), "mock", "operator").map_err(|x| x.to_string())?;
            approve(&s, Stage::Stage3)?;
        }
    }
    let elapsed = started.elapsed();
    let store = e.store();
    let taxonomy = store.taxonomy().map_err(|x| x.to_string())?;
    let all: Vec<Scenario> = store.all().map_err(|x| x.to_string())?;
    let mut findings = 0;
    let mut per_use_case: BTreeMap<String, usize> = BTreeMap::new();
    for s in &all {
        findings += validate_scenario(s, &taxonomy).len();
        *per_use_case.entry(s.use_case_id.0.clone()).or_default() += 1;
        if Stage::ALL.iter().any(|st| !s.is_approved(*st)) {
            return Err(format!("{} is not approved through stage 3", s.id));
        }
    }
    if all.len() != 108 || per_use_case.len() != 6 || per_use_case.values().any(|n| *n != 18) {
        return Err(format!("expected 6x18 scenarios, got {per_use_case:?}"));
    }
    if findings != 0 {
        return Err(format!("{findings} validation findings"));
    }
    if elapsed >= Duration::from_secs(60) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!("108 scenarios, 0 findings, {:.2}s", elapsed.as_secs_f64()))
}

// ---- gate safety --------------------------------------------------------------

fn gate_violations(s: &Scenario) -> Vec<String> {
    let mut out = Vec::new();
    let has_content = |stage: Stage| match stage {
        Stage::Stage1 => true,
        Stage::Stage2 => !s.stage2_elements().is_empty(),
        Stage::Stage3 => s.narrative.is_some() || s.evaluation_objective.is_some(),
    };
    for stage in [Stage::Stage2, Stage::Stage3] {
        let prev = stage.previous().unwrap();
        let started = has_content(stage) || s.state(stage) != StageState::NotStarted;
        if started && !s.is_approved(prev) {
            out.push(format!("{} has {stage} without {prev} approved", s.id));
        }
    }
    out
}

fn random_payload(rng: &mut ChaCha8Rng, stage: Stage, taxonomy: &RiskTaxonomy) -> StagePayload {
    let valid = rng.gen_bool(0.5);
    match stage {
        Stage::Stage1 => StagePayload::Stage1 {
            title: format!("Edited title {}", rng.gen::<u16>()),
            description: if valid { "An edited description.".into() } else { "Two. Sentences.".into() },
        },
        Stage::Stage2 => {
            let mut e = common::stage2(rng, taxonomy);
            if !valid {
                e.risks.push(TaggedRisk::new("not-a-category", "made up"));
            }
            StagePayload::Stage2(e)
        }
        Stage::Stage3 => StagePayload::Stage3 {
            narrative: if valid { common::words(rng, 10, 40) } else { " ".into() },
            evaluation_objective: "Probe the assistant.".into(),
        },
    }
}

fn random_op(rng: &mut ChaCha8Rng, e: &Engine, uc: &str, taxonomy: &RiskTaxonomy) -> Result<(), PipelineError> {
    let ids = e.store().list_scenarios(uc)?;
    let pick = |rng: &mut ChaCha8Rng| -> String {
        if ids.is_empty() || rng.gen_bool(0.05) {
            "sc-missing-1".into()
        } else {
            ids.choose(rng).unwrap().clone()
        }
    };
    let backend = if rng.gen_bool(0.05) { "absent" } else { "mock" };
    let stage = Stage::ALL[rng.gen_range(0..3)];
    match rng.gen_range(0..10) {
        0 | 1 => e.expand_stage1(if rng.gen_bool(0.05) { "uc-missing" } else { uc }, rng.gen_range(0..4), backend, "op").map(drop),
        2 => e.regenerate_stage1(&pick(rng), backend, "op").map(drop),
        3 | 4 => {
            let id = pick(rng);
            if rng.gen_bool(0.5) { e.expand_stage2(&id, backend, "op") } else { e.expand_stage3(&id, backend, "op") }.map(drop)
        }
        _ => {
            let id = pick(rng);
            let s = e.scenario(&id)?;
            let verdict = [Verdict::Approve, Verdict::Approve, Verdict::EditAndApprove, Verdict::RequestRegeneration, Verdict::Reject]
                [rng.gen_range(0..5)];
            let payload_stage = if rng.gen_bool(0.9) { stage } else { Stage::ALL[rng.gen_range(0..3)] };
            let payload = match verdict {
                Verdict::EditAndApprove => Some(random_payload(rng, payload_stage, taxonomy)),
                _ if rng.gen_bool(0.05) => Some(random_payload(rng, payload_stage, taxonomy)),
                _ => None,
            };
            let expected = match rng.gen_range(0..10) {
                0 => Some(s.revision + 1),
                1 => Some(s.revision),
                _ => None,
            };
            e.submit_review(&decision(e, &s.doc, stage, verdict, payload), expected).map(drop)
        }
    }
}

fn gate_safety() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a7e);
    let worksheets = fixtures::worksheets();
    let taxonomy = RiskTaxonomy::default_taxonomy();
    let (mut ops, mut rejected, mut states) = (0usize, 0usize, 0usize);
    let mut violations = Vec::new();
    for _ in 0..10_000 {
        let e = engine(Store::in_memory());
        let w = worksheets.choose(&mut rng).unwrap();
        e.add_use_case(w, "sme").map_err(|x| x.to_string())?;
        for _ in 0..rng.gen_range(1..=10) {
            let before = e.store().snapshot();
            let result = random_op(&mut rng, &e, w.id.as_str(), &taxonomy);
            ops += 1;
            if let Err(err) = result {
                rejected += 1;
                if e.store().snapshot() != before {
                    violations.push(format!("rejected op mutated the store: {err}"));
                }
            }
            for s in e.store().scenarios_for(w.id.as_str()).map_err(|x| x.to_string())? {
                states += 1;
                violations.extend(gate_violations(&s));
            }
        }
        if violations.len() > 5 {
            break;
        }
    }
    if violations.is_empty() {
        Ok(format!("10000 sequences, {ops} ops ({rejected} rejected), {states} scenario states checked"))
    } else {
        Err(violations.into_iter().take(5).collect::<Vec<_>>().join("; "))
    }
}

// ---- round trip ---------------------------------------------------------------

fn round_trip_one<D: scenariokit::Document + PartialEq + std::fmt::Debug>(d: &D) -> Result<(), String> {
    let bytes = serialize(d);
    let back: D = parse(&bytes, ParseMode::Strict).map_err(|x| x.to_string())?;
    if &back != d {
        return Err(format!("parse(serialize(d)) != d: {d:?}"));
    }
    if serialize(&back) != bytes {
        return Err("double serialization differs".into());
    }
    Ok(())
}

fn round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x12);
    let taxonomy = RiskTaxonomy::default_taxonomy();
    for n in 0..1_000 {
        let w = common::worksheet(&mut rng, n);
        if !scenariokit::schema::validate_worksheet(&w).is_clean() {
            return Err(format!("generated worksheet {n} is not valid"));
        }
        round_trip_one(&w)?;
        let s = common::scenario(&mut rng, &w, n, &taxonomy);
        let report = validate_scenario(&s, &taxonomy);
        if !report.is_clean() {
            return Err(format!("generated scenario {n} is not valid: {:?}", report.findings));
        }
        round_trip_one(&s)?;
    }
    Ok("1000 worksheets and 1000 scenarios".into())
}

// ---- rubric -------------------------------------------------------------------

/// `x = m·2^e` from the IEEE-754 bit pattern.
fn decompose(x: f64) -> (u128, i32) {
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = (bits & ((1u64 << 52) - 1)) as u128;
    if exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u128 << 52), exp - 1075)
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Reduced `(numerator, denominator)` of `Σw·s / (max·Σw)` over scored categories.
fn oracle(weights: &[f64], scores: &[Option<u32>], max: u32) -> (u128, u128) {
    let parts: Vec<((u128, i32), u32)> = weights
        .iter()
        .zip(scores)
        .filter_map(|(w, s)| s.map(|s| (decompose(*w), s)))
        .filter(|((m, _), _)| *m != 0)
        .collect();
    let Some(min_e) = parts.iter().map(|((_, e), _)| *e).min() else { return (0, 1) };
    let (mut num, mut den) = (0u128, 0u128);
    for ((m, e), s) in parts {
        let w = m << (e - min_e);
        num += w * s as u128;
        den += w;
    }
    den *= max as u128;
    let g = gcd(num, den);
    if num == 0 {
        (0, 1)
    } else {
        (num / g, den / g)
    }
}

fn rubric_with(base: &RubricDefinition, weights: &[f64]) -> RubricDefinition {
    let mut r = base.clone();
    r.weights = r.categories.iter().map(|c| c.id.clone()).zip(weights.iter().copied()).collect();
    r
}

fn complete_scenario() -> Scenario {
    let w = fixtures::worksheets().remove(0);
    let mut s = Scenario::draft("sc-rubric-1".into(), &w, "Rubric subject", "A subject for scoring.", Timestamp::from_unix_micros(0));
    s.direct_users = vec![UserDescriptor::new("Analyst", "")];
    s.indirect_users = vec![UserDescriptor::new("Customers", "")];
    s.intended_outcomes = vec!["Faster triage".into()];
    s.benefits = vec!["Less manual work".into()];
    s.risks = vec![TaggedRisk::new("confabulation", "Invented facts")];
    s.kpis = vec!["Time to verdict".into()];
    s.narrative = Some("n".repeat(500));
    s.evaluation_objective = Some("Probe for invented facts.".into());
    s
}

fn rubric_arithmetic() -> Outcome {
    let base = RubricDefinition::default_rubric();
    let names: Vec<&str> = base.categories.iter().map(|c| c.name.as_str()).collect();
    let expected = [
        "Use Case Relevance and Clarity",
        "Scenario Narrative Completeness",
        "Red-Teaming Objective Quality",
        "Attacker Modeling",
        "Broader Considerations",
        "Impact Assessment",
        "Metrics and Success Criteria",
        "Risk Landscape and Transparency",
    ];
    if names != expected {
        return Err(format!("default rubric categories {names:?}"));
    }
    let taxonomy = RiskTaxonomy::default_taxonomy();
    let subject = complete_scenario();
    let n = base.categories.len();
    let max = base.scale_max;
    let (t_m, t_e) = decompose(base.readiness_threshold);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5c0e);
    let mut ready = 0;
    for trial in 0..500 {
        let weights: Vec<f64> = (0..n)
            .map(|_| match rng.gen_range(0..10) {
                0 => 0.0,
                1..=3 => rng.gen_range(1..=9) as f64,
                _ => rng.gen_range(0.001..10.0),
            })
            .collect();
        let all_scored = rng.gen_bool(0.6);
        let scores: Vec<Option<u32>> =
            (0..n).map(|_| (all_scored || rng.gen_bool(0.7)).then(|| rng.gen_range(1..=max))).collect();
        let rubric = rubric_with(&base, &weights);
        let score_map: BTreeMap<String, u32> = base
            .categories
            .iter()
            .zip(&scores)
            .filter_map(|(c, s)| s.map(|s| (c.id.clone(), s)))
            .collect();
        let got = weighted_score(&rubric, &score_map);
        let (on, od) = oracle(&weights, &scores, max);
        if got.numer().to_u128() != Some(on) || got.denom().to_u128() != Some(od) {
            return Err(format!("trial {trial}: {got} != {on}/{od}"));
        }

        let input: BTreeMap<String, HumanInput> =
            score_map.iter().map(|(k, v)| (k.clone(), HumanInput { score: Some(*v), notes: String::new() })).collect();
        let a = assess(&subject, &taxonomy, &rubric, &input, "sme", Timestamp::from_unix_micros(0)).map_err(|x| x.to_string())?;
        if a.weighted_score_exact != format!("{on}/{od}") {
            return Err(format!("trial {trial}: assessment carries {}", a.weighted_score_exact));
        }
        // score >= m·2^e  <=>  on·2^-e >= od·m  (e < 0)
        let lhs = on.checked_shl((-t_e) as u32).filter(|v| v >> (-t_e) == on);
        let above = match lhs.zip(od.checked_mul(t_m)) {
            Some((l, r)) => l >= r,
            None => return Err("threshold comparison overflowed the oracle".into()),
        };
        let want = if above && scores.iter().all(Option::is_some) { ReadinessVerdict::Ready } else { ReadinessVerdict::NotReady };
        if a.verdict != want {
            return Err(format!("trial {trial}: verdict {:?}, oracle {want:?}", a.verdict));
        }
        ready += usize::from(want == ReadinessVerdict::Ready);

        // scale invariance: powers of two are exact on any weight
        let k = rng.gen_range(-4..=4);
        let scaled: Vec<f64> = weights.iter().map(|w| w * 2f64.powi(k)).collect();
        let again = assess(&subject, &taxonomy, &rubric_with(&base, &scaled), &input, "sme", Timestamp::from_unix_micros(0))
            .map_err(|x| x.to_string())?;
        if again.weighted_score_exact != a.weighted_score_exact || again.verdict != a.verdict {
            return Err(format!("trial {trial}: scaling by 2^{k} changed the result"));
        }
        // integer weights times an integer constant are exact as well
        let ints: Vec<f64> = (0..n).map(|_| rng.gen_range(0..=20) as f64).collect();
        let c = rng.gen_range(2..=1000) as f64;
        let times: Vec<f64> = ints.iter().map(|w| w * c).collect();
        if weighted_score(&rubric_with(&base, &ints), &score_map) != weighted_score(&rubric_with(&base, &times), &score_map) {
            return Err(format!("trial {trial}: scaling integer weights by {c} changed the score"));
        }

        // monotonicity: raising one score never lowers the result
        let raisable: Vec<usize> = (0..n).filter(|i| scores[*i].is_some_and(|s| s < max)).collect();
        if let Some(&i) = raisable.choose(&mut rng) {
            let mut up = score_map.clone();
            *up.get_mut(&base.categories[i].id).unwrap() += 1;
            let higher = weighted_score(&rubric, &up);
            if higher < got || (weights[i] > 0.0 && higher == got) {
                return Err(format!("trial {trial}: raising {} moved {got} to {higher}", base.categories[i].id));
            }
        }
    }
    Ok(format!("8 categories; 500 trials exact ({ready} ready)"))
}

// ---- coverage -----------------------------------------------------------------

fn coverage() -> Outcome {
    let taxonomy = RiskTaxonomy::default_taxonomy();
    let ids: Vec<String> = taxonomy.ids().map(String::from).collect();
    let worksheets = fixtures::worksheets();
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0);
    for trial in 0..50 {
        let count = rng.gen_range(0..80);
        let mut set: Vec<Scenario> = (0..count)
            .map(|i| {
                let w = worksheets.choose(&mut rng).unwrap();
                let mut s = Scenario::draft(format!("sc-cov-{i}").into(), w, format!("T{i}"), "D.", Timestamp::from_unix_micros(0));
                let pool = &ids[..rng.gen_range(1..=ids.len())];
                s.risks = (0..rng.gen_range(0..6)).map(|_| TaggedRisk::new(pool.choose(&mut rng).unwrap(), "r")).collect();
                s
            })
            .collect();
        let floor = rng.gen_range(0..6);
        let report = coverage_report(&set, &taxonomy, floor);

        let brute = |list: &[&Scenario], id: &str| list.iter().filter(|s| s.risks.iter().any(|r| r.category_id == id)).count();
        let everyone: Vec<&Scenario> = set.iter().collect();
        for (c, id) in report.categories.iter().zip(&ids) {
            let n = brute(&everyone, id);
            if c.category_id != *id || c.scenario_count != n || c.below_floor != (n < floor) {
                return Err(format!("trial {trial}: {id} reported {} expected {n}", c.scenario_count));
            }
        }
        if report.categories.len() != ids.len() {
            return Err(format!("trial {trial}: {} categories", report.categories.len()));
        }
        let use_cases: BTreeSet<&str> = set.iter().map(|s| s.use_case_id.as_str()).collect();
        if report.per_use_case.keys().map(|k| k.as_str()).collect::<BTreeSet<_>>() != use_cases {
            return Err(format!("trial {trial}: per-use-case keys differ"));
        }
        for (uc, rows) in &report.per_use_case {
            let members: Vec<&Scenario> = set.iter().filter(|s| s.use_case_id == *uc).collect();
            for (c, id) in rows.iter().zip(&ids) {
                if c.scenario_count != brute(&members, id) {
                    return Err(format!("trial {trial}: {uc}/{id} miscounted"));
                }
            }
        }
        if report.scenarios_with_risks != set.iter().filter(|s| !s.risks.is_empty()).count() {
            return Err(format!("trial {trial}: scenarios_with_risks"));
        }
        set.shuffle(&mut rng);
        if coverage_report(&set, &taxonomy, floor) != report {
            return Err(format!("trial {trial}: shuffling changed the report"));
        }
    }
    Ok("50 sets match the brute-force tally and are order independent".into())
}

// ---- export -------------------------------------------------------------------

fn export_summary(e: &Engine) -> Outcome {
    let store = e.store();
    let mut ids = Vec::new();
    let mut expected = Vec::new();
    for w in store.all::<UseCaseWorksheet>().map_err(|x| x.to_string())? {
        for s in store.scenarios_for(w.id.as_str()).map_err(|x| x.to_string())? {
            ids.push(s.id.0.clone());
            expected.push(SummaryRow { use_case: w.name.clone(), title: s.title, description: s.description });
        }
    }
    expected.sort();
    for format in [ExportFormat::Csv, ExportFormat::Markdown] {
        let first = store.export_summary(&ids, format, false).map_err(|x| x.to_string())?;
        let second = store.export_summary(&ids, format, false).map_err(|x| x.to_string())?;
        if first != second {
            return Err(format!("{format:?} export differs between runs"));
        }
        let text = String::from_utf8(first.clone()).map_err(|x| x.to_string())?;
        let header = text.lines().next().unwrap_or_default();
        let want = match format {
            ExportFormat::Csv => SUMMARY_HEADERS.join(","),
            ExportFormat::Markdown => format!("| {} |", SUMMARY_HEADERS.join(" | ")),
        };
        if header != want {
            return Err(format!("{format:?} header {header:?}"));
        }
        let rows = parse_summary(&first, format)?;
        if rows != expected {
            return Err(format!("{format:?} did not parse back to the store contents"));
        }
    }
    Ok(format!("{} rows; csv and markdown round-trip and are stable", expected.len()))
}

// ---- crash safety -------------------------------------------------------------

fn check_recovered(store: &Store, committed: &BTreeMap<String, (u64, String)>, mutations: usize) -> Result<(), String> {
    for w in fixtures::worksheets() {
        let id = w.id.as_str();
        match (committed.get(id), store.get::<UseCaseWorksheet>(id)) {
            (Some((rev, name)), Ok(v)) if v.revision == *rev && v.doc.name == *name => {}
            (None, Err(scenariokit::StoreError::NotFound { .. })) => {}
            (want, got) => return Err(format!("{id}: expected {want:?}, found {:?}", got.map(|v| (v.revision, v.doc.name)))),
        }
    }
    let events = store.audit_events().map_err(|x| x.to_string())?;
    let counted = events.iter().filter(|e| e.action.is_mutating()).count();
    if counted != mutations {
        return Err(format!("{counted} mutating audit events for {mutations} committed mutations"));
    }
    Ok(())
}

fn leftover_temps(root: &std::path::Path) -> usize {
    std::fs::read_dir(root.join("use_cases"))
        .map(|d| d.flatten().filter(|e| e.file_name().to_string_lossy().ends_with(".tmp")).count())
        .unwrap_or(0)
}

fn crash_safety() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xdead);
    let base = fixtures::worksheets();
    let mut cases = 0;
    for point in KillPoint::ALL {
        let commits = matches!(point, KillPoint::AfterAuditAppend | KillPoint::AfterRename);
        for round in 0..8 {
            let dir = tempfile::tempdir().map_err(|x| x.to_string())?;
            let root = dir.path().join("store");
            let mut store = Store::init(&root).map_err(|x| x.to_string())?;
            let mut committed: BTreeMap<String, (u64, String)> = BTreeMap::new();
            let mut mutations = 0usize;
            let steps = rng.gen_range(3..12);
            let kill_at = rng.gen_range(0..steps);
            for step in 0..steps {
                let size = rng.gen_range(1..=3);
                let docs: Vec<UseCaseWorksheet> = base
                    .choose_multiple(&mut rng, size)
                    .map(|w| {
                        let mut w = w.clone();
                        w.name = format!("{} r{round} s{step}", w.name);
                        w
                    })
                    .collect();
                let puts: Vec<Put<'_, UseCaseWorksheet>> = docs
                    .iter()
                    .map(|w| {
                        let expected = committed.get(w.id.as_str()).map_or(0, |c| c.0);
                        let action = if expected == 0 { AuditAction::UseCaseCreated } else { AuditAction::UseCaseUpdated };
                        Put { doc: w, expected_revision: expected, note: AuditNote::new("harness", action, Timestamp::from_unix_micros(0)) }
                    })
                    .collect();
                let expected_revs: Vec<u64> = puts.iter().map(|p| p.expected_revision + 1).collect();
                let killed = step == kill_at;
                if killed {
                    store.inject_kill(Some(point));
                }
                match store.put_many(puts) {
                    Ok(_) if !killed => {}
                    Err(scenariokit::StoreError::Killed(p)) if killed && p == point => {}
                    other => return Err(format!("{point:?} step {step}: unexpected {other:?}")),
                }
                if !killed || commits {
                    mutations += docs.len();
                    for (w, rev) in docs.iter().zip(expected_revs) {
                        committed.insert(w.id.0.clone(), (rev, w.name.clone()));
                    }
                }
                if killed {
                    drop(store);
                    store = Store::open(&root).map_err(|x| format!("{point:?}: reopen failed: {x}"))?;
                    if leftover_temps(&root) != 0 {
                        return Err(format!("{point:?}: temp files survived recovery"));
                    }
                    check_recovered(&store, &committed, mutations).map_err(|x| format!("{point:?} after recovery: {x}"))?;
                }
            }
            check_recovered(&store, &committed, mutations).map_err(|x| format!("{point:?} at end: {x}"))?;
            drop(store);
            let reopened = Store::open(&root).map_err(|x| x.to_string())?;
            check_recovered(&reopened, &committed, mutations).map_err(|x| format!("{point:?} after clean reopen: {x}"))?;
            cases += 1;
        }
    }
    Ok(format!("{cases} runs over {} kill points reload to the last committed revision", KillPoint::ALL.len()))
}

fn main() {
    let dir = tempfile::tempdir().expect("tempdir");
    let e2e_engine = engine(Store::init(dir.path().join("store")).expect("init store"));
    let results: Vec<(&str, Outcome)> = vec![
        ("end-to-end mock run", end_to_end(&e2e_engine)),
        ("gate safety", gate_safety()),
        ("round trip", round_trip()),
        ("rubric arithmetic", rubric_arithmetic()),
        ("coverage", coverage()),
        ("export summary", export_summary(&e2e_engine)),
        ("crash safety", crash_safety()),
    ];
    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

