//! Benchmark fixtures. Run with `cargo bench -p scenariokit-bench`.

use std::sync::Arc;

use scenariokit::{fixtures, BackendRegistry, Engine, EngineConfig, ReviewDecision, Scenario, Stage, Store, Verdict};

fn approve(e: &Engine, s: &Scenario, stage: Stage) {
    let decision = ReviewDecision {
        reviewer: "bench".into(),
        scenario_id: s.id.clone(),
        stage,
        verdict: Verdict::Approve,
        comments: String::new(),
        edited_payload: None,
        timestamp: e.now(),
    };
    e.submit_review(&decision, None).unwrap();
}

/// `per_use_case` mock scenarios for every fixture use case, carried through stage 3.
pub fn corpus(per_use_case: u32) -> Vec<Scenario> {
    let e = Engine::new(
        Arc::new(Store::in_memory()),
        BackendRegistry::with_mock(),
        EngineConfig { seed: Some(1), ..Default::default() },
    );
    for w in fixtures::worksheets() {
        e.add_use_case(&w, "bench").unwrap();
        for s in e.expand_stage1(w.id.as_str(), per_use_case, "mock", "bench").unwrap() {
            approve(&e, &s, Stage::Stage1);
            let s = e.expand_stage2(s.id.as_str(), "mock", "bench").unwrap();
            approve(&e, &s, Stage::Stage2);
            let s = e.expand_stage3(s.id.as_str(), "mock", "bench").unwrap();
            approve(&e, &s, Stage::Stage3);
        }
    }
    e.store().all().unwrap()
}
