//! Random document generators shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use scenariokit::schema::{
    ElicitationProvenance, RevisionOrigin, Stage2Elements, StagePayload, StageState,
};
use scenariokit::{RiskTaxonomy, Scenario, Stage, TaggedRisk, Timestamp, UseCaseWorksheet, UserDescriptor};

const WORDS: [&str; 24] = [
    "alert", "ledger", "analyst", "model", "review", "credit", "memo", "fraud", "signal", "queue",
    "policy", "client", "pattern", "risk", "report", "vendor", "audit", "claim", "loan", "score",
    "naïve", "café", "quote\"d", "back\\slash",
];

pub fn words(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> String {
    let n = rng.gen_range(lo..=hi);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

pub fn sentence(rng: &mut ChaCha8Rng) -> String {
    let mark = ['.', '!', '?'][rng.gen_range(0..3)];
    let mut s = words(rng, 2, 12).replace(['.', '!', '?'], "");
    if let Some(c) = s.get_mut(0..1) {
        c.make_ascii_uppercase();
    }
    s.push(mark);
    s
}

pub fn title(rng: &mut ChaCha8Rng, n: usize) -> String {
    format!("{} {n}", words(rng, 1, 5).replace(['.', '!', '?', '\n'], ""))
}

fn list(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Vec<String> {
    (0..rng.gen_range(lo..=hi)).map(|_| words(rng, 1, 8)).collect()
}

fn users(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Vec<UserDescriptor> {
    (0..rng.gen_range(lo..=hi))
        .map(|_| {
            let ch = if rng.gen_bool(0.3) { String::new() } else { words(rng, 1, 6) };
            UserDescriptor::new(words(rng, 1, 3), ch)
        })
        .collect()
}

pub fn timestamp(rng: &mut ChaCha8Rng) -> Timestamp {
    Timestamp::from_unix_micros(rng.gen_range(1_600_000_000_000_000i64..1_900_000_000_000_000))
}

pub fn worksheet(rng: &mut ChaCha8Rng, n: usize) -> UseCaseWorksheet {
    UseCaseWorksheet {
        id: format!("uc-generated-{n}").into(),
        name: words(rng, 1, 5),
        sector: words(rng, 1, 3),
        sub_sectors: list(rng, 0, 3),
        summary: words(rng, 3, 30),
        direct_users: users(rng, 1, 4),
        indirect_users: users(rng, 0, 4),
        intended_outcomes: list(rng, 1, 4),
        positive_impacts: list(rng, 0, 4),
        negative_impacts: list(rng, 0, 4),
        kpis: list(rng, 1, 4),
        provenance: ElicitationProvenance {
            method: words(rng, 1, 3),
            participants: list(rng, 0, 3),
            elicited_on: rng.gen_bool(0.5).then(|| format!("2024-0{}-1{}", rng.gen_range(1..10), rng.gen_range(0..10))),
            notes: words(rng, 0, 10),
        },
        created_at: timestamp(rng),
        updated_at: timestamp(rng),
        extra: BTreeMap::new(),
    }
}

pub fn stage2(rng: &mut ChaCha8Rng, taxonomy: &RiskTaxonomy) -> Stage2Elements {
    let ids: Vec<&str> = taxonomy.ids().collect();
    Stage2Elements {
        direct_users: users(rng, 1, 3),
        indirect_users: users(rng, 1, 3),
        intended_outcomes: list(rng, 1, 3),
        benefits: list(rng, 1, 3),
        risks: (0..rng.gen_range(1..=4))
            .map(|_| TaggedRisk::new(*ids.choose(rng).unwrap(), words(rng, 2, 8)))
            .collect(),
        kpis: list(rng, 1, 3),
    }
}

/// How far a generated scenario has progressed: 1 = stage 1 only, 3 = all stages.
pub fn scenario(rng: &mut ChaCha8Rng, parent: &UseCaseWorksheet, n: usize, taxonomy: &RiskTaxonomy) -> Scenario {
    let mut s = Scenario::draft(
        format!("sc-generated-{n}").into(),
        parent,
        title(rng, n),
        sentence(rng),
        timestamp(rng),
    );
    let push = |s: &mut Scenario, rng: &mut ChaCha8Rng, payload: StagePayload| {
        let origin = if rng.gen_bool(0.8) { RevisionOrigin::Generated } else { RevisionOrigin::HumanEdited };
        let fp = (origin == RevisionOrigin::Generated).then(|| format!("{:064x}", rng.gen::<u128>()));
        let ts = timestamp(rng);
        s.push_revision(payload, origin, fp, ts);
    };
    let p1 = s.payload(Stage::Stage1);
    push(&mut s, rng, p1);
    let reach = rng.gen_range(1..=3);
    let final_state = |rng: &mut ChaCha8Rng| {
        *[StageState::PendingReview, StageState::ChangesRequested, StageState::Approved, StageState::Rejected]
            .choose(rng)
            .unwrap()
    };
    for stage in Stage::ALL {
        let n = stage.number();
        if n < reach {
            if n >= 2 {
                let payload = match stage {
                    Stage::Stage2 => StagePayload::Stage2(stage2(rng, taxonomy)),
                    _ => StagePayload::Stage3 { narrative: words(rng, 20, 80), evaluation_objective: sentence(rng) },
                };
                s.apply_payload(payload.clone());
                push(&mut s, rng, payload);
            }
            s.stage_states.insert(stage, StageState::Approved);
        } else if n == reach {
            let state = final_state(rng);
            if n >= 2 {
                let payload = match stage {
                    Stage::Stage2 => StagePayload::Stage2(stage2(rng, taxonomy)),
                    _ => StagePayload::Stage3 { narrative: words(rng, 20, 80), evaluation_objective: sentence(rng) },
                };
                s.apply_payload(payload.clone());
                push(&mut s, rng, payload);
            }
            s.stage_states.insert(stage, state);
            if state == StageState::ChangesRequested {
                s.pending_feedback.insert(stage, words(rng, 1, 10));
            }
        }
    }
    s
}
