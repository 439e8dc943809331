use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use scenariokit::rubric::weighted_score;
use scenariokit::schema::validate_scenario;
use scenariokit::taxonomy::coverage_report;
use scenariokit::{parse, serialize, ParseMode, RiskTaxonomy, RubricDefinition, Scenario};

fn codec(c: &mut Criterion) {
    let s = scenariokit_bench::corpus(1).remove(0);
    let bytes = serialize(&s);
    c.bench_function("serialize_scenario", |b| b.iter(|| serialize(black_box(&s))));
    c.bench_function("parse_scenario_strict", |b| {
        b.iter(|| parse::<Scenario>(black_box(&bytes), ParseMode::Strict).unwrap())
    });
}

fn validation(c: &mut Criterion) {
    let s = scenariokit_bench::corpus(1).remove(0);
    let taxonomy = RiskTaxonomy::default_taxonomy();
    c.bench_function("validate_scenario", |b| b.iter(|| validate_scenario(black_box(&s), &taxonomy)));
}

fn rubric(c: &mut Criterion) {
    let rubric = RubricDefinition::default_rubric();
    let scores: BTreeMap<String, u32> =
        rubric.categories.iter().enumerate().map(|(i, cat)| (cat.id.clone(), i as u32 % (rubric.scale_max + 1))).collect();
    c.bench_function("weighted_score_exact", |b| b.iter(|| weighted_score(&rubric, black_box(&scores))));
}

fn coverage(c: &mut Criterion) {
    let corpus = scenariokit_bench::corpus(18);
    let taxonomy = RiskTaxonomy::default_taxonomy();
    c.bench_function("coverage_report_108", |b| b.iter(|| coverage_report(black_box(&corpus), &taxonomy, 3)));
}

criterion_group!(benches, codec, validation, rubric, coverage);
criterion_main!(benches);
