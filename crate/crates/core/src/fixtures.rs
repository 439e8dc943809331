//! The six financial-services use cases shipped with a fresh store.

use crate::schema::{
    ElicitationProvenance, Extra, Timestamp, UseCaseId, UseCaseWorksheet, UserDescriptor,
};

pub const FINANCIAL_SERVICES: &str = "Financial Services";

// 2025-06-02T00:00:00Z
const FIXTURE_EPOCH_MICROS: i64 = 1_748_822_400_000_000;

struct Spec {
    id: &'static str,
    name: &'static str,
    sub_sectors: &'static [&'static str],
    summary: &'static str,
    direct: &'static [(&'static str, &'static str)],
    indirect: &'static [(&'static str, &'static str)],
    outcomes: &'static [&'static str],
    positive: &'static [&'static str],
    negative: &'static [&'static str],
    kpis: &'static [&'static str],
}

const SPECS: [Spec; 6] = [
    Spec {
        id: "uc-cyber-defense-enablement",
        name: "Cyber Defense Enablement",
        sub_sectors: &["Banking", "Cybersecurity"],
        summary: "Generative AI assists security operations teams in detecting, triaging and responding to cyber threats against the institution.",
        direct: &[("Security operations analyst", "Triages alerts and investigates incidents across the enterprise")],
        indirect: &[
            ("Customers", "Depend on the institution keeping accounts and data secure"),
            ("Incident response leadership", "Act on escalated findings"),
        ],
        outcomes: &["Faster and more accurate detection and triage of security threats"],
        positive: &["Reduced mean time to detect and respond", "Less analyst fatigue from alert volume"],
        negative: &["Missed or hallucinated indicators of compromise", "Over-reliance on automated triage"],
        kpis: &["Mean time to detect and respond to incidents"],
    },
    Spec {
        id: "uc-developer-productivity",
        name: "Developer Productivity",
        sub_sectors: &["Technology"],
        summary: "Code assistants help internal software engineers write, review, test and document code for banking systems.",
        direct: &[
            ("Software engineer", "Builds and maintains internal applications"),
            ("Code reviewer", "Approves changes before release"),
        ],
        indirect: &[("Application users", "Rely on the quality of released software")],
        outcomes: &["Shorter delivery cycles", "Consistent code quality and documentation"],
        positive: &["More time spent on design work", "Faster onboarding to legacy codebases"],
        negative: &["Insecure or licensed code introduced into production", "Erosion of engineering skills"],
        kpis: &["Cycle time from commit to release", "Defect escape rate"],
    },
    Spec {
        id: "uc-financial-crimes-aggregation",
        name: "Financial Crimes Aggregation",
        sub_sectors: &["Anti-Money Laundering", "Fraud"],
        summary: "AI aggregates signals across transactions, customers and external sources to help investigators identify potential financial crime.",
        direct: &[("Financial crimes investigator", "Reviews alerts and builds cases")],
        indirect: &[
            ("Customers", "May be subject to investigation or account restrictions"),
            ("Law enforcement", "Receive referrals based on findings"),
        ],
        outcomes: &["More complete picture of suspicious activity", "Fewer false positive alerts"],
        positive: &["Higher investigator throughput", "Detection of complex multi-party schemes"],
        negative: &["Biased targeting of customer groups", "Privacy intrusion from data aggregation"],
        kpis: &["Alert-to-case conversion rate", "False positive rate"],
    },
    Spec {
        id: "uc-suspicious-activity-report-sar-filing",
        name: "Suspicious Activity Report (SAR) Filing",
        sub_sectors: &["Regulatory Compliance"],
        summary: "Generative AI drafts suspicious activity report narratives from case evidence for review by compliance analysts before filing.",
        direct: &[("Compliance analyst", "Prepares and files regulatory reports")],
        indirect: &[("Regulators", "Receive and act on filed reports"), ("Subjects of reports", "Are described in the filings")],
        outcomes: &["Timely, complete and consistent report narratives"],
        positive: &["Reduced drafting time per report", "More consistent narrative quality"],
        negative: &["Inaccurate statements in regulatory filings", "Disclosure of sensitive information"],
        kpis: &["Average time to file", "Regulator feedback on narrative quality"],
    },
    Spec {
        id: "uc-credit-memo-generation",
        name: "Credit Memo Generation",
        sub_sectors: &["Commercial Lending"],
        summary: "AI drafts credit memos summarising borrower financials, collateral and risk factors for credit officers.",
        direct: &[("Credit analyst", "Prepares credit packages"), ("Credit officer", "Approves lending decisions")],
        indirect: &[("Loan applicants", "Are affected by lending decisions")],
        outcomes: &["Faster credit decisions with complete supporting analysis"],
        positive: &["Shorter turnaround for loan applications"],
        negative: &["Misstated financial figures", "Unfair lending outcomes"],
        kpis: &["Memo preparation time", "Rate of memo corrections during approval"],
    },
    Spec {
        id: "uc-internal-call-center-support",
        name: "Internal Call Center Support",
        sub_sectors: &["Retail Banking", "Customer Operations"],
        summary: "An AI assistant helps internal call center agents find policy answers and summarise calls while serving customers.",
        direct: &[("Call center agent", "Handles customer calls and account servicing")],
        indirect: &[("Customers", "Receive answers and account actions from agents")],
        outcomes: &["Accurate answers delivered faster to customers", "Lower agent workload"],
        positive: &["Reduced average handle time", "Consistent policy guidance"],
        negative: &["Incorrect policy guidance passed to customers", "Exposure of customer data"],
        kpis: &["Average handle time", "First-call resolution rate"],
    },
];

fn build(spec: &Spec) -> UseCaseWorksheet {
    let at = Timestamp::from_unix_micros(FIXTURE_EPOCH_MICROS);
    let users = |pairs: &[(&str, &str)]| pairs.iter().map(|(r, c)| UserDescriptor::new(*r, *c)).collect();
    let texts = |items: &[&str]| items.iter().map(|s| s.to_string()).collect();
    UseCaseWorksheet {
        id: UseCaseId::new(spec.id),
        name: spec.name.into(),
        sector: FINANCIAL_SERVICES.into(),
        sub_sectors: texts(spec.sub_sectors),
        summary: spec.summary.into(),
        direct_users: users(spec.direct),
        indirect_users: users(spec.indirect),
        intended_outcomes: texts(spec.outcomes),
        positive_impacts: texts(spec.positive),
        negative_impacts: texts(spec.negative),
        kpis: texts(spec.kpis),
        provenance: ElicitationProvenance {
            method: "SME discussion (fixture)".into(),
            participants: Vec::new(),
            elicited_on: None,
            notes: "Shipped example use case; replace with elicited worksheet content.".into(),
        },
        created_at: at,
        updated_at: at,
        extra: Extra::new(),
    }
}

pub fn worksheets() -> Vec<UseCaseWorksheet> {
    SPECS.iter().map(build).collect()
}

pub fn worksheet(id: &str) -> Option<UseCaseWorksheet> {
    SPECS.iter().find(|s| s.id == id).map(build)
}

pub fn use_case_names() -> Vec<&'static str> {
    SPECS.iter().map(|s| s.name).collect()
}
