//! `scenariokit`: run the scenario pipeline from the command line.

mod error;

use std::collections::BTreeMap;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use scenariokit::rubric::HumanInput;
use scenariokit::schema::{validate_scenario_with_parent, validate_worksheet, ReviewDecision, StagePayload, Verdict};
use scenariokit::store::export::ExportFormat;
use scenariokit::store::Kind;
use scenariokit::{
    fixtures, parse, serialize, Engine, EngineConfig, ParseMode, Scenario, Stage, Store, UseCaseWorksheet,
};

use error::CliError;

type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Parser)]
#[command(name = "scenariokit", version, about = "Staged scenario expansion with human review gates")]
struct Cli {
    /// Store directory.
    #[arg(long, global = true, env = "SCENARIOKIT_STORE")]
    store: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    /// Seed passed to generation backends.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Name recorded in the audit log.
    #[arg(long, global = true, env = "SCENARIOKIT_ACTOR", default_value = "operator")]
    actor: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a store with the default taxonomy, rubric, templates and the six fixture use cases.
    Init { dir: PathBuf },
    #[command(subcommand, name = "usecase")]
    UseCase(UseCaseCmd),
    #[command(subcommand)]
    Scenario(ScenarioCmd),
    /// Run a stage: stage 1 drafts new scenarios, stages 2 and 3 run over eligible ones.
    Expand(ExpandArgs),
    #[command(subcommand)]
    Review(ReviewCmd),
    #[command(subcommand)]
    Rubric(RubricCmd),
    /// Risk category coverage over non-rejected scenarios.
    Coverage {
        #[arg(long)]
        use_case: Option<String>,
        #[arg(long, default_value_t = 0)]
        floor: usize,
    },
    /// Stage-state counts for a use case.
    Status {
        #[arg(long)]
        use_case: String,
    },
    #[command(subcommand)]
    Export(ExportCmd),
    /// Field-level changes between two revisions of a scenario.
    Diff {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        from: u64,
        #[arg(long)]
        to: u64,
    },
    /// Show an expansion job.
    Job { id: String },
    /// Start the review service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

#[derive(Subcommand)]
enum UseCaseCmd {
    /// Add a worksheet from a JSON file.
    Add { file: PathBuf },
    Show { id: String },
    List,
    /// Validate a worksheet file, or a stored use case by id.
    Validate { target: String },
}

#[derive(Subcommand)]
enum ScenarioCmd {
    Show { id: String },
    List {
        #[arg(long)]
        use_case: Option<String>,
    },
}

#[derive(Args)]
struct ExpandArgs {
    #[arg(long)]
    use_case: Option<String>,
    /// Run on one scenario instead of a whole use case.
    #[arg(long, conflicts_with = "use_case")]
    scenario: Option<String>,
    #[arg(long)]
    stage: Stage,
    /// Scenarios to draft (stage 1).
    #[arg(long)]
    count: Option<u32>,
    #[arg(long, default_value = "mock")]
    backend: String,
}

#[derive(Subcommand)]
enum ReviewCmd {
    /// Items waiting for review, oldest first.
    List {
        #[arg(long)]
        use_case: Option<String>,
        #[arg(long)]
        stage: Option<Stage>,
    },
    /// Record a checkpoint decision.
    Decide {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        stage: Stage,
        /// approve, edit, regenerate or reject.
        #[arg(long)]
        verdict: Verdict,
        /// JSON file with the edited content for `edit`.
        #[arg(long)]
        edit_file: Option<PathBuf>,
        #[arg(long, default_value = "")]
        comments: String,
        /// Refuse the decision unless the scenario is still at this revision.
        #[arg(long)]
        if_revision: Option<u64>,
    },
    /// Approve every pending item of a use case at one stage.
    ApproveAll {
        #[arg(long)]
        use_case: String,
        #[arg(long)]
        stage: Stage,
    },
}

#[derive(Subcommand)]
enum RubricCmd {
    /// Score a scenario. The scores file maps category ids to scores, or holds
    /// `{"scores": {..}, "notes": {..}}`.
    Assess {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        scores: PathBuf,
    },
}

#[derive(Subcommand)]
enum ExportCmd {
    /// Use Case / Scenario Title / Scenario Description table.
    Summary {
        #[arg(long)]
        use_case: Option<String>,
        #[arg(long, default_value = "csv")]
        format: ExportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        include_rejected: bool,
    },
    /// Every element of one scenario with its history.
    Full {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit as u8)
        }
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
}

impl Ctx<'_> {
    fn root(&self) -> Result<&Path> {
        self.cli.store.as_deref().ok_or_else(|| {
            CliError::usage("no store given: pass --store <dir> or set SCENARIOKIT_STORE")
        })
    }

    fn config(&self) -> EngineConfig {
        EngineConfig { seed: self.cli.seed, ..EngineConfig::default() }
    }

    fn reader(&self) -> Result<Engine> {
        let store = Store::open_read_only(self.root()?)?;
        Ok(Engine::from_store(Arc::new(store), self.config())?)
    }

    fn writer(&self) -> Result<Engine> {
        let store = Store::open(self.root()?)?;
        Ok(Engine::from_store(Arc::new(store), self.config())?)
    }

    fn actor(&self) -> &str {
        &self.cli.actor
    }

    /// Prints `value` as JSON with `--json`, otherwise the text from `human`.
    fn emit<T: serde::Serialize>(&self, value: &T, human: impl FnOnce() -> String) {
        let mut out = std::io::stdout().lock();
        if self.cli.json {
            let _ = serde_json::to_writer_pretty(&mut out, value);
            let _ = writeln!(out);
        } else {
            let _ = write!(out, "{}", human());
        }
    }

    /// Documents print in their canonical encoding under `--json`.
    fn emit_document<D: scenariokit::Document>(&self, doc: &D, human: impl FnOnce() -> String) {
        if self.cli.json {
            let _ = std::io::stdout().lock().write_all(&serialize(doc));
        } else {
            print!("{}", human());
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

fn write_out(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::io(p, e)),
        None => std::io::stdout().lock().write_all(bytes).map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

fn run(cli: &Cli) -> Result<()> {
    let ctx = Ctx { cli };
    match &cli.command {
        Command::Init { dir } => init(&ctx, dir),
        Command::UseCase(cmd) => use_case(&ctx, cmd),
        Command::Scenario(cmd) => scenario(&ctx, cmd),
        Command::Expand(args) => expand(&ctx, args),
        Command::Review(cmd) => review(&ctx, cmd),
        Command::Rubric(RubricCmd::Assess { scenario, scores }) => assess(&ctx, scenario, scores),
        Command::Coverage { use_case, floor } => {
            let e = ctx.reader()?;
            if let Some(uc) = use_case {
                e.use_case(uc)?;
            }
            let report = e.coverage(use_case.as_deref(), *floor)?;
            ctx.emit(&report, || {
                let mut t = format!("{} scenarios, {} with risks (floor {})\n", report.scenario_count, report.scenarios_with_risks, report.floor);
                for c in &report.categories {
                    let flag = if c.below_floor { "  below floor" } else { "" };
                    t.push_str(&format!("{:>4}  {}{flag}\n", c.scenario_count, c.name));
                }
                t
            });
            Ok(())
        }
        Command::Status { use_case } => {
            let e = ctx.reader()?;
            let status = e.pipeline_status(use_case)?;
            ctx.emit(&status, || {
                let mut t = format!("{}: {} scenarios\n", status.use_case_id, status.scenario_count);
                for (stage, counts) in &status.stages {
                    let parts: Vec<String> = counts.iter().filter(|(_, n)| **n > 0).map(|(s, n)| format!("{s} {n}")).collect();
                    t.push_str(&format!("  {stage}: {}\n", if parts.is_empty() { "-".into() } else { parts.join(", ") }));
                }
                t
            });
            Ok(())
        }
        Command::Export(cmd) => export(&ctx, cmd),
        Command::Diff { scenario, from, to } => {
            let e = ctx.reader()?;
            let changes = e.diff(scenario, *from, *to)?;
            ctx.emit(&changes, || {
                changes
                    .iter()
                    .map(|c| {
                        let show = |v: &Option<serde_json::Value>| v.as_ref().map_or("(absent)".into(), |v| v.to_string());
                        format!("{}: {} -> {}\n", c.field, show(&c.before), show(&c.after))
                    })
                    .collect()
            });
            Ok(())
        }
        Command::Job { id } => {
            let job = ctx.reader()?.job(id)?;
            ctx.emit_document(&job, || {
                format!(
                    "{} {} {} attempts={} produced={}\n",
                    job.id,
                    job.stage,
                    job.status.key(),
                    job.attempts,
                    job.produced.len()
                )
            });
            Ok(())
        }
        Command::Serve { addr } => {
            tracing_subscriber::fmt().with_env_filter(
                tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
            ).init();
            let engine = Arc::new(ctx.writer()?);
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::io(Path::new("<runtime>"), e))?;
            rt.block_on(scenariokit_service::serve(engine, *addr)).map_err(|e| CliError::io(Path::new("<listener>"), e))
        }
    }
}

fn init(ctx: &Ctx, dir: &Path) -> Result<()> {
    let store = Store::init(dir)?;
    let e = Engine::from_store(Arc::new(store), ctx.config())?;
    let mut ids = Vec::new();
    for w in fixtures::worksheets() {
        e.add_use_case(&w, ctx.actor())?;
        ids.push(w.id.0);
    }
    let value = serde_json::json!({ "root": dir, "use_cases": ids });
    ctx.emit(&value, || format!("initialized {} with {} use cases\n", dir.display(), ids.len()));
    Ok(())
}

fn use_case(ctx: &Ctx, cmd: &UseCaseCmd) -> Result<()> {
    match cmd {
        UseCaseCmd::Add { file } => {
            let w: UseCaseWorksheet = parse(&read_file(file)?, ParseMode::Strict).map_err(|e| CliError::parse(file, e))?;
            let rev = ctx.writer()?.add_use_case(&w, ctx.actor())?;
            ctx.emit(&serde_json::json!({ "id": w.id, "revision": rev }), || format!("added {}\n", w.id));
        }
        UseCaseCmd::Show { id } => {
            let w = ctx.reader()?.use_case(id)?.doc;
            ctx.emit_document(&w, || {
                let users = |u: &[scenariokit::UserDescriptor]| u.iter().map(|u| u.role.clone()).collect::<Vec<_>>().join(", ");
                format!(
                    "{} ({})\nsector: {}\nsummary: {}\ndirect users: {}\nindirect users: {}\nintended outcomes: {}\nkpis: {}\n",
                    w.name,
                    w.id,
                    w.sector,
                    w.summary,
                    users(&w.direct_users),
                    users(&w.indirect_users),
                    w.intended_outcomes.join("; "),
                    w.kpis.join("; ")
                )
            });
        }
        UseCaseCmd::List => {
            let e = ctx.reader()?;
            let list = e.store().all::<UseCaseWorksheet>()?;
            ctx.emit(&list, || {
                list.iter()
                    .map(|w| {
                        let n = e.store().list_scenarios(w.id.as_str()).map(|l| l.len()).unwrap_or(0);
                        format!("{}\t{}\t{} scenarios\n", w.id, w.name, n)
                    })
                    .collect()
            });
        }
        UseCaseCmd::Validate { target } => {
            let path = Path::new(target);
            let w: UseCaseWorksheet = if path.exists() {
                parse(&read_file(path)?, ParseMode::Strict).map_err(|e| CliError::parse(path, e))?
            } else {
                ctx.reader()?.use_case(target)?.doc
            };
            let report = validate_worksheet(&w);
            if !report.is_clean() {
                return Err(CliError::findings("validation_failed", format!("{} has {} finding(s)", w.id, report.len()), report));
            }
            ctx.emit(&serde_json::json!({ "id": w.id, "findings": [] }), || format!("{} is valid\n", w.id));
        }
    }
    Ok(())
}

fn scenario_line(s: &Scenario) -> String {
    let states: Vec<&str> = Stage::ALL.iter().map(|st| s.state(*st).key()).collect();
    format!("{}\t{}\t{}\n", s.id, states.join("/"), s.title)
}

fn scenario(ctx: &Ctx, cmd: &ScenarioCmd) -> Result<()> {
    let e = ctx.reader()?;
    match cmd {
        ScenarioCmd::Show { id } => {
            let s = e.scenario(id)?.doc;
            let w = e.use_case(s.use_case_id.as_str()).ok().map(|v| v.doc);
            let report = validate_scenario_with_parent(&s, &e.store().taxonomy()?, w.as_ref());
            ctx.emit_document(&s, || {
                let mut t = String::from_utf8_lossy(&e.store().export_full(id).unwrap_or_default()).into_owned();
                for f in &report.findings {
                    t.push_str(&format!("finding: {f}\n"));
                }
                t
            });
        }
        ScenarioCmd::List { use_case } => {
            let list: Vec<Scenario> = match use_case {
                Some(uc) => {
                    e.use_case(uc)?;
                    e.store().scenarios_for(uc)?
                }
                None => e.store().all()?,
            };
            ctx.emit(&list, || list.iter().map(scenario_line).collect());
        }
    }
    Ok(())
}

fn expand(ctx: &Ctx, args: &ExpandArgs) -> Result<()> {
    let e = ctx.writer()?;
    let req = scenariokit::pipeline::ExpandRequest {
        stage: args.stage,
        use_case_id: args.use_case.clone().map(Into::into),
        scenario_id: args.scenario.clone().map(Into::into),
        target_count: args.count,
        backend_id: args.backend.clone(),
        actor: ctx.actor().to_string(),
    };
    if req.use_case_id.is_none() && req.scenario_id.is_none() {
        return Err(CliError::usage("expand needs --use-case or --scenario"));
    }
    let job = e.plan_expansion(&req)?;
    let job = e.run_job(&job.id)?;
    ctx.emit_document(&job, || {
        let mut t = format!(
            "{}: {} scenario(s) at {} awaiting review ({} generation call(s))\n",
            job.id,
            job.produced.len(),
            job.stage,
            job.attempts
        );
        for f in &job.failures {
            t.push_str(&format!("  note: {}\n", f.reason));
        }
        t
    });
    Ok(())
}

fn edited_payload(stage: Stage, path: &Path) -> Result<StagePayload> {
    let value: serde_json::Value =
        serde_json::from_slice(&read_file(path)?).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let wrapped = match &value {
        serde_json::Value::Object(m) if m.len() == 1 && m.keys().next().is_some_and(|k| k.starts_with("stage")) => value,
        _ => serde_json::json!({ stage.key(): value }),
    };
    serde_json::from_value(wrapped).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn review(ctx: &Ctx, cmd: &ReviewCmd) -> Result<()> {
    match cmd {
        ReviewCmd::List { use_case, stage } => {
            let e = ctx.reader()?;
            let items = e.pending_reviews(use_case.as_deref(), *stage)?;
            ctx.emit(&items, || {
                items.iter().map(|p| format!("{}\t{}\t{}\t{}\n", p.scenario_id, p.stage, p.since, p.title)).collect()
            });
        }
        ReviewCmd::Decide { scenario, stage, verdict, edit_file, comments, if_revision } => {
            let e = ctx.writer()?;
            let edited_payload = edit_file.as_deref().map(|p| edited_payload(*stage, p)).transpose()?;
            let decision = ReviewDecision {
                reviewer: ctx.actor().to_string(),
                scenario_id: scenario.as_str().into(),
                stage: *stage,
                verdict: *verdict,
                comments: comments.clone(),
                edited_payload,
                timestamp: e.now(),
            };
            let s = e.submit_review(&decision, *if_revision)?;
            ctx.emit_document(&s, || format!("{} {} is now {}\n", s.id, stage, s.state(*stage).key()));
        }
        ReviewCmd::ApproveAll { use_case, stage } => {
            let e = ctx.writer()?;
            e.use_case(use_case)?;
            let mut approved = Vec::new();
            for p in e.pending_reviews(Some(use_case), Some(*stage))? {
                let decision = ReviewDecision {
                    reviewer: ctx.actor().to_string(),
                    scenario_id: p.scenario_id.clone(),
                    stage: *stage,
                    verdict: Verdict::Approve,
                    comments: String::new(),
                    edited_payload: None,
                    timestamp: e.now(),
                };
                e.submit_review(&decision, Some(p.revision))?;
                approved.push(p.scenario_id);
            }
            ctx.emit(&approved, || format!("approved {} scenario(s) at {stage}\n", approved.len()));
        }
    }
    Ok(())
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoresFile {
    scores: BTreeMap<String, u32>,
    #[serde(default)]
    notes: BTreeMap<String, String>,
}

fn assess(ctx: &Ctx, scenario: &str, path: &Path) -> Result<()> {
    let bytes = read_file(path)?;
    let file: ScoresFile = serde_json::from_slice(&bytes)
        .or_else(|_| serde_json::from_slice(&bytes).map(|scores| ScoresFile { scores, notes: BTreeMap::new() }))
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let mut input: BTreeMap<String, HumanInput> = BTreeMap::new();
    for (cat, score) in file.scores {
        input.entry(cat).or_default().score = Some(score);
    }
    for (cat, notes) in file.notes {
        input.entry(cat).or_default().notes = notes;
    }
    let a = ctx.writer()?.record_assessment(scenario, &input, ctx.actor())?;
    ctx.emit_document(&a, || {
        let mut t = format!("{}: {:?} (score {:.3} = {})\n", a.id, a.verdict, a.weighted_score, a.weighted_score_exact);
        for f in &a.mandatory_failures {
            t.push_str(&format!("  mandatory check failed: {f}\n"));
        }
        for u in &a.unscored {
            t.push_str(&format!("  unscored: {u}\n"));
        }
        t
    });
    Ok(())
}

fn export(ctx: &Ctx, cmd: &ExportCmd) -> Result<()> {
    let e = ctx.reader()?;
    match cmd {
        ExportCmd::Summary { use_case, format, out, include_rejected } => {
            let ids = match use_case {
                Some(uc) => {
                    e.use_case(uc)?;
                    e.store().list_scenarios(uc)?
                }
                None => e.store().ids(Kind::Scenario)?,
            };
            write_out(out.as_deref(), &e.store().export_summary(&ids, *format, *include_rejected)?)
        }
        ExportCmd::Full { scenario, out } => write_out(out.as_deref(), &e.store().export_full(scenario)?),
    }
}
