use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use care_core::baselines::{run_confmad, run_majority_vote, run_rsmad, run_single_pass, Agents};
use care_core::cohort::events::{write_csv, write_jsonl, EventFormat};
use care_core::cohort::{build_benchmark, read_bench, read_events, write_bench, BuildParams, PoolConfig, Sample};
use care_core::config::{BackendSpec, ConfigError, RunConfig, Workflow};
use care_core::digest::sha256_hex;
use care_core::engine::{run_care, CareContext};
use care_core::eval::{aggregate_all, reports_json, reports_table};
use care_core::llm::wire_log::WireLog;
use care_core::llm::{Backend, CallKey, ChatMessage, Role, Stage};
use care_core::privacy::{AuditLog, RemoteChannel};
use care_core::rubric::RubricSchema;
use care_core::synth::{generate, SynthConfig};
use care_core::trace::{read_traces, write_traces, Trace};

const EXIT_VALIDATION: u8 = 1;
const EXIT_BACKEND: u8 = 2;

#[derive(Parser)]
#[command(
    name = "care",
    version,
    about = "Cohort building, staged triage runs and evaluation reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic event file (JSON lines, or CSV for a .csv path).
    SynthEvents(SynthArgs),
    /// Build a class-balanced benchmark from an event file.
    BuildCohort(BuildArgs),
    /// Run one workflow over a benchmark and write traces and a report.
    #[command(long_about = "Run one workflow over a benchmark and write traces and a report.\n\n\
Settings resolve as: command-line flag, then the --config file, then the built-in default.\n\
Exit codes: 0 success, 1 validation error, 2 backend failure after retries.")]
    Run(Box<RunArgs>),
    /// Aggregate trace files into per-workflow reports.
    #[command(alias = "eval")]
    Report(ReportArgs),
    /// Check a rubric schema file and print its canonical form.
    ValidateRubric(ValidateArgs),
    /// Offline helper: ask a remote model to draft a rubric schema from the default one.
    AuthorRubric(AuthorArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    stays: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 24)]
    min_hours: i64,
    #[arg(long, default_value_t = 72)]
    max_hours: i64,
    #[arg(long, default_value_t = 0.6)]
    p_deteriorate: f64,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    n_per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Minimum hours between two samples of the same stay.
    #[arg(long, default_value_t = 12)]
    min_gap_hours: i64,
    /// Follow-up window for the SOFA label.
    #[arg(long, default_value_t = 12)]
    horizon_hours: i64,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliWorkflow {
    Care,
    Single,
    Vote,
    Rsmad,
    Confmad,
}

impl From<CliWorkflow> for Workflow {
    fn from(w: CliWorkflow) -> Self {
        match w {
            CliWorkflow::Care => Workflow::Care,
            CliWorkflow::Single => Workflow::Single,
            CliWorkflow::Vote => Workflow::Vote,
            CliWorkflow::Rsmad => Workflow::Rsmad,
            CliWorkflow::Confmad => Workflow::Confmad,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Benchmark file produced by build-cohort.
    #[arg(long)]
    bench: PathBuf,
    /// Run configuration (JSON, or TOML for a .toml path).
    #[arg(long)]
    config: Option<PathBuf>,
    /// [default: care]
    #[arg(long, value_enum)]
    workflow: Option<CliWorkflow>,
    /// Trace output (JSON lines).
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Report output (JSON); a table is always printed to stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Local backend: mock:<script.json> or http:<url>#<model>.
    #[arg(long, alias = "backend")]
    local: Option<String>,
    /// Remote advisory backend for the care workflow.
    #[arg(long)]
    remote: Option<String>,
    /// Debate agent A backend [default: the local backend].
    #[arg(long)]
    agent_a: Option<String>,
    /// Debate agent B backend [default: the local backend].
    #[arg(long)]
    agent_b: Option<String>,
    /// Debate agent C backend [default: the local backend].
    #[arg(long)]
    agent_c: Option<String>,
    /// Start every sample from a neutral state instead of the rule cascade.
    #[arg(long)]
    no_stage1: bool,
    /// Skip the remote advisory and merge.
    #[arg(long)]
    no_stage3: bool,
    /// Both ablations at once.
    #[arg(long)]
    backbone_only: bool,
    /// Rubric schema file [default: embedded schema].
    #[arg(long)]
    rubric: Option<PathBuf>,
    /// Audit log of remote calls [default: <traces>.audit.jsonl, else in memory].
    #[arg(long)]
    audit_log: Option<PathBuf>,
    /// Request/response log; local bodies are redacted.
    #[arg(long)]
    wire_log: Option<PathBuf>,
    /// Concurrent engine instances [default: 1].
    #[arg(long)]
    jobs: Option<usize>,
    /// Seed forwarded to HTTP backends [default: 0].
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, num_args = 1.., required = true)]
    traces: Vec<PathBuf>,
    /// Benchmark the traces were produced from; supplies labels.
    #[arg(long)]
    bench: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Write to a file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accept trace sets produced by different configurations.
    #[arg(long)]
    allow_mixed: bool,
}

#[derive(Args)]
struct ValidateArgs {
    /// Schema file [default: embedded schema].
    #[arg(long)]
    rubric: Option<PathBuf>,
}

#[derive(Args)]
struct AuthorArgs {
    /// Remote backend: mock:<script.json> or http:<url>#<model>.
    #[arg(long)]
    remote: String,
    #[arg(long)]
    out: PathBuf,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Validation(anyhow::Error),
    Backend(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Validation(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Validation(e.into())
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::SynthEvents(a) => synth_events(a).map_err(Failure::from),
        Command::BuildCohort(a) => build_cohort(a).map_err(Failure::from),
        Command::Run(a) => run(*a),
        Command::Report(a) => report(a).map_err(Failure::from),
        Command::ValidateRubric(a) => validate_rubric(a).map_err(Failure::from),
        Command::AuthorRubric(a) => author_rubric(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Backend(e)) => {
            eprintln!("backend failure: {e}");
            ExitCode::from(EXIT_BACKEND)
        }
    }
}

fn synth_events(a: SynthArgs) -> Result<()> {
    if a.min_hours < 2 || a.max_hours < a.min_hours {
        bail!("need 2 <= --min-hours <= --max-hours");
    }
    let records = generate(&SynthConfig {
        stays: a.stays,
        seed: a.seed,
        min_hours: a.min_hours,
        max_hours: a.max_hours,
        p_deteriorate: a.p_deteriorate,
    });
    let file = std::fs::File::create(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    let w = std::io::BufWriter::new(file);
    match EventFormat::from_path(&a.out) {
        EventFormat::Csv => write_csv(w, &records)?,
        EventFormat::JsonLines => write_jsonl(w, &records)?,
    }
    eprintln!(
        "wrote {} events for {} stays to {}",
        records.len(),
        a.stays,
        a.out.display()
    );
    Ok(())
}

fn build_cohort(a: BuildArgs) -> Result<()> {
    let bytes = std::fs::read(&a.events).with_context(|| format!("cannot read {}", a.events.display()))?;
    let ingested = read_events(&a.events)?;
    if ingested.rejected_unknown_kind + ingested.rejected_invalid > 0 {
        tracing::warn!(
            unknown_kind = ingested.rejected_unknown_kind,
            invalid = ingested.rejected_invalid,
            "skipped event rows"
        );
    }
    let params = BuildParams {
        events_digest: sha256_hex(&bytes),
        n_per_class: a.n_per_class,
        seed: a.seed,
        pool: PoolConfig {
            min_gap_hours: a.min_gap_hours,
            horizon_hours: a.horizon_hours,
        },
    };
    let bench = build_benchmark(&ingested, &params)?;
    write_bench(&a.out, &bench.samples, &bench.config_digest)?;
    eprintln!("pool: {}", serde_json::to_string(&bench.pool_stats).unwrap_or_default());
    eprintln!("wrote {} samples to {}", bench.samples.len(), a.out.display());
    Ok(())
}

/// Folds command-line flags over the config file.
fn resolve_config(a: &RunArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(w) = a.workflow {
        cfg.workflow = w.into();
    }
    let b = &mut cfg.backends;
    for (flag, slot, role) in [
        (&a.local, &mut b.local, Role::Local),
        (&a.remote, &mut b.remote, Role::Remote),
        (&a.agent_a, &mut b.agent_a, Role::Local),
        (&a.agent_b, &mut b.agent_b, Role::Local),
        (&a.agent_c, &mut b.agent_c, Role::Local),
    ] {
        if let Some(spec) = flag {
            *slot = Some(BackendSpec::new(spec.clone(), role));
        }
    }
    if a.no_stage1 || a.backbone_only {
        cfg.care.ablation.no_stage1 = true;
    }
    if a.no_stage3 || a.backbone_only {
        cfg.care.ablation.no_stage3 = true;
    }
    if let Some(r) = &a.rubric {
        cfg.rubric = Some(r.clone());
    }
    if let Some(j) = a.jobs {
        cfg.jobs = j;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let o = &mut cfg.outputs;
    for (flag, slot) in [
        (&a.traces, &mut o.traces),
        (&a.report, &mut o.report),
        (&a.audit_log, &mut o.audit_log),
        (&a.wire_log, &mut o.wire_log),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    if o.audit_log.is_none() {
        o.audit_log = o.traces.as_ref().map(|t| {
            let mut p = t.clone().into_os_string();
            p.push(".audit.jsonl");
            PathBuf::from(p)
        });
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(a: RunArgs) -> Result<(), Failure> {
    let cfg = resolve_config(&a)?;
    let schema = cfg.load_rubric()?;
    let digest = cfg.digest(&schema)?;
    let (bench, _) = read_bench(&a.bench).map_err(anyhow::Error::from)?;
    if bench.is_empty() {
        return Err(anyhow!("benchmark {} is empty", a.bench.display()).into());
    }
    let wire_log = match &cfg.outputs.wire_log {
        Some(p) => Some(WireLog::open(p).with_context(|| format!("cannot open {}", p.display()))?),
        None => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| anyhow!("cannot start worker pool: {e}"))?;

    let traces = match cfg.workflow {
        Workflow::Care => {
            let local = cfg.build_backend(cfg.backends.local.as_ref().expect("validated"), wire_log.as_ref())?;
            let channel = if cfg.care.ablation.no_stage3 {
                None
            } else {
                let spec = cfg.backends.remote.as_ref().expect("validated");
                let remote = cfg.build_backend(spec, wire_log.as_ref())?;
                let audit = match &cfg.outputs.audit_log {
                    Some(p) => AuditLog::open(p, &digest).with_context(|| format!("cannot open {}", p.display()))?,
                    None => AuditLog::in_memory(&digest),
                };
                Some(RemoteChannel::new(remote, spec.role, audit).map_err(anyhow::Error::from)?)
            };
            let ctx = CareContext {
                schema: &schema,
                local: local.as_ref(),
                remote: channel.as_ref(),
                config: &cfg.care,
                config_digest: &digest,
            };
            pool.install(|| bench.par_iter().map(|s| run_care(s, &ctx)).collect::<Vec<_>>())
        }
        Workflow::Single => {
            let local = cfg.build_backend(cfg.backends.local.as_ref().expect("validated"), wire_log.as_ref())?;
            let repairs = cfg.baseline_repair_attempts;
            par_run(&pool, &bench, |s| run_single_pass(s, local.as_ref(), repairs, &digest))
        }
        Workflow::Vote | Workflow::Rsmad | Workflow::Confmad => {
            let built: Vec<Arc<dyn Backend>> = (0..3)
                .map(|i| cfg.build_backend(cfg.agent_spec(i).expect("validated"), wire_log.as_ref()))
                .collect::<Result<_, _>>()?;
            let agents = Agents {
                a: built[0].as_ref(),
                b: built[1].as_ref(),
                c: built[2].as_ref(),
            };
            let repairs = cfg.baseline_repair_attempts;
            let workflow = match cfg.workflow {
                Workflow::Vote => run_majority_vote,
                Workflow::Rsmad => run_rsmad,
                _ => run_confmad,
            };
            par_run(&pool, &bench, |s| workflow(s, &agents, repairs, &digest))
        }
    };

    if let Some(p) = &cfg.outputs.traces {
        write_traces(p, &traces).with_context(|| format!("cannot write {}", p.display()))?;
    }
    let reports = aggregate_all(&traces, &bench, false).map_err(anyhow::Error::from)?;
    if let Some(p) = &cfg.outputs.report {
        std::fs::write(p, reports_json(&reports)).with_context(|| format!("cannot write {}", p.display()))?;
    }
    print!("{}", reports_table(&reports));

    let failures: Vec<&Trace> = traces.iter().filter(|t| t.backend_failures() > 0).collect();
    if let Some(first) = failures.first() {
        let detail = first
            .calls
            .iter()
            .find(|c| c.backend_failure)
            .and_then(|c| c.error.clone())
            .unwrap_or_default();
        return Err(Failure::Backend(format!(
            "{} of {} samples hit a backend failure; first: {detail}",
            failures.len(),
            traces.len()
        )));
    }
    Ok(())
}

/// Order-preserving parallel map bounded by the pool size.
fn par_run(pool: &rayon::ThreadPool, bench: &[Sample], f: impl Fn(&Sample) -> Trace + Sync) -> Vec<Trace> {
    pool.install(|| bench.par_iter().map(&f).collect())
}

fn report(a: ReportArgs) -> Result<()> {
    let (bench, _) = read_bench(&a.bench)?;
    let mut traces = Vec::new();
    for p in &a.traces {
        traces.extend(read_traces(p).map_err(|e| anyhow!("{}: {e}", p.display()))?);
    }
    let reports = aggregate_all(&traces, &bench, a.allow_mixed)?;
    let text = match a.format {
        Format::Json => reports_json(&reports),
        Format::Table => reports_table(&reports),
    };
    match &a.out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn validate_rubric(a: ValidateArgs) -> Result<()> {
    let schema = match &a.rubric {
        Some(p) => RubricSchema::load(p)?,
        None => RubricSchema::default(),
    };
    println!("{}", schema.to_json_string());
    eprintln!("ok: {} categories", schema.categories().len());
    Ok(())
}

const AUTHOR_SYSTEM: &str = "You design severity rubrics for intensive care triage. You never receive patient data.";

fn author_rubric(a: AuthorArgs) -> Result<(), Failure> {
    let spec = BackendSpec::new(a.remote, Role::Remote);
    let backend = RunConfig::default().build_backend(&spec, None)?;
    let seed = RubricSchema::default().to_json_string();
    let messages = vec![
        ChatMessage::system(AUTHOR_SYSTEM),
        ChatMessage::user(format!(
            "Revise the rubric below. Keep five categories with distinct severities from 1 to 5, \
upper-case names and the same JSON shape. Reply with the JSON document only.\n\n{seed}"
        )),
    ];
    let key = CallKey {
        sample: None,
        stage: Stage::Rubric,
        round: 0,
        agent: None,
        attempt: 0,
    };
    let completion = backend
        .complete(&key, &messages)
        .map_err(|e| Failure::Backend(e.to_string()))?;
    let text = completion.text.trim();
    let body = text
        .find('{')
        .zip(text.rfind('}'))
        .map(|(i, j)| &text[i..=j])
        .ok_or_else(|| anyhow!("reply contains no JSON object"))?;
    let schema = RubricSchema::from_json_str(body).map_err(|e| anyhow!("drafted schema is invalid: {e}"))?;
    write_text(&a.out, &schema.to_json_string())?;
    eprintln!("wrote {} categories to {}", schema.categories().len(), a.out.display());
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, format!("{text}\n")).with_context(|| format!("cannot write {}", path.display()))
}
