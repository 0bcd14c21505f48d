use std::collections::BTreeMap;
use std::error::Error;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use loopwright::bundle::verify_bundle;
use loopwright::config::{load_experiment, load_registry, load_service};
use loopwright::dataset::{import_corpus, ImportOptions};
use loopwright::eventlog::{self, LogError};
use loopwright::experiment::{fetch_moderation_scores, moderation_table, run_hs_detection, HttpModeration, ModerationCache};
use loopwright::gateway::{Gateway, HttpBackend};
use loopwright::jsonl;
use loopwright::pipeline::{run_pipeline, PipelineOptions};
use loopwright::project::{Project, ProjectError, EVENTS_FILE};
use loopwright::report::{iaa_table, write_iaa_csv, write_moderation_csv, write_results_csv};
use loopwright::service::{self, Service};
use loopwright_core::experiment::Track;
use loopwright_core::metrics::{
    cohens_kappa, compare_tracks, krippendorff_alpha_nominal, percent_agreement, AnnotationMatrix,
};
use loopwright_core::{AnnotationEvent, AnnotatorRef, CwLabel, PromptMode};

type AnyResult<T = ()> = Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "loopwright", version, about = "LLM-in-the-loop check-worthiness annotation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Import a messages JSONL corpus into a new project directory.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        project: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Additional metadata keys to reject.
        #[arg(long = "deny-field")]
        deny_fields: Vec<String>,
    },
    /// Sample model triples, route, and apply judge labels.
    Run(RunArgs),
    /// Record full-human votes for the platinum track.
    Platinum {
        #[arg(long)]
        project: PathBuf,
        #[arg(long)]
        file: PathBuf,
    },
    /// Agreement statistics over a label matrix or a project.
    Metrics(MetricsArgs),
    /// Hate speech detection and moderation-score comparisons.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Write the release bundle to PROJECT/exports.
    Export {
        #[arg(long)]
        project: PathBuf,
    },
    /// Check a bundle's manifest and cross-file references.
    Verify {
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Serve annotation tasks over HTTP.
    Serve {
        /// Project directories to serve; the directory name is the id.
        #[arg(long = "project")]
        projects: Vec<PathBuf>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Where POST /projects creates new projects.
        #[arg(long)]
        root: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Zero,
    One,
}

impl From<Mode> for PromptMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Zero => PromptMode::ZeroShot,
            Mode::One => PromptMode::OneShot,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    project: PathBuf,
    #[arg(long)]
    registry: PathBuf,
    #[arg(long)]
    model: String,
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long)]
    human_file: Option<PathBuf>,
    #[arg(long, conflicts_with = "serve_judge")]
    judge_file: Option<PathBuf>,
    /// Serve open judge cases at this address after sampling.
    #[arg(long)]
    serve_judge: Option<String>,
    /// Service token file, required with --serve-judge.
    #[arg(long, requires = "serve_judge")]
    service_config: Option<PathBuf>,
    /// Continue a project that already has model output.
    #[arg(long)]
    resume: bool,
    /// Truncate a torn final log entry before resuming.
    #[arg(long)]
    repair_log: bool,
    #[arg(long)]
    max_claims: Option<usize>,
    /// Append every model request and response to this JSONL file.
    #[arg(long)]
    audit: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricOp {
    Agreement,
    AgreementBinary,
    Kappa,
    KappaBinary,
    Alpha,
    AlphaBinary,
    Iaa,
    Variability,
    Effort,
    Distribution,
    Tracks,
}

#[derive(Args)]
struct MetricsArgs {
    /// JSONL rows of {item, rater, label}.
    #[arg(long, required_unless_present = "project")]
    matrix: Option<PathBuf>,
    #[arg(long)]
    project: Option<PathBuf>,
    #[arg(long, value_enum)]
    op: MetricOp,
    /// Rater pair for kappa; defaults to the first two raters.
    #[arg(long, num_args = 2)]
    raters: Option<Vec<String>>,
    /// Also write the table as CSV (iaa only).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Hate speech detection with and without check-worthiness tags.
    HsDetect {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        project: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Moderation scores of hateful messages by CFS presence.
    Moderation {
        #[arg(long)]
        project: PathBuf,
        #[arg(long)]
        scores_cache: PathBuf,
        #[arg(long, default_value = "https://api.openai.com/v1/moderations")]
        endpoint: String,
        #[arg(long, default_value = "OPENAI_API_KEY")]
        api_key_env: String,
        #[arg(long)]
        model: Option<String>,
        #[arg(long, default_value_t = 1)]
        concurrency: usize,
        #[arg(long, value_enum, default_value_t = TrackArg::Gold)]
        track: TrackArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TrackArg {
    Gold,
    Platinum,
}

#[derive(Deserialize)]
struct MatrixRow {
    item: String,
    rater: String,
    label: CwLabel,
}

fn print_json<T: Serialize>(value: &T) -> AnyResult {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn track_labels(project: &Project, track: Track) -> BTreeMap<String, CwLabel> {
    match track {
        Track::Gold => project.state().gold(),
        Track::Platinum => project.state().platinum().into_iter().map(|(k, v)| (k, v.label)).collect(),
    }
}

fn open_project(dir: &Path, repair: bool) -> AnyResult<Project> {
    if repair {
        let removed = eventlog::repair(&dir.join(EVENTS_FILE))?;
        if removed > 0 {
            eprintln!("removed {removed} bytes of torn log tail");
        }
    }
    match Project::open(dir) {
        Err(ProjectError::Log(e @ LogError::CorruptLog { .. })) => {
            Err(format!("{e}; rerun with --repair-log to truncate to the last complete entry").into())
        }
        other => Ok(other?),
    }
}

async fn run(args: RunArgs) -> AnyResult {
    let project = open_project(&args.project, args.repair_log)?;
    if !args.resume && !project.state().triples.is_empty() {
        return Err("project already has model output; pass --resume to continue it".into());
    }
    let registry = load_registry(&args.registry)?;
    let spec = registry.get(&args.model)?.clone();
    let humans: Vec<AnnotationEvent> = args.human_file.as_deref().map(jsonl::read).transpose()?.unwrap_or_default();
    let judges: Vec<AnnotationEvent> = args.judge_file.as_deref().map(jsonl::read).transpose()?.unwrap_or_default();
    let mut gateway = Gateway::new(Arc::new(HttpBackend::new()));
    if let Some(path) = &args.audit {
        gateway = gateway.with_audit(path)?;
    }
    let shared = project.into_shared();
    let options = PipelineOptions { model: spec, mode: args.mode.into(), max_claims: args.max_claims };
    let outcome = run_pipeline(&shared, &gateway, &humans, &judges, &options).await?;
    for s in &outcome.skipped_labels {
        eprintln!("skipped label for {}: {}", s.claim_id, s.error);
    }
    eprintln!(
        "sampled {} claims; {} awaiting human, {} awaiting judge, {} failed",
        outcome.sampled,
        outcome.report.awaiting_human.len(),
        outcome.report.awaiting_judge.len(),
        outcome.report.failures.len()
    );
    match &args.report {
        Some(path) => serde_json::to_writer_pretty(File::create(path)?, &outcome.report)?,
        None => print_json(&outcome.report)?,
    }
    if let Some(addr) = args.serve_judge {
        let config_path = args.service_config.ok_or("--serve-judge needs --service-config")?;
        let service = Service::new(load_service(&config_path)?);
        service.add_project(&project_id(&args.project), shared);
        serve_on(&addr, Arc::new(service)).await?;
    }
    Ok(())
}

fn project_id(dir: &Path) -> String {
    dir.canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "project".into())
}

async fn serve_on(addr: &str, service: Arc<Service>) -> AnyResult {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    service::serve(listener, service).await?;
    Ok(())
}

fn metrics(args: MetricsArgs) -> AnyResult {
    if let Some(dir) = &args.project {
        let project = open_project(dir, false)?;
        return match args.op {
            MetricOp::Variability => print_json(&project.variability()),
            MetricOp::Effort => print_json(&project.effort()),
            MetricOp::Distribution => print_json(&serde_json::json!({
                "gold": project.label_distribution(false),
                "platinum": project.label_distribution(true),
            })),
            MetricOp::Tracks => {
                let (cw3, cw2) = compare_tracks(&track_labels(&project, Track::Gold), &track_labels(&project, Track::Platinum))?;
                print_json(&serde_json::json!({ "kappa_3class": cw3, "kappa_binary": cw2 }))
            }
            _ => Err("with --project, op must be variability, effort, distribution or tracks".into()),
        };
    }
    let path = args.matrix.as_deref().ok_or("--matrix is required")?;
    let rows: Vec<MatrixRow> = jsonl::read(path)?;
    let mut items: Vec<String> = Vec::new();
    let mut raters: Vec<AnnotatorRef> = Vec::new();
    for r in &rows {
        if !items.contains(&r.item) {
            items.push(r.item.clone());
        }
        let rater = AnnotatorRef::human(r.rater.clone());
        if !raters.contains(&rater) {
            raters.push(rater);
        }
    }
    let mut m = AnnotationMatrix::<CwLabel>::new(items, raters.clone())?;
    for r in &rows {
        m.set(&r.item, &AnnotatorRef::human(r.rater.clone()), r.label)?;
    }
    let binary = m.collapsed();
    let pair = match &args.raters {
        Some(v) => (AnnotatorRef::human(v[0].clone()), AnnotatorRef::human(v[1].clone())),
        None if raters.len() >= 2 => (raters[0].clone(), raters[1].clone()),
        None => return Err("matrix needs at least two raters".into()),
    };
    let value = match args.op {
        MetricOp::Agreement => percent_agreement(&m, &pair.0, &pair.1)?,
        MetricOp::AgreementBinary => percent_agreement(&binary, &pair.0, &pair.1)?,
        MetricOp::Kappa => cohens_kappa(&m, &pair.0, &pair.1)?,
        MetricOp::KappaBinary => cohens_kappa(&binary, &pair.0, &pair.1)?,
        MetricOp::Alpha => krippendorff_alpha_nominal(&m)?,
        MetricOp::AlphaBinary => krippendorff_alpha_nominal(&binary)?,
        MetricOp::Iaa => {
            let table = iaa_table(&m)?;
            if let Some(csv_path) = &args.csv {
                write_iaa_csv(File::create(csv_path)?, &table)?;
            }
            return print_json(&table);
        }
        _ => return Err("this op needs --project".into()),
    };
    print_json(&serde_json::json!({ "value": value }))
}

async fn experiment(cmd: ExperimentCommand) -> AnyResult {
    match cmd {
        ExperimentCommand::HsDetect { config, registry, project, out } => {
            let cfg = load_experiment(&config)?;
            let registry = load_registry(&registry)?;
            let project = open_project(&project, false)?;
            let labels = track_labels(&project, cfg.cw_track);
            let gateway = Gateway::new(Arc::new(HttpBackend::new()));
            let result = run_hs_detection(&cfg, &registry, &gateway, project.dataset(), &labels).await?;
            std::fs::create_dir_all(&out)?;
            write_results_csv(File::create(out.join("results.csv"))?, &result.table, &result.runs)?;
            jsonl::write(&out.join("runs.jsonl"), "loopwright/hs-runs", &result.runs)?;
            jsonl::write(&out.join("failures.jsonl"), "loopwright/hs-failures", &result.failures)?;
            eprintln!("{} runs, {} message failures", result.runs.len(), result.failures.len());
            write_results_csv(io::stdout().lock(), &result.table, &result.runs)?;
        }
        ExperimentCommand::Moderation { project, scores_cache, endpoint, api_key_env, model, concurrency, track, out } => {
            let project = open_project(&project, false)?;
            let track = match track {
                TrackArg::Gold => Track::Gold,
                TrackArg::Platinum => Track::Platinum,
            };
            let labels = track_labels(&project, track);
            let hateful: Vec<_> = project
                .dataset()
                .messages()
                .iter()
                .filter(|m| m.hs_label == loopwright_core::HsLabel::Hateful)
                .cloned()
                .collect();
            let backend = HttpModeration::new(&endpoint, model, Some(api_key_env));
            let cache = ModerationCache::new(&scores_cache)?;
            let scores = match fetch_moderation_scores(&hateful, &backend, &cache, concurrency).await {
                Ok(s) => s,
                Err(e) => {
                    return Err(format!(
                        "{e}; {} messages scored and cached, rerun to resume from message {}",
                        e.cursor, e.cursor
                    )
                    .into())
                }
            };
            let rows = moderation_table(project.dataset(), &labels, &scores)?;
            match out {
                Some(path) => write_moderation_csv(File::create(path)?, &rows)?,
                None => write_moderation_csv(io::stdout().lock(), &rows)?,
            }
        }
    }
    Ok(())
}

async fn dispatch(cli: Cli) -> AnyResult {
    match cli.command {
        Command::Ingest { corpus, project, seed, deny_fields } => {
            let mut options = ImportOptions::default();
            options.deny_fields.extend(deny_fields);
            let report = import_corpus(&corpus, &options)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            let (messages, claims) = (report.dataset.messages().len(), report.dataset.claim_count());
            Project::create(&project, report.dataset, seed)?;
            eprintln!("imported {messages} messages, {claims} claims into {}", project.display());
        }
        Command::Run(args) => run(args).await?,
        Command::Platinum { project, file } => {
            let mut p = open_project(&project, false)?;
            let votes: Vec<AnnotationEvent> = jsonl::read(&file)?;
            for v in votes {
                p.record_platinum(v)?;
            }
            print_json(&p.label_distribution(true))?;
        }
        Command::Metrics(args) => metrics(args)?,
        Command::Experiment(cmd) => experiment(cmd).await?,
        Command::Export { project } => {
            let p = open_project(&project, false)?;
            print_json(&p.export()?)?;
        }
        Command::Verify { bundle } => match verify_bundle(&bundle) {
            Ok(manifest) => print_json(&manifest)?,
            Err(problems) => {
                for p in &problems {
                    eprintln!("{p}");
                }
                return Err(format!("{} problems", problems.len()).into());
            }
        },
        Command::Serve { projects, config, addr, root } => {
            let mut service = Service::new(load_service(&config)?);
            if let Some(root) = root {
                service = service.with_root(root);
            }
            for dir in &projects {
                service.add_project(&project_id(dir), open_project(dir, false)?.into_shared());
            }
            serve_on(&addr, Arc::new(service)).await?;
        }
    }
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    match dispatch(Cli::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
