use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use timeline_eval::annotation::{MarkerStyle, Split};
use timeline_eval::formulations::{Flavor, Formulation};
use timeline_eval::metrics::{CoexMode, GroupField};
use timeline_eval::model_client::BackendKind;
use timeline_eval::pipeline::{
    iaa_files, read_scores, validate_corpus, write_report, Pipeline, PipelineError, RunConfig,
    RunOptions,
};

/// Exit codes.
const EXIT_INVALID: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_FAILURE: u8 = 3;
const EXIT_INCOMPLETE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "timeline-eval",
    version,
    about = "Timeline construction evaluation harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a corpus and draw one layered graph per document.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
        /// Directory for diagnostics.json and SVG drawings.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render prompt instances.
    Generate(ConfigArgs),
    /// Send instances to the backend (resumable).
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Process at most this many pending instances.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Score predictions against gold timelines.
    Score(ConfigArgs),
    /// Median/IQR tables from score files.
    Aggregate(ReportArgs),
    /// Median/IQR tables plus an SVG boxplot.
    Report(ReportArgs),
    /// Agreement between two annotations of one document.
    Iaa {
        #[arg(long)]
        text: PathBuf,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// JSON `{"a": {id: canonical}, "b": {...}}`.
        #[arg(long)]
        coref: Option<PathBuf>,
        #[arg(long, default_value = "include")]
        coex: CoexMode,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    split: Option<Split>,
    #[arg(long = "formulation", value_delimiter = ',')]
    formulations: Vec<Formulation>,
    #[arg(long)]
    template_dir: Option<PathBuf>,
    #[arg(long = "template", value_delimiter = ',')]
    templates: Vec<String>,
    #[arg(long)]
    representation: Option<MarkerStyle>,
    #[arg(long)]
    flavor: Option<Flavor>,
    #[arg(long, value_delimiter = ',')]
    shots: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    backend: Option<BackendKind>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Name of the environment variable holding the API token.
    #[arg(long)]
    auth_env: Option<String>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    #[arg(long)]
    coex: Option<CoexMode>,
}

impl ConfigArgs {
    fn resolve(self) -> Result<RunConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => {
                let corpus = self.corpus.clone().ok_or_else(|| {
                    PipelineError::Config("--corpus or --config is required".into())
                })?;
                let out = self
                    .out
                    .clone()
                    .ok_or_else(|| PipelineError::Config("--out or --config is required".into()))?;
                RunConfig::new(corpus, Vec::new(), out)
            }
        };
        if let Some(v) = self.corpus {
            cfg.corpus = v;
        }
        if let Some(v) = self.out {
            cfg.output_dir = v;
        }
        if self.split.is_some() {
            cfg.split = self.split;
        }
        if !self.formulations.is_empty() {
            cfg.formulations = self.formulations;
        }
        if self.template_dir.is_some() {
            cfg.template_dir = self.template_dir;
        }
        if !self.templates.is_empty() {
            cfg.templates = self.templates;
        }
        if let Some(v) = self.representation {
            cfg.representation = v;
        }
        if let Some(v) = self.flavor {
            cfg.flavor = v;
        }
        if !self.shots.is_empty() {
            cfg.shots = self.shots;
        }
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds;
        }
        if let Some(v) = self.budget {
            cfg.budget = v;
        }
        if let Some(v) = self.backend {
            cfg.backend.kind = v;
        }
        if self.endpoint.is_some() {
            cfg.backend.endpoint = self.endpoint;
        }
        if self.model.is_some() {
            cfg.backend.model = self.model;
        }
        if self.auth_env.is_some() {
            cfg.backend.auth_env = self.auth_env;
        }
        if self.cache.is_some() {
            cfg.backend.cache_path = self.cache;
        }
        if let Some(v) = self.max_in_flight {
            cfg.backend.max_in_flight = v;
        }
        if let Some(v) = self.coex {
            cfg.coex_mode = v;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct ReportArgs {
    /// Score files (JSON lines) written by `score`.
    #[arg(long = "scores", required = true, num_args = 1..)]
    scores: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    group_by: Vec<GroupField>,
    #[arg(long)]
    out: PathBuf,
}

fn emit(value: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&value).expect("json"));
}

fn fail(code: u8, kind: &str, message: String, extra: serde_json::Value) -> ExitCode {
    let mut body = json!({"error": kind, "message": message});
    if let (Some(obj), Some(more)) = (body.as_object_mut(), extra.as_object()) {
        obj.extend(more.clone());
    }
    eprintln!("{}", serde_json::to_string(&body).expect("json"));
    ExitCode::from(code)
}

fn from_error(e: PipelineError) -> ExitCode {
    let code = match e {
        PipelineError::Config(_) | PipelineError::MissingStage(..) => EXIT_CONFIG,
        PipelineError::Incomplete { .. } => EXIT_INCOMPLETE,
        _ => EXIT_FAILURE,
    };
    fail(code, e.kind(), e.to_string(), json!({}))
}

fn run(cli: Cli) -> Result<ExitCode, PipelineError> {
    match cli.command {
        Command::Validate { corpus, out } => {
            let report = validate_corpus(&corpus, out.as_deref())?;
            if report.has_errors() {
                let diags = serde_json::to_value(&report.diagnostics)?;
                return Ok(fail(
                    EXIT_INVALID,
                    "invalid_corpus",
                    format!("{} document(s) checked with errors", report.documents),
                    json!({ "diagnostics": diags }),
                ));
            }
            emit(serde_json::to_value(&report)?);
        }
        Command::Generate(args) => {
            let summary = Pipeline::new(args.resolve()?)?.generate()?;
            emit(serde_json::to_value(&summary)?);
        }
        Command::Run { config, limit } => {
            let summary = Pipeline::new(config.resolve()?)?.run(RunOptions {
                limit,
                ..RunOptions::default()
            })?;
            emit(serde_json::to_value(&summary)?);
            if !summary.failed.is_empty() {
                return Ok(fail(
                    EXIT_INCOMPLETE,
                    "incomplete",
                    format!(
                        "{} of {} requests failed",
                        summary.failed.len(),
                        summary.total
                    ),
                    json!({ "failed": summary.failed }),
                ));
            }
        }
        Command::Score(args) => {
            let rows = Pipeline::new(args.resolve()?)?.score()?;
            emit(json!({ "rows": rows.len() }));
        }
        Command::Aggregate(args) => report(args, false)?,
        Command::Report(args) => report(args, true)?,
        Command::Iaa {
            text,
            a,
            b,
            coref,
            coex,
        } => {
            let r = iaa_files(&text, &a, &b, coref.as_deref(), coex)?;
            emit(serde_json::to_value(&r)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn report(args: ReportArgs, plot: bool) -> Result<(), PipelineError> {
    let rows = read_scores(&args.scores)?;
    let agg = write_report(&rows, &args.group_by, &args.out, plot)?;
    emit(serde_json::to_value(&agg)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    run(cli).unwrap_or_else(from_error)
}
