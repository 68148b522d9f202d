//! End-to-end stages behind the CLI: validate, generate, run, score,
//! aggregate, report and iaa. Every stage writes deterministic files under
//! the configured output directory and records its input/output hashes in
//! `manifest.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::annotation::{
    document_pairs, load_corpus, parse_standoff, AnnotationError, DocumentRecord, MarkerStyle,
    Split,
};
use crate::formulations::{
    approx_tokens, build_instances, Flavor, Formulation, FormulationError, GenerationConfig,
    PromptInstance, TemplateSet, DEFAULT_BUDGET,
};
use crate::graph::{EventId, GraphError, TimelineGraph};
use crate::interpretation::{
    assemble_graph, interpret, InterpretationError, ParseStatus, PredictionRecord,
};
use crate::metrics::{
    aggregate, iaa, temporal_awareness_with, write_aggregate_csv, write_aggregate_json,
    AggregateRow, Bins, CoexMode, GroupField, GroupKeys, IaaReport, MetricsError, ScoreRow,
};
use crate::model_client::{
    BackendConfig, BackendKind, ClientError, GenerationRequest, ModelClient,
};
use crate::svg::{boxplot_svg, timeline_svg};

pub const INSTANCES_FILE: &str = "instances.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const SCORES_FILE: &str = "scores.jsonl";
pub const SCORES_CSV: &str = "scores.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0} is missing; run the `{1}` stage first")]
    MissingStage(PathBuf, &'static str),
    #[error("{failed} of {total} requests failed")]
    Incomplete { failed: usize, total: usize },
    #[error("no template `{template}` for {formulation}")]
    UnknownTemplate {
        formulation: Formulation,
        template: String,
    },
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Interpretation(#[from] InterpretationError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Short machine-readable kind for JSON diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::MissingStage(..) => "missing_stage",
            PipelineError::Incomplete { .. } => "incomplete",
            PipelineError::UnknownTemplate { .. } => "unknown_template",
            PipelineError::Annotation(_) => "annotation",
            PipelineError::Formulation(_) => "formulation",
            PipelineError::Client(_) => "client",
            PipelineError::Interpretation(_) => "interpretation",
            PipelineError::Metrics(_) => "metrics",
            PipelineError::Graph(_) => "graph",
            PipelineError::Json(_) => "json",
            PipelineError::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn write_string(path: &Path, body: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(body.as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        let line = serde_json::to_string(item)?;
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(io_err(path))?))
}

/// Hash over file names and contents of a directory, in name order.
fn hash_dir(dir: &Path) -> Result<String> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    names.sort();
    let mut h = Sha256::new();
    for p in names {
        h.update(
            p.file_name()
                .unwrap_or_default()
                .to_string_lossy()
                .as_bytes(),
        );
        h.update(fs::read(&p).map_err(io_err(&p))?);
    }
    Ok(hex::encode(h.finalize()))
}

fn hash_parts(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

fn all_formulations() -> Vec<Formulation> {
    Formulation::ALL.to_vec()
}

fn default_shots() -> Vec<usize> {
    vec![0, 1, 2]
}

fn default_budget() -> usize {
    DEFAULT_BUDGET
}

/// Settings for one evaluation run, read from a single JSON file. Relative
/// paths resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub corpus: PathBuf,
    /// Documents to evaluate; all when unset. Demonstrations always come
    /// from the dev split.
    #[serde(default)]
    pub split: Option<Split>,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default = "all_formulations")]
    pub formulations: Vec<Formulation>,
    #[serde(default)]
    pub template_dir: Option<PathBuf>,
    /// Template ids to use; all of the chosen flavor when empty.
    #[serde(default)]
    pub templates: Vec<String>,
    #[serde(default)]
    pub representation: MarkerStyle,
    #[serde(default)]
    pub flavor: Flavor,
    #[serde(default = "default_shots")]
    pub shots: Vec<usize>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub coex_mode: CoexMode,
    /// Word-count bin edges; quartiles of the evaluated documents when unset.
    #[serde(default)]
    pub word_bins: Option<Vec<f64>>,
    #[serde(default)]
    pub event_bins: Option<Vec<f64>>,
}

impl RunConfig {
    /// Config with defaults for everything but the corpus, seeds and output.
    pub fn new(
        corpus: impl Into<PathBuf>,
        seeds: Vec<u64>,
        output_dir: impl Into<PathBuf>,
    ) -> Self {
        RunConfig {
            corpus: corpus.into(),
            split: None,
            backend: BackendConfig::default(),
            formulations: all_formulations(),
            template_dir: None,
            templates: Vec::new(),
            representation: MarkerStyle::default(),
            flavor: Flavor::default(),
            shots: default_shots(),
            seeds,
            budget: DEFAULT_BUDGET,
            output_dir: output_dir.into(),
            coex_mode: CoexMode::default(),
            word_bins: None,
            event_bins: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg: RunConfig = serde_json::from_str(&body)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.corpus);
        resolve(&mut cfg.output_dir);
        if let Some(p) = cfg.template_dir.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.backend.cache_path.as_mut() {
            resolve(p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if !self.corpus.is_dir() {
            return bad(format!(
                "corpus directory {} does not exist",
                self.corpus.display()
            ));
        }
        if let Some(t) = &self.template_dir {
            if !t.is_dir() {
                return bad(format!("template directory {} does not exist", t.display()));
            }
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.formulations.is_empty() {
            return bad("no formulations selected".into());
        }
        if self.shots.is_empty() {
            return bad("no demonstration counts selected".into());
        }
        if self.budget == 0 {
            return bad("budget must be positive".into());
        }
        self.backend.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub inputs: String,
    pub output: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub code_version: String,
    pub stages: BTreeMap<String, StageRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub instances: usize,
    /// `(instance or document, reason)` for items left out.
    pub skipped: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Stop after this many new instances (the rest resume later).
    pub limit: Option<usize>,
    pub chunk: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            limit: None,
            chunk: 64,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub total: usize,
    pub resumed: usize,
    pub completed: usize,
    pub backend_calls: usize,
    pub cache_hits: usize,
    pub failed: Vec<String>,
    pub parse_ok: usize,
}

pub struct Pipeline {
    config: RunConfig,
    corpus: Vec<DocumentRecord>,
    templates: TemplateSet,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let corpus = load_corpus(&config.corpus)?;
        let templates = match &config.template_dir {
            Some(dir) => TemplateSet::load(dir)?,
            None => TemplateSet::builtin(),
        };
        for id in &config.templates {
            if !config
                .formulations
                .iter()
                .any(|f| templates.get(*f, id).is_some())
            {
                return Err(PipelineError::Config(format!("unknown template id `{id}`")));
            }
        }
        Ok(Pipeline {
            config,
            corpus,
            templates,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn corpus(&self) -> &[DocumentRecord] {
        &self.corpus
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.config.output_dir.join(name)
    }

    fn eval_docs(&self) -> Vec<&DocumentRecord> {
        self.corpus
            .iter()
            .filter(|d| self.config.split.is_none_or(|s| d.split == s))
            .collect()
    }

    fn update_manifest(&self, stage: &str, record: StageRecord) -> Result<()> {
        let path = self.path(MANIFEST_FILE);
        let mut manifest = match fs::read_to_string(&path) {
            Ok(body) => serde_json::from_str::<RunManifest>(&body).ok(),
            Err(_) => None,
        }
        .filter(|m| m.config == self.config)
        .unwrap_or_else(|| RunManifest {
            config: self.config.clone(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            stages: BTreeMap::new(),
        });
        manifest.stages.insert(stage.to_string(), record);
        write_string(&path, &(serde_json::to_string_pretty(&manifest)? + "\n"))
    }

    fn require(&self, name: &str, stage: &'static str) -> Result<PathBuf> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(PipelineError::MissingStage(p, stage))
        }
    }

    /// Renders every (formulation, template, shots, seed, document) instance.
    pub fn generate(&self) -> Result<GenerateSummary> {
        let cfg = &self.config;
        let dev: Vec<DocumentRecord> = self
            .corpus
            .iter()
            .filter(|d| d.split == Split::Dev)
            .cloned()
            .collect();
        let mut instances = Vec::new();
        let mut summary = GenerateSummary::default();
        for &f in &cfg.formulations {
            let mut templates = self.templates.select(f, cfg.flavor);
            if !cfg.templates.is_empty() {
                templates.retain(|t| cfg.templates.contains(&t.id));
            }
            templates.sort_by(|a, b| a.id.cmp(&b.id));
            for t in templates {
                for &n in &cfg.shots {
                    for &seed in &cfg.seeds {
                        let gen = GenerationConfig {
                            representation: cfg.representation,
                            n_demos: n,
                            seed,
                            budget: cfg.budget,
                        };
                        for doc in self.eval_docs() {
                            let built = match build_instances(doc, &dev, t, &gen, approx_tokens) {
                                Ok(b) => b,
                                Err(e) => {
                                    summary.skipped.push((
                                        format!("{}/{f}/{}/{n}s", doc.id, t.id),
                                        e.to_string(),
                                    ));
                                    continue;
                                }
                            };
                            for r in built {
                                match r {
                                    Ok(mut inst) => {
                                        inst.instance_id = format!("{}#s{seed}", inst.instance_id);
                                        instances.push(inst);
                                    }
                                    Err(e) => summary.skipped.push((doc.id.clone(), e.to_string())),
                                }
                            }
                        }
                    }
                }
            }
        }
        let path = self.path(INSTANCES_FILE);
        write_jsonl(&path, &instances)?;
        summary.instances = instances.len();
        let inputs = hash_parts(&[
            &serde_json::to_string(cfg)?,
            &hash_dir(&cfg.corpus)?,
            &serde_json::to_string(&self.templates.iter().collect::<Vec<_>>())?,
        ]);
        self.update_manifest(
            "generate",
            StageRecord {
                inputs,
                output: hash_file(&path)?,
                count: instances.len(),
            },
        )?;
        Ok(summary)
    }

    fn read_instances(&self) -> Result<Vec<PromptInstance>> {
        read_jsonl(&self.require(INSTANCES_FILE, "generate")?)
    }

    /// Valid leading records of an earlier, possibly interrupted, run.
    fn read_partial_predictions(&self, path: &Path) -> Vec<PredictionRecord> {
        let Ok(file) = File::open(path) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for line in BufReader::new(file).lines() {
            let Ok(line) = line else { break };
            match serde_json::from_str::<PredictionRecord>(&line) {
                Ok(r) => out.push(r),
                Err(_) => break,
            }
        }
        out
    }

    /// Sends pending instances to the backend and interprets completions.
    /// Records already in the predictions file are kept; the finished file
    /// is rewritten in instance order.
    pub fn run(&self, opts: RunOptions) -> Result<RunSummary> {
        let instances = self.read_instances()?;
        let path = self.path(PREDICTIONS_FILE);
        let by_id: BTreeMap<&str, &PromptInstance> = instances
            .iter()
            .map(|i| (i.instance_id.as_str(), i))
            .collect();
        let mut done: BTreeMap<String, PredictionRecord> = self
            .read_partial_predictions(&path)
            .into_iter()
            .filter(|r| by_id.contains_key(r.instance_id.as_str()))
            .map(|r| (r.instance_id.clone(), r))
            .collect();
        let mut summary = RunSummary {
            total: instances.len(),
            resumed: done.len(),
            ..RunSummary::default()
        };
        let ordered = |done: &BTreeMap<String, PredictionRecord>| -> Vec<PredictionRecord> {
            instances
                .iter()
                .filter_map(|i| done.get(&i.instance_id).cloned())
                .collect()
        };
        write_jsonl(&path, &ordered(&done))?;

        let mut pending: Vec<&PromptInstance> = instances
            .iter()
            .filter(|i| !done.contains_key(&i.instance_id))
            .collect();
        if let Some(limit) = opts.limit {
            pending.truncate(limit);
        }
        let client = ModelClient::new(self.config.backend.clone())?;
        let counts_calls = self.config.backend.kind != BackendKind::Replay;
        for chunk in pending.chunks(opts.chunk.max(1)) {
            let requests: Vec<GenerationRequest> = chunk
                .iter()
                .map(|i| GenerationRequest::for_instance(i))
                .collect();
            let outcome = client.generate_batch(&requests)?;
            let mut file = OpenOptions::new()
                .append(true)
                .open(&path)
                .map_err(io_err(&path))?;
            for resp in outcome.responses {
                let inst = by_id[resp.request_id.as_str()];
                let template = self
                    .templates
                    .get(inst.formulation, &inst.template_id)
                    .ok_or_else(|| PipelineError::UnknownTemplate {
                        formulation: inst.formulation,
                        template: inst.template_id.clone(),
                    })?;
                if resp.cache_hit {
                    summary.cache_hits += 1;
                } else if counts_calls {
                    summary.backend_calls += 1;
                }
                let record = interpret(inst, template, &resp.completion);
                writeln!(file, "{}", serde_json::to_string(&record)?).map_err(io_err(&path))?;
                done.insert(record.instance_id.clone(), record);
                summary.completed += 1;
            }
            file.flush().map_err(io_err(&path))?;
            for (id, err) in outcome.failures {
                log::warn!("{id}: {err}");
                summary.failed.push(id);
            }
        }
        let records = ordered(&done);
        summary.parse_ok = records
            .iter()
            .filter(|r| r.status == ParseStatus::Ok)
            .count();
        write_jsonl(&path, &records)?;
        let inputs = hash_parts(&[
            &hash_file(&self.path(INSTANCES_FILE))?,
            &serde_json::to_string(&self.config.backend)?,
        ]);
        self.update_manifest(
            "run",
            StageRecord {
                inputs,
                output: hash_file(&path)?,
                count: records.len(),
            },
        )?;
        Ok(summary)
    }

    fn bins(&self, configured: &Option<Vec<f64>>, value: impl Fn(&DocumentRecord) -> f64) -> Bins {
        match configured {
            Some(edges) => Bins {
                edges: edges.clone(),
            },
            None => Bins::quartiles(&self.eval_docs().into_iter().map(value).collect::<Vec<_>>()),
        }
    }

    /// Temporal awareness per (run configuration, document).
    pub fn score(&self) -> Result<Vec<ScoreRow>> {
        let instances = self.read_instances()?;
        let pred_path = self.require(PREDICTIONS_FILE, "run")?;
        let records: Vec<PredictionRecord> = read_jsonl(&pred_path)?;
        let by_instance: BTreeMap<&str, &PredictionRecord> = records
            .iter()
            .map(|r| (r.instance_id.as_str(), r))
            .collect();
        let word_bins = self.bins(&self.config.word_bins, |d| d.word_count as f64);
        let event_bins = self.bins(&self.config.event_bins, |d| d.event_count() as f64);
        let model = self.config.backend.backend_id();

        type Key = (Formulation, String, usize, String, Flavor, u64, String);
        let mut groups: BTreeMap<Key, Vec<PredictionRecord>> = BTreeMap::new();
        let mut order: Vec<Key> = Vec::new();
        for inst in &instances {
            let key = (
                inst.formulation,
                inst.template_id.clone(),
                inst.n_demos,
                inst.representation.as_str().to_string(),
                inst.flavor,
                inst.seed,
                inst.doc_id.clone(),
            );
            let entry = groups.entry(key.clone()).or_insert_with(|| {
                order.push(key);
                Vec::new()
            });
            if let Some(r) = by_instance.get(inst.instance_id.as_str()) {
                entry.push((*r).clone());
            }
        }
        let mut rows = Vec::new();
        for key in order {
            let (formulation, template_id, n_demos, representation, flavor, seed, doc_id) =
                key.clone();
            let doc = self.corpus.iter().find(|d| d.id == doc_id).ok_or_else(|| {
                PipelineError::Config(format!("instance document `{doc_id}` not in corpus"))
            })?;
            let pred = assemble_graph(&doc.graph, &doc_id, &groups[&key], seed)?;
            let s = temporal_awareness_with(&doc.graph, &pred, self.config.coex_mode);
            rows.push(ScoreRow {
                keys: GroupKeys {
                    model: model.clone(),
                    formulation: formulation.as_str().to_string(),
                    template_id,
                    n_demos,
                    representation,
                    flavor: flavor_str(flavor).to_string(),
                    era: doc.era.as_str().to_string(),
                    word_bin: word_bins.label(doc.word_count as f64),
                    event_bin: event_bins.label(doc.event_count() as f64),
                },
                seed,
                doc_id,
                precision: s.precision,
                recall: s.recall,
                f1: s.f1,
            });
        }
        let path = self.path(SCORES_FILE);
        write_jsonl(&path, &rows)?;
        write_scores_csv(&self.path(SCORES_CSV), &rows)?;
        let inputs = hash_parts(&[
            &hash_file(&self.path(INSTANCES_FILE))?,
            &hash_file(&pred_path)?,
            &hash_dir(&self.config.corpus)?,
            &serde_json::to_string(&(
                self.config.coex_mode,
                &self.config.word_bins,
                &self.config.event_bins,
            ))?,
        ]);
        self.update_manifest(
            "score",
            StageRecord {
                inputs,
                output: hash_file(&path)?,
                count: rows.len(),
            },
        )?;
        Ok(rows)
    }

    /// generate, run, score, then a report grouped by `group_by`.
    pub fn run_all(&self, group_by: &[GroupField]) -> Result<(RunSummary, Vec<AggregateRow>)> {
        self.generate()?;
        let summary = self.run(RunOptions::default())?;
        if !summary.failed.is_empty() {
            return Err(PipelineError::Incomplete {
                failed: summary.failed.len(),
                total: summary.total,
            });
        }
        let rows = self.score()?;
        let agg = write_report(&rows, group_by, &self.config.output_dir, true)?;
        Ok((summary, agg))
    }
}

fn flavor_str(f: Flavor) -> &'static str {
    match f {
        Flavor::Plain => "plain",
        Flavor::Cot => "cot",
        Flavor::Code => "code",
    }
}

const SCORE_COLUMNS: [&str; 14] = [
    "model",
    "formulation",
    "template_id",
    "n_demos",
    "representation",
    "flavor",
    "era",
    "word_bin",
    "event_bin",
    "seed",
    "doc_id",
    "precision",
    "recall",
    "f1",
];

pub fn write_scores_csv(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let wrap = |e: csv::Error| PipelineError::Metrics(MetricsError::Csv(e));
    w.write_record(SCORE_COLUMNS).map_err(wrap)?;
    for r in rows {
        let k = &r.keys;
        w.write_record([
            k.model.clone(),
            k.formulation.clone(),
            k.template_id.clone(),
            k.n_demos.to_string(),
            k.representation.clone(),
            k.flavor.clone(),
            k.era.clone(),
            k.word_bin.clone(),
            k.event_bin.clone(),
            r.seed.to_string(),
            r.doc_id.clone(),
            format!("{:.6}", r.precision),
            format!("{:.6}", r.recall),
            format!("{:.6}", r.f1),
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_scores(paths: &[PathBuf]) -> Result<Vec<ScoreRow>> {
    let mut rows = Vec::new();
    for p in paths {
        rows.extend(read_jsonl::<ScoreRow>(p)?);
    }
    Ok(rows)
}

fn group_name(group_by: &[GroupField]) -> String {
    if group_by.is_empty() {
        "all".into()
    } else {
        group_by
            .iter()
            .map(|g| g.as_str())
            .collect::<Vec<_>>()
            .join("+")
    }
}

/// Aggregates scores and writes `aggregate.csv`/`aggregate.json`, plus
/// `report.svg` when `plot` is set.
pub fn write_report(
    rows: &[ScoreRow],
    group_by: &[GroupField],
    out: &Path,
    plot: bool,
) -> Result<Vec<AggregateRow>> {
    let agg = aggregate(rows, group_by);
    let csv_path = out.join("aggregate.csv");
    let mut w = create(&csv_path)?;
    write_aggregate_csv(&agg, group_by, &mut w)?;
    w.flush().map_err(io_err(&csv_path))?;
    let json_path = out.join("aggregate.json");
    let mut w = create(&json_path)?;
    write_aggregate_json(&agg, &mut w)?;
    writeln!(w).map_err(io_err(&json_path))?;
    w.flush().map_err(io_err(&json_path))?;
    if plot {
        let title = format!("F1 by {}", group_name(group_by));
        write_string(&out.join("report.svg"), &boxplot_svg(&title, &agg))?;
    }
    Ok(agg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    Disconnected,
    Cycle,
    TitleZone,
    OffsetMismatch,
    Parse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub doc_id: String,
    pub severity: Severity,
    pub kind: DiagnosticKind,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub documents: usize,
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn has_errors(&self) -> bool {
        self.diagnostics
            .iter()
            .any(|d| d.severity == Severity::Error)
    }

    pub fn count(&self, kind: DiagnosticKind) -> usize {
        self.diagnostics.iter().filter(|d| d.kind == kind).count()
    }
}

fn ids(v: impl IntoIterator<Item = EventId>) -> Vec<String> {
    v.into_iter().map(|e| e.0).collect()
}

/// Checks every `.txt`/`.ann` pair under `root`. With `out`, writes
/// `diagnostics.json` and one layered SVG per acyclic document there.
pub fn validate_corpus(root: &Path, out: Option<&Path>) -> Result<ValidationReport> {
    let mut report = ValidationReport::default();
    for id in document_pairs(root)? {
        report.documents += 1;
        let text_path = root.join(format!("{id}.txt"));
        let ann_path = root.join(format!("{id}.ann"));
        let text = fs::read_to_string(&text_path).map_err(io_err(&text_path))?;
        let ann = fs::read_to_string(&ann_path).map_err(io_err(&ann_path))?;
        let mut diag = |severity, kind, message: String, events: Vec<String>| {
            report.diagnostics.push(Diagnostic {
                doc_id: id.clone(),
                severity,
                kind,
                message,
                events,
            })
        };
        let parsed = match parse_standoff(&ann, &text) {
            Ok(p) => p,
            Err(e) => {
                let kind = match e {
                    AnnotationError::OffsetMismatch { .. } => DiagnosticKind::OffsetMismatch,
                    _ => DiagnosticKind::Parse,
                };
                diag(Severity::Error, kind, e.to_string(), Vec::new());
                continue;
            }
        };
        let graph = parsed.graph;
        let cycles = graph.expand_coex().detect_cycles();
        for cycle in &cycles {
            diag(
                Severity::Error,
                DiagnosticKind::Cycle,
                format!("cycle after COEX expansion through {} events", cycle.len()),
                ids(cycle.iter().cloned()),
            );
        }
        let components = graph.weak_components();
        if components.len() > 1 {
            let largest = components.iter().map(BTreeSet::len).max().unwrap_or(0);
            let main = components
                .iter()
                .position(|c| c.len() == largest)
                .unwrap_or(0);
            for (i, c) in components.iter().enumerate() {
                if i != main {
                    diag(
                        Severity::Warning,
                        DiagnosticKind::Disconnected,
                        format!("{} event(s) not connected to the main timeline", c.len()),
                        ids(c.iter().cloned()),
                    );
                }
            }
        }
        let title_len = text.lines().next().map(|l| l.chars().count()).unwrap_or(0);
        let in_title: Vec<EventId> = graph
            .events()
            .iter()
            .filter(|e| e.span.start < title_len)
            .map(|e| e.id.clone())
            .collect();
        if !in_title.is_empty() {
            diag(
                Severity::Warning,
                DiagnosticKind::TitleZone,
                "events annotated in the title line".into(),
                ids(in_title),
            );
        }
        if let Some(dir) = out {
            if cycles.is_empty() {
                write_string(&dir.join(format!("{id}.svg")), &timeline_svg(&id, &graph)?)?;
            }
        }
    }
    if let Some(dir) = out {
        write_string(
            &dir.join("diagnostics.json"),
            &(serde_json::to_string_pretty(&report)? + "\n"),
        )?;
    }
    Ok(report)
}

/// Event-id to canonical-id maps for two annotators.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorefMap {
    #[serde(default)]
    pub a: BTreeMap<String, String>,
    #[serde(default)]
    pub b: BTreeMap<String, String>,
}

/// Agreement between two annotation files over one text. Events missing
/// from the coreference map are matched by span.
pub fn iaa_files(
    text: &Path,
    a: &Path,
    b: &Path,
    coref: Option<&Path>,
    mode: CoexMode,
) -> Result<IaaReport> {
    let body = fs::read_to_string(text).map_err(io_err(text))?;
    let load = |p: &Path| -> Result<TimelineGraph> {
        let ann = fs::read_to_string(p).map_err(io_err(p))?;
        Ok(parse_standoff(&ann, &body)?.graph)
    };
    let (ga, gb) = (load(a)?, load(b)?);
    let coref: CorefMap = match coref {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).map_err(io_err(p))?)?,
        None => CorefMap::default(),
    };
    let canon = |g: &TimelineGraph, map: &BTreeMap<String, String>| -> BTreeMap<EventId, EventId> {
        g.events()
            .iter()
            .map(|e| {
                let c = map
                    .get(e.id.as_str())
                    .cloned()
                    .unwrap_or_else(|| format!("{}-{}", e.span.start, e.span.end));
                (e.id.clone(), EventId(c))
            })
            .collect()
    };
    let (ca, cb) = (canon(&ga, &coref.a), canon(&gb, &coref.b));
    Ok(iaa(&ga, &gb, &ca, &cb, mode))
}
