//! Loaders for the external pairwise/NLI/MRC benchmarks, normalized into one
//! JSON-lines interchange schema: `{dataset, id, context, query, gold, split}`.
//!
//! Accepted upstream layouts:
//!
//! * TemporalNLI: JSON array or JSON lines of
//!   `{context, hypothesis, label, split?}`; `label` is one of
//!   `entailed`/`entailment` or `not-entailed`/`not_entailment`/`not entailment`.
//!   Without a `split` field the split is taken from the file name.
//! * MATRES: one tab-separated annotation file per subset with rows
//!   `doc  verb1  verb2  eiid1  eiid2  LABEL`, plus a directory of TimeML
//!   (`<doc>.tml`) source documents for that subset.
//! * TDDiscourse: a directory of `TDDMan{Train,Dev,Test}.tsv` files with rows
//!   `doc  eid1  eid2  {a,b,s,i,ii}`; other files (TDDAuto) are skipped.
//! * TORQUE: `train.json` / `dev.json`, arrays of
//!   `{doc_id?, passages: [{passage, events?: [{answer: {spans, indices}}],
//!   question_answer_pairs: [{question, question_id?, answer: {spans},
//!   individual_answers?: [{spans}]}]}]}`; `indices` are `[start, end)` byte
//!   offsets into the passage.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::MarkerStyle;
use crate::formulations::render::cut_point;
use crate::formulations::{
    derive_seed, render_template, Budget, Formulation, FormulationError, PromptTemplate,
};
use crate::interpretation::first_match;
use crate::metrics::{accuracy, exact_match_best, micro_f1, MetricsError};

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("{dataset}: source document `{doc}` not found")]
    MissingSource { dataset: Dataset, doc: String },
    #[error("{dataset}: {location}: {message}")]
    Format {
        dataset: Dataset,
        location: String,
        message: String,
    },
    #[error("{dataset}: template {template} is a {found} template, expected {expected}")]
    WrongFormulation {
        dataset: Dataset,
        template: String,
        found: Formulation,
        expected: Formulation,
    },
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

type Result<T> = std::result::Result<T, AdapterError>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| AdapterError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dataset {
    TemporalNli,
    Matres,
    Tddiscourse,
    Torque,
}

/// Metric each dataset is scored with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkMetric {
    Accuracy,
    MicroF1,
    ExactMatchBest,
}

impl Dataset {
    pub const ALL: [Dataset; 4] = [
        Dataset::TemporalNli,
        Dataset::Matres,
        Dataset::Tddiscourse,
        Dataset::Torque,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Dataset::TemporalNli => "temporal_nli",
            Dataset::Matres => "matres",
            Dataset::Tddiscourse => "tddiscourse",
            Dataset::Torque => "torque",
        }
    }

    pub fn formulation(&self) -> Formulation {
        match self {
            Dataset::TemporalNli => Formulation::Nli,
            Dataset::Matres | Dataset::Tddiscourse => Formulation::Pairwise,
            Dataset::Torque => Formulation::Mrc,
        }
    }

    pub fn metric(&self) -> BenchmarkMetric {
        match self {
            Dataset::TemporalNli => BenchmarkMetric::Accuracy,
            Dataset::Matres | Dataset::Tddiscourse => BenchmarkMetric::MicroF1,
            Dataset::Torque => BenchmarkMetric::ExactMatchBest,
        }
    }

    /// Relation labels of the pairwise datasets.
    pub fn labels(&self) -> &'static [&'static str] {
        match self {
            Dataset::Matres => &["BEFORE", "AFTER", "EQUAL", "VAGUE"],
            Dataset::Tddiscourse => &["BEFORE", "AFTER", "SIMULTANEOUS", "INCLUDE", "INCLUDED"],
            _ => &[],
        }
    }

    /// Label left out of micro-F1 positives.
    pub fn negative_label(&self) -> Option<&'static str> {
        match self {
            Dataset::Matres => Some("VAGUE"),
            _ => None,
        }
    }

    pub fn default_shots(&self) -> Vec<usize> {
        vec![0, 1, 3, 5, 10]
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dataset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Dataset::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown dataset `{s}`"))
    }
}

/// Per-dataset run settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub dataset: Dataset,
    pub shots: Vec<usize>,
}

impl DatasetConfig {
    pub fn new(dataset: Dataset) -> Self {
        DatasetConfig {
            dataset,
            shots: dataset.default_shots(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkSplit {
    Train,
    Dev,
    Test,
}

impl BenchmarkSplit {
    fn from_name(name: &str) -> Option<Self> {
        let n = name.to_ascii_lowercase();
        if n.contains("train") {
            Some(BenchmarkSplit::Train)
        } else if n.contains("dev") || n.contains("valid") {
            Some(BenchmarkSplit::Dev)
        } else if n.contains("test") {
            Some(BenchmarkSplit::Test)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BenchmarkQuery {
    Hypothesis {
        text: String,
    },
    /// Mentions of the two marked events, `[e1]` and `[e2]` in the context.
    Pair {
        arg1: String,
        arg2: String,
    },
    /// Candidate events are marked `[e1]..` in the context in list order.
    Question {
        text: String,
        events: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum BenchmarkGold {
    Binary(bool),
    Label(String),
    /// One answer set per annotator.
    AnswerSets(Vec<BTreeSet<String>>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkInstance {
    pub dataset: Dataset,
    pub id: String,
    pub context: String,
    pub query: BenchmarkQuery,
    pub gold: BenchmarkGold,
    pub split: BenchmarkSplit,
}

pub fn write_interchange<W: Write>(instances: &[BenchmarkInstance], mut out: W) -> Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut out, inst)?;
        out.write_all(b"\n").map_err(|source| AdapterError::Io {
            path: PathBuf::from("<output>"),
            source,
        })?;
    }
    Ok(())
}

pub fn read_interchange<R: BufRead>(input: R) -> Result<Vec<BenchmarkInstance>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|source| AdapterError::Io {
            path: PathBuf::from("<input>"),
            source,
        })?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Seeded document-level carve-out: 20% of `docs` (rounded) go to dev.
pub fn carve_dev(docs: &BTreeSet<String>, dataset: Dataset, seed: u64) -> BTreeSet<String> {
    let mut ids: Vec<&String> = docs.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[dataset.as_str(), "dev-carve"]));
    ids.shuffle(&mut rng);
    let n_dev = (docs.len() as f64 * 0.2).round() as usize;
    ids.into_iter().take(n_dev).cloned().collect()
}

fn unescape(s: &str) -> String {
    s.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&apos;", "'")
        .replace("&amp;", "&")
}

fn tag_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<(/?)([A-Za-z]+)([^>]*?)(/?)>").unwrap())
}

fn attr_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"(\w+)\s*=\s*"([^"]*)""#).unwrap())
}

fn attrs(raw: &str) -> HashMap<String, String> {
    attr_regex()
        .captures_iter(raw)
        .map(|c| (c[1].to_string(), c[2].to_string()))
        .collect()
}

/// Plain text and event offsets of a TimeML document.
#[derive(Debug, Clone)]
pub struct TimemlDoc {
    pub id: String,
    pub text: String,
    /// eid to byte span in `text`.
    pub events: BTreeMap<String, (usize, usize)>,
    /// eiid to eid.
    pub instances: BTreeMap<String, String>,
}

impl TimemlDoc {
    pub fn parse(id: &str, source: &str, dataset: Dataset) -> Result<Self> {
        let bad = |message: &str| AdapterError::Format {
            dataset,
            location: id.to_string(),
            message: message.to_string(),
        };
        let start = source.find("<TEXT>").ok_or_else(|| bad("missing <TEXT>"))? + "<TEXT>".len();
        let end = source[start..]
            .find("</TEXT>")
            .ok_or_else(|| bad("missing </TEXT>"))?
            + start;
        let body = &source[start..end];

        let mut text = String::with_capacity(body.len());
        let mut events = BTreeMap::new();
        let mut open: Option<(String, usize)> = None;
        let mut cursor = 0;
        for c in tag_regex().captures_iter(body) {
            let m = c.get(0).unwrap();
            text.push_str(&unescape(&body[cursor..m.start()]));
            cursor = m.end();
            if &c[2] != "EVENT" {
                continue;
            }
            if &c[1] == "/" {
                let (eid, s) = open.take().ok_or_else(|| bad("unbalanced </EVENT>"))?;
                events.insert(eid, (s, text.len()));
            } else {
                let eid = attrs(&c[3])
                    .remove("eid")
                    .ok_or_else(|| bad("EVENT without eid"))?;
                open = Some((eid, text.len()));
            }
        }
        text.push_str(&unescape(&body[cursor..]));

        let mut instances = BTreeMap::new();
        for c in tag_regex().captures_iter(source) {
            if &c[2] == "MAKEINSTANCE" {
                let a = attrs(&c[3]);
                if let (Some(eiid), Some(eid)) = (a.get("eiid"), a.get("eventID")) {
                    instances.insert(eiid.clone(), eid.clone());
                }
            }
        }
        Ok(TimemlDoc {
            id: id.to_string(),
            text,
            events,
            instances,
        })
    }

    fn event_span(&self, eid: &str, dataset: Dataset) -> Result<(usize, usize)> {
        self.events
            .get(eid)
            .copied()
            .ok_or_else(|| AdapterError::Format {
                dataset,
                location: self.id.clone(),
                message: format!("unknown event `{eid}`"),
            })
    }

    fn eid_for_instance(&self, eiid: &str, dataset: Dataset) -> Result<String> {
        let key = if eiid.starts_with("ei") {
            eiid.to_string()
        } else {
            format!("ei{eiid}")
        };
        self.instances
            .get(&key)
            .cloned()
            .ok_or_else(|| AdapterError::Format {
                dataset,
                location: self.id.clone(),
                message: format!("unknown event instance `{eiid}`"),
            })
    }
}

/// Byte spans of sentences in `text`.
pub fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r#"[.!?]["')\]]*\s+|\n\s*\n"#).unwrap());
    let mut out = Vec::new();
    let mut start = 0;
    for m in re.find_iter(text) {
        out.push((start, m.end()));
        start = m.end();
    }
    if start < text.len() {
        out.push((start, text.len()));
    }
    out
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Marks `spans` as `[e1]`, `[e2]`, ... in `text`.
fn mark_spans(text: &str, spans: &[(usize, usize)]) -> String {
    let mut order: Vec<(usize, (usize, usize))> = spans.iter().copied().enumerate().collect();
    order.sort_by_key(|(_, s)| std::cmp::Reverse(*s));
    let mut out = text.to_string();
    for (i, (s, e)) in order {
        out.insert_str(e, &format!("[/e{}]", i + 1));
        out.insert_str(s, &format!("[e{}]", i + 1));
    }
    out
}

/// The sentence window covering both events, with the pair marked.
fn pair_context(doc: &TimemlDoc, a: (usize, usize), b: (usize, usize)) -> String {
    let sents = sentence_spans(&doc.text);
    let sentence_of = |off: usize| {
        sents
            .iter()
            .position(|(s, e)| off >= *s && off < *e)
            .unwrap_or(0)
    };
    let first = sentence_of(a.0.min(b.0));
    let last = sentence_of(a.0.max(b.0));
    let (lo, hi) = (sents[first].0, sents[last].1);
    let shift = |(s, e): (usize, usize)| (s - lo, e - lo);
    collapse_ws(&mark_spans(&doc.text[lo..hi], &[shift(a), shift(b)]))
}

/// Parsed TimeML documents looked up by id across directories.
struct DocumentStore {
    dirs: Vec<PathBuf>,
    dataset: Dataset,
    cache: HashMap<String, TimemlDoc>,
}

impl DocumentStore {
    fn new(dirs: Vec<PathBuf>, dataset: Dataset) -> Self {
        DocumentStore {
            dirs,
            dataset,
            cache: HashMap::new(),
        }
    }

    fn get(&mut self, doc: &str) -> Result<&TimemlDoc> {
        if !self.cache.contains_key(doc) {
            let path = self
                .dirs
                .iter()
                .map(|d| d.join(format!("{doc}.tml")))
                .find(|p| p.is_file())
                .ok_or_else(|| AdapterError::MissingSource {
                    dataset: self.dataset,
                    doc: doc.to_string(),
                })?;
            let parsed = TimemlDoc::parse(doc, &read(&path)?, self.dataset)?;
            self.cache.insert(doc.to_string(), parsed);
        }
        Ok(&self.cache[doc])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatresPart {
    Aquaint,
    Timebank,
    Platinum,
}

/// One MATRES annotation file and the directory holding its sources.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatresSource {
    pub part: MatresPart,
    pub annotation: PathBuf,
    pub documents: PathBuf,
}

/// AQUAINT and TimeBank feed train with a seeded 20% document-level dev
/// carve-out; Platinum is the test split.
pub fn load_matres(sources: &[MatresSource], seed: u64) -> Result<Vec<BenchmarkInstance>> {
    let ds = Dataset::Matres;
    let mut rows = Vec::new();
    for src in sources {
        let mut store = DocumentStore::new(vec![src.documents.clone()], ds);
        for (n, line) in read(&src.annotation)?.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let location = format!("{}:{}", src.annotation.display(), n + 1);
            let bad = |message: String| AdapterError::Format {
                dataset: ds,
                location: location.clone(),
                message,
            };
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            if cols.len() < 6 {
                return Err(bad(format!("expected 6 columns, found {}", cols.len())));
            }
            let label = cols[5].to_ascii_uppercase();
            if !ds.labels().contains(&label.as_str()) {
                return Err(bad(format!("unknown label `{}`", cols[5])));
            }
            let doc = store.get(cols[0])?;
            let a = doc.event_span(&doc.eid_for_instance(cols[3], ds)?, ds)?;
            let b = doc.event_span(&doc.eid_for_instance(cols[4], ds)?, ds)?;
            rows.push((
                src.part,
                cols[0].to_string(),
                BenchmarkInstance {
                    dataset: ds,
                    id: format!("matres:{}:{}-{}", cols[0], cols[3], cols[4]),
                    context: pair_context(doc, a, b),
                    query: BenchmarkQuery::Pair {
                        arg1: doc.text[a.0..a.1].to_string(),
                        arg2: doc.text[b.0..b.1].to_string(),
                    },
                    gold: BenchmarkGold::Label(label),
                    split: BenchmarkSplit::Train,
                },
            ));
        }
    }
    let train_docs: BTreeSet<String> = rows
        .iter()
        .filter(|(p, _, _)| *p != MatresPart::Platinum)
        .map(|(_, d, _)| d.clone())
        .collect();
    let dev = carve_dev(&train_docs, ds, seed);
    Ok(rows
        .into_iter()
        .map(|(part, doc, mut inst)| {
            inst.split = if part == MatresPart::Platinum {
                BenchmarkSplit::Test
            } else if dev.contains(&doc) {
                BenchmarkSplit::Dev
            } else {
                BenchmarkSplit::Train
            };
            inst
        })
        .collect())
}

fn tdd_label(code: &str) -> Option<&'static str> {
    Some(match code {
        "a" => "AFTER",
        "b" => "BEFORE",
        "s" => "SIMULTANEOUS",
        "i" => "INCLUDE",
        "ii" => "INCLUDED",
        _ => return None,
    })
}

/// TDDMan files in `annotations` with their original splits; sources are
/// searched in `documents` in order.
pub fn load_tddiscourse(
    annotations: &Path,
    documents: &[PathBuf],
) -> Result<Vec<BenchmarkInstance>> {
    let ds = Dataset::Tddiscourse;
    let mut files: Vec<PathBuf> = fs::read_dir(annotations)
        .map_err(|source| AdapterError::Io {
            path: annotations.to_path_buf(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.to_ascii_lowercase().starts_with("tddman"))
        })
        .collect();
    files.sort();
    let mut store = DocumentStore::new(documents.to_vec(), ds);
    let mut out = Vec::new();
    for path in files {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        let split = BenchmarkSplit::from_name(&name).ok_or_else(|| AdapterError::Format {
            dataset: ds,
            location: name.clone(),
            message: "file name names no split".into(),
        })?;
        for (n, line) in read(&path)?.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| AdapterError::Format {
                dataset: ds,
                location: format!("{name}:{}", n + 1),
                message,
            };
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            if cols.len() < 4 {
                return Err(bad(format!("expected 4 columns, found {}", cols.len())));
            }
            let label =
                tdd_label(cols[3]).ok_or_else(|| bad(format!("unknown label `{}`", cols[3])))?;
            let doc = store.get(cols[0])?;
            let a = doc.event_span(cols[1], ds)?;
            let b = doc.event_span(cols[2], ds)?;
            out.push(BenchmarkInstance {
                dataset: ds,
                id: format!("tddiscourse:{}:{}-{}", cols[0], cols[1], cols[2]),
                context: pair_context(doc, a, b),
                query: BenchmarkQuery::Pair {
                    arg1: doc.text[a.0..a.1].to_string(),
                    arg2: doc.text[b.0..b.1].to_string(),
                },
                gold: BenchmarkGold::Label(label.to_string()),
                split,
            });
        }
    }
    Ok(out)
}

#[derive(Deserialize)]
struct NliRow {
    context: String,
    hypothesis: String,
    label: String,
    #[serde(default)]
    split: Option<String>,
}

fn nli_label(s: &str) -> Option<bool> {
    match s
        .trim()
        .to_ascii_lowercase()
        .replace(['_', ' '], "-")
        .as_str()
    {
        "entailed" | "entailment" => Some(true),
        "not-entailed" | "not-entailment" | "non-entailment" => Some(false),
        _ => None,
    }
}

/// Recast TempEval3 rows; repeated (context, hypothesis) rows keep the first.
pub fn load_temporal_nli(paths: &[PathBuf]) -> Result<Vec<BenchmarkInstance>> {
    let ds = Dataset::TemporalNli;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for path in paths {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        let text = read(path)?;
        let values: Vec<(String, serde_json::Value)> = if text.trim_start().starts_with('[') {
            let arr: Vec<serde_json::Value> =
                serde_json::from_str(&text).map_err(|e| AdapterError::Format {
                    dataset: ds,
                    location: name.clone(),
                    message: e.to_string(),
                })?;
            arr.into_iter()
                .enumerate()
                .map(|(i, v)| (format!("{name}[{i}]"), v))
                .collect()
        } else {
            let mut v = Vec::new();
            for (n, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let value = serde_json::from_str(line).map_err(|e| AdapterError::Format {
                    dataset: ds,
                    location: format!("{name}:{}", n + 1),
                    message: e.to_string(),
                })?;
                v.push((format!("{name}:{}", n + 1), value));
            }
            v
        };
        for (location, value) in values {
            let bad = |message: String| AdapterError::Format {
                dataset: ds,
                location: location.clone(),
                message,
            };
            let row: NliRow = serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
            let label = nli_label(&row.label)
                .ok_or_else(|| bad(format!("unknown label `{}`", row.label)))?;
            let split = row
                .split
                .as_deref()
                .or(Some(name.as_str()))
                .and_then(BenchmarkSplit::from_name)
                .ok_or_else(|| bad("no split".into()))?;
            if !seen.insert((row.context.clone(), row.hypothesis.clone())) {
                continue;
            }
            out.push(BenchmarkInstance {
                dataset: ds,
                id: format!("temporal_nli:{}", out.len()),
                context: row.context,
                query: BenchmarkQuery::Hypothesis {
                    text: row.hypothesis,
                },
                gold: BenchmarkGold::Binary(label),
                split,
            });
        }
    }
    Ok(out)
}

#[derive(Deserialize)]
struct TorqueDoc {
    #[serde(default)]
    doc_id: Option<String>,
    passages: Vec<TorquePassage>,
}

#[derive(Deserialize)]
struct TorquePassage {
    passage: String,
    #[serde(default)]
    events: Vec<TorqueEvents>,
    question_answer_pairs: Vec<TorqueQa>,
}

#[derive(Deserialize)]
struct TorqueEvents {
    answer: TorqueAnswer,
}

#[derive(Deserialize, Default)]
struct TorqueAnswer {
    #[serde(default)]
    spans: Vec<String>,
    #[serde(default)]
    indices: Vec<(usize, usize)>,
}

#[derive(Deserialize)]
struct TorqueQa {
    question: String,
    #[serde(default)]
    question_id: Option<String>,
    #[serde(default)]
    answer: Option<TorqueAnswer>,
    #[serde(default)]
    individual_answers: Vec<TorqueAnswer>,
}

fn load_torque_file(
    path: &Path,
    split_of: impl Fn(&str) -> BenchmarkSplit,
) -> Result<Vec<(String, BenchmarkInstance)>> {
    let ds = Dataset::Torque;
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default()
        .to_string();
    let docs: Vec<TorqueDoc> =
        serde_json::from_str(&read(path)?).map_err(|e| AdapterError::Format {
            dataset: ds,
            location: name.clone(),
            message: e.to_string(),
        })?;
    let mut out = Vec::new();
    for (d, doc) in docs.into_iter().enumerate() {
        let doc_id = doc.doc_id.unwrap_or_else(|| format!("{name}#{d}"));
        for (p, passage) in doc.passages.into_iter().enumerate() {
            let mut spans: Vec<(usize, usize)> = passage
                .events
                .iter()
                .flat_map(|e| e.answer.indices.iter().copied())
                .filter(|(s, e)| s < e && *e <= passage.passage.len())
                .collect();
            spans.sort();
            spans.dedup();
            let events: Vec<String> = spans
                .iter()
                .map(|(s, e)| passage.passage[*s..*e].to_string())
                .collect();
            let context = collapse_ws(&mark_spans(&passage.passage, &spans));
            for (q, qa) in passage.question_answer_pairs.into_iter().enumerate() {
                let mut sets: Vec<BTreeSet<String>> = Vec::new();
                for a in qa.answer.iter().chain(&qa.individual_answers) {
                    let set: BTreeSet<String> =
                        a.spans.iter().map(|s| s.trim().to_string()).collect();
                    if !sets.contains(&set) {
                        sets.push(set);
                    }
                }
                if sets.is_empty() {
                    return Err(AdapterError::Format {
                        dataset: ds,
                        location: format!("{name}: {doc_id} passage {p} question {q}"),
                        message: "question has no annotator answer sets".into(),
                    });
                }
                let qid = qa
                    .question_id
                    .unwrap_or_else(|| format!("{doc_id}/{p}/{q}"));
                out.push((
                    doc_id.clone(),
                    BenchmarkInstance {
                        dataset: ds,
                        id: format!("torque:{qid}"),
                        context: context.clone(),
                        query: BenchmarkQuery::Question {
                            text: qa.question,
                            events: events.clone(),
                        },
                        gold: BenchmarkGold::AnswerSets(sets),
                        split: split_of(&doc_id),
                    },
                ));
            }
        }
    }
    Ok(out)
}

/// Original train is carved 80/20 into train/dev by document; the original
/// dev set becomes the reporting (test) split.
pub fn load_torque(train: &Path, dev: &Path, seed: u64) -> Result<Vec<BenchmarkInstance>> {
    let train_rows = load_torque_file(train, |_| BenchmarkSplit::Train)?;
    let docs: BTreeSet<String> = train_rows.iter().map(|(d, _)| d.clone()).collect();
    let carved = carve_dev(&docs, Dataset::Torque, seed);
    let mut out: Vec<BenchmarkInstance> = train_rows
        .into_iter()
        .map(|(doc, mut inst)| {
            if carved.contains(&doc) {
                inst.split = BenchmarkSplit::Dev;
            }
            inst
        })
        .collect();
    out.extend(
        load_torque_file(dev, |_| BenchmarkSplit::Test)?
            .into_iter()
            .map(|(_, i)| i),
    );
    Ok(out)
}

fn pair_choice(label: &str) -> &'static str {
    match label {
        "BEFORE" => "The first event happened before the second event.",
        "AFTER" => "The first event happened after the second event.",
        "EQUAL" | "SIMULTANEOUS" => "The two events happened at the same time.",
        "VAGUE" => "The order of the two events is unclear.",
        "INCLUDE" => "The first event includes the second event.",
        "INCLUDED" => "The first event is included in the second event.",
        _ => "",
    }
}

fn answer_text(set: &BTreeSet<String>, template: &PromptTemplate) -> String {
    if set.is_empty() {
        return template
            .meta
            .empty_answer
            .clone()
            .unwrap_or_else(|| "None".into());
    }
    let items: Vec<&str> = set.iter().map(String::as_str).collect();
    match &template.meta.answer_prefix {
        Some(prefix) => items
            .iter()
            .map(|a| format!("{prefix}{a}"))
            .collect::<Vec<_>>()
            .join("\n"),
        None => items.join(", "),
    }
}

/// Slot values for `inst` under `template`.
pub fn benchmark_slots(
    inst: &BenchmarkInstance,
    template: &PromptTemplate,
) -> Result<BTreeMap<String, String>> {
    let expected = inst.dataset.formulation();
    if template.formulation != expected {
        return Err(AdapterError::WrongFormulation {
            dataset: inst.dataset,
            template: template.id.clone(),
            found: template.formulation,
            expected,
        });
    }
    let mut slots = BTreeMap::new();
    let mut set = |k: &str, v: String| {
        slots.insert(k.to_string(), v);
    };
    set("context", inst.context.clone());
    set("marker", MarkerStyle::Eid.hint().to_string());
    match (&inst.query, &inst.gold) {
        (BenchmarkQuery::Hypothesis { text }, BenchmarkGold::Binary(entails)) => {
            set("premise", inst.context.clone());
            set("hypothesis", text.clone());
            let a = &template.meta.answers;
            set(
                "target",
                if *entails {
                    a.yes.clone()
                } else {
                    a.no.clone()
                },
            );
        }
        (BenchmarkQuery::Pair { arg1, arg2 }, BenchmarkGold::Label(label)) => {
            set("arg1", format!("[e1]{arg1}[/e1]"));
            set("arg2", format!("[e2]{arg2}[/e2]"));
            let choices: Vec<String> = inst
                .dataset
                .labels()
                .iter()
                .map(|l| format!("{l}: {}", pair_choice(l)))
                .collect();
            set("choices", choices.join("\n"));
            set("target", label.clone());
        }
        (BenchmarkQuery::Question { text, events }, BenchmarkGold::AnswerSets(sets)) => {
            set("question", text.clone());
            let list: Vec<String> = events
                .iter()
                .enumerate()
                .map(|(i, e)| format!("- [e{n}]{e}[/e{n}]", n = i + 1))
                .collect();
            set("events", list.join("\n"));
            set("target", answer_text(&sets[0], template));
        }
        _ => {
            return Err(AdapterError::Format {
                dataset: inst.dataset,
                location: inst.id.clone(),
                message: "query and gold kinds disagree".into(),
            })
        }
    }
    Ok(slots)
}

/// Demonstrations in full followed by the query up to its answer slot.
pub fn render_benchmark(
    template: &PromptTemplate,
    inst: &BenchmarkInstance,
    demos: &[&BenchmarkInstance],
    budget: &Budget,
) -> Result<String> {
    let mut parts = Vec::with_capacity(demos.len() + 1);
    for demo in demos {
        let full = render_template(&template.body, &benchmark_slots(demo, template)?)?;
        parts.push(full.trim_end().to_string());
    }
    let cut = cut_point(&template.body);
    let query = render_template(&template.body[..cut], &benchmark_slots(inst, template)?)?;
    parts.push(query.trim_end_matches([' ', '\t']).to_string());
    let prompt = parts.join("\n\n");
    budget.check(&prompt)?;
    Ok(prompt)
}

/// Seeded demonstrations for `inst` drawn from `pool` (never `inst` itself).
pub fn select_benchmark_demos<'a>(
    pool: &'a [BenchmarkInstance],
    inst: &BenchmarkInstance,
    n: usize,
    seed: u64,
) -> Vec<&'a BenchmarkInstance> {
    let candidates: Vec<&BenchmarkInstance> = pool.iter().filter(|c| c.id != inst.id).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[&inst.id, &n.to_string()]));
    candidates.choose_multiple(&mut rng, n).copied().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum BenchmarkPrediction {
    Binary(Option<bool>),
    Label(Option<String>),
    Answers(BTreeSet<String>),
}

fn marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[/?e\d+\]").unwrap())
}

pub fn parse_benchmark(
    inst: &BenchmarkInstance,
    template: &PromptTemplate,
    completion: &str,
) -> BenchmarkPrediction {
    match inst.dataset.formulation() {
        Formulation::Nli => {
            BenchmarkPrediction::Binary(first_match(completion, &template.nli_vocabulary()))
        }
        Formulation::Pairwise => {
            let vocab: Vec<(String, usize)> = inst
                .dataset
                .labels()
                .iter()
                .enumerate()
                .map(|(i, l)| (l.to_string(), i))
                .collect();
            BenchmarkPrediction::Label(first_match(completion, &vocab).map(|i| vocab[i].0.clone()))
        }
        _ => {
            let lower = completion.to_lowercase();
            let tail = match lower.rfind("answer:") {
                Some(i) => &completion[i + "answer:".len()..],
                None => completion,
            };
            let empty = template
                .meta
                .empty_answer
                .as_deref()
                .unwrap_or("None")
                .to_lowercase();
            let stripped = marker_regex().replace_all(tail, "");
            let answers = stripped
                .split([',', '\n', ';'])
                .map(|s| {
                    s.trim()
                        .trim_start_matches(['-', '*'])
                        .trim()
                        .trim_end_matches('.')
                        .trim()
                        .to_lowercase()
                })
                .filter(|s| !s.is_empty() && *s != empty && s != "none")
                .collect();
            BenchmarkPrediction::Answers(answers)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkScore {
    pub dataset: Dataset,
    pub metric: BenchmarkMetric,
    pub value: f64,
    pub count: usize,
}

/// Scores aligned predictions with the dataset's bound metric.
pub fn score_benchmark(
    dataset: Dataset,
    instances: &[BenchmarkInstance],
    predictions: &[BenchmarkPrediction],
) -> Result<BenchmarkScore> {
    if instances.len() != predictions.len() {
        return Err(MetricsError::LengthMismatch {
            pred: predictions.len(),
            gold: instances.len(),
        }
        .into());
    }
    let mismatch = |id: &str| AdapterError::Format {
        dataset,
        location: id.to_string(),
        message: "prediction kind does not match gold".into(),
    };
    let value = match dataset.metric() {
        BenchmarkMetric::Accuracy => {
            let mut gold = Vec::new();
            let mut pred = Vec::new();
            for (i, p) in instances.iter().zip(predictions) {
                match (&i.gold, p) {
                    (BenchmarkGold::Binary(g), BenchmarkPrediction::Binary(p)) => {
                        gold.push(*g);
                        pred.push(*p);
                    }
                    _ => return Err(mismatch(&i.id)),
                }
            }
            accuracy(&pred, &gold)?
        }
        BenchmarkMetric::MicroF1 => {
            let mut gold = Vec::new();
            let mut pred = Vec::new();
            for (i, p) in instances.iter().zip(predictions) {
                match (&i.gold, p) {
                    (BenchmarkGold::Label(g), BenchmarkPrediction::Label(p)) => {
                        gold.push(g.clone());
                        pred.push(p.clone());
                    }
                    _ => return Err(mismatch(&i.id)),
                }
            }
            let negative = dataset.negative_label().map(str::to_string);
            micro_f1(&pred, &gold, negative.as_ref())?.f1
        }
        BenchmarkMetric::ExactMatchBest => {
            let mut gold = Vec::new();
            let mut pred = Vec::new();
            for (i, p) in instances.iter().zip(predictions) {
                match (&i.gold, p) {
                    (BenchmarkGold::AnswerSets(sets), BenchmarkPrediction::Answers(a)) => {
                        let lowered = |s: &BTreeSet<String>| {
                            s.iter().map(|x| x.to_lowercase()).collect::<BTreeSet<_>>()
                        };
                        gold.push(sets.iter().map(lowered).collect::<Vec<_>>());
                        pred.push(a.clone());
                    }
                    _ => return Err(mismatch(&i.id)),
                }
            }
            exact_match_best(&pred, &gold)?
        }
    };
    Ok(BenchmarkScore {
        dataset,
        metric: dataset.metric(),
        value,
        count: instances.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentences_split_on_terminal_punctuation() {
        let t = "One. Two words! Three";
        let s: Vec<&str> = sentence_spans(t)
            .iter()
            .map(|(a, b)| t[*a..*b].trim())
            .collect();
        assert_eq!(s, ["One.", "Two words!", "Three"]);
    }

    #[test]
    fn timeml_offsets() {
        let src = r#"<TimeML><TEXT>Police <EVENT eid="e1" class="OCCURRENCE">tried</EVENT> &amp; <EVENT eid="e2">failed</EVENT>.</TEXT>
<MAKEINSTANCE eiid="ei7" eventID="e1"/><MAKEINSTANCE eventID="e2" eiid="ei8"/></TimeML>"#;
        let d = TimemlDoc::parse("x", src, Dataset::Matres).unwrap();
        assert_eq!(d.text, "Police tried & failed.");
        let (s, e) = d.events["e2"];
        assert_eq!(&d.text[s..e], "failed");
        assert_eq!(d.eid_for_instance("7", Dataset::Matres).unwrap(), "e1");
        assert_eq!(d.eid_for_instance("ei8", Dataset::Matres).unwrap(), "e2");
    }

    #[test]
    fn carve_out_is_deterministic_and_sized() {
        let docs: BTreeSet<String> = (0..10).map(|i| format!("d{i}")).collect();
        let a = carve_dev(&docs, Dataset::Matres, 7);
        assert_eq!(a, carve_dev(&docs, Dataset::Matres, 7));
        assert_eq!(a.len(), 2);
        assert!(a.is_subset(&docs));
    }

    #[test]
    fn nli_labels() {
        assert_eq!(nli_label("not-entailed"), Some(false));
        assert_eq!(nli_label("Not entailment"), Some(false));
        assert_eq!(nli_label("entailed"), Some(true));
        assert_eq!(nli_label("maybe"), None);
    }
}
