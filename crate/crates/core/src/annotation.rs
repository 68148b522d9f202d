//! Standoff annotation ingestion, event marker rendering and corpus loading.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ArgRole, Argument, Event, EventId, GraphError, Span, TimelineGraph};

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("empty annotation or document text")]
    EmptyInput,
    #[error("malformed standoff line {line}: `{content}`")]
    Malformed { line: usize, content: String },
    #[error("{id}: surface `{surface}` does not match text slice `{slice}`")]
    OffsetMismatch {
        id: String,
        surface: String,
        slice: String,
    },
    #[error("{id} references unknown annotation `{target}`")]
    DanglingReference { id: String, target: String },
    #[error("{id}: unknown label `{label}`")]
    UnknownLabel { id: String, label: String },
    #[error("overlapping event spans `{0}` and `{1}`")]
    OverlappingSpans(EventId, EventId),
    #[error("missing text/annotation pair for `{0}`")]
    MissingPair(String),
    #[error("manifest: {0}")]
    ManifestError(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StandoffEntry {
    TextBound {
        id: String,
        label: String,
        span: Span,
        surface: String,
    },
    Relation {
        id: String,
        label: String,
        arg1: String,
        arg2: String,
    },
    ArgLink {
        id: String,
        role: ArgRole,
        event: String,
        entity: String,
    },
}

impl StandoffEntry {
    pub fn id(&self) -> &str {
        match self {
            StandoffEntry::TextBound { id, .. }
            | StandoffEntry::Relation { id, .. }
            | StandoffEntry::ArgLink { id, .. } => id,
        }
    }
}

/// A non-event text-bound annotation (argument filler).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub label: String,
    pub span: Span,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedAnnotation {
    pub graph: TimelineGraph,
    pub entities: Vec<Entity>,
    /// AFTER and COEX lines.
    pub relation_count: usize,
    /// ARGx links.
    pub argument_count: usize,
}

const EVENT_LABEL: &str = "Event";

fn parse_line(lineno: usize, line: &str) -> Result<Option<StandoffEntry>, AnnotationError> {
    let malformed = || AnnotationError::Malformed {
        line: lineno,
        content: line.to_string(),
    };
    if line.trim().is_empty() || line.starts_with('#') || line.starts_with('A') {
        return Ok(None);
    }
    let mut fields = line.splitn(3, '\t');
    let id = fields.next().ok_or_else(malformed)?.to_string();
    let body = fields.next().ok_or_else(malformed)?;
    if id.starts_with('T') {
        let surface = fields.next().ok_or_else(malformed)?.to_string();
        let mut parts = body.split(' ');
        let label = parts.next().ok_or_else(malformed)?.to_string();
        let start: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(malformed)?;
        let end: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(malformed)?;
        if parts.next().is_some() || end < start {
            return Err(malformed());
        }
        return Ok(Some(StandoffEntry::TextBound {
            id,
            label,
            span: Span::new(start, end),
            surface,
        }));
    }
    if id.starts_with('R') {
        let mut parts = body.split(' ');
        let label = parts.next().ok_or_else(malformed)?.to_string();
        let arg1 = parts
            .next()
            .and_then(|s| s.strip_prefix("Arg1:"))
            .ok_or_else(malformed)?
            .to_string();
        let arg2 = parts
            .next()
            .and_then(|s| s.strip_prefix("Arg2:"))
            .ok_or_else(malformed)?
            .to_string();
        if let Ok(role) = ArgRole::from_str(&label) {
            return Ok(Some(StandoffEntry::ArgLink {
                id,
                role,
                event: arg1,
                entity: arg2,
            }));
        }
        return match label.as_str() {
            "AFTER" | "COEX" => Ok(Some(StandoffEntry::Relation {
                id,
                label,
                arg1,
                arg2,
            })),
            _ => Err(AnnotationError::UnknownLabel { id, label }),
        };
    }
    Err(malformed())
}

/// Byte offset of every character position, plus the end.
fn char_boundaries(text: &str) -> Vec<usize> {
    text.char_indices()
        .map(|(b, _)| b)
        .chain([text.len()])
        .collect()
}

fn slice_chars<'a>(text: &'a str, bounds: &[usize], span: Span) -> Option<&'a str> {
    if span.end >= bounds.len() || span.start > span.end {
        return None;
    }
    Some(&text[bounds[span.start]..bounds[span.end]])
}

/// Parses the standoff subset into a timeline graph over the document text.
///
/// `AFTER Arg1:X Arg2:Y` (X after Y) is stored as the precedence edge
/// `Y -> X`. Entries are processed in id order, so the result does not depend
/// on line order.
pub fn parse_standoff(annotation: &str, text: &str) -> Result<ParsedAnnotation, AnnotationError> {
    if annotation.trim().is_empty() || text.is_empty() {
        return Err(AnnotationError::EmptyInput);
    }
    let mut entries = Vec::new();
    for (i, line) in annotation.lines().enumerate() {
        if let Some(e) = parse_line(i + 1, line)? {
            entries.push(e);
        }
    }
    entries.sort_by_key(|e| natural_key(e.id()));

    let bounds = char_boundaries(text);
    let mut events: BTreeMap<String, Event> = BTreeMap::new();
    let mut entities: BTreeMap<String, Entity> = BTreeMap::new();
    for entry in &entries {
        if let StandoffEntry::TextBound {
            id,
            label,
            span,
            surface,
        } = entry
        {
            let slice = slice_chars(text, &bounds, *span).unwrap_or("");
            if slice != surface {
                return Err(AnnotationError::OffsetMismatch {
                    id: id.clone(),
                    surface: surface.clone(),
                    slice: slice.to_string(),
                });
            }
            if label == EVENT_LABEL {
                events.insert(
                    id.clone(),
                    Event {
                        id: EventId::new(id.clone()),
                        mention: surface.clone(),
                        span: *span,
                        index: 0,
                        arguments: Vec::new(),
                    },
                );
            } else {
                entities.insert(
                    id.clone(),
                    Entity {
                        id: id.clone(),
                        label: label.clone(),
                        span: *span,
                        text: surface.clone(),
                    },
                );
            }
        }
    }

    let mut argument_count = 0;
    for entry in &entries {
        if let StandoffEntry::ArgLink {
            id,
            role,
            event,
            entity,
        } = entry
        {
            let ent = entities
                .get(entity)
                .map(|e| (e.text.clone(), e.span))
                .or_else(|| events.get(entity).map(|e| (e.mention.clone(), e.span)))
                .ok_or_else(|| AnnotationError::DanglingReference {
                    id: id.clone(),
                    target: entity.clone(),
                })?;
            let ev = events
                .get_mut(event)
                .ok_or_else(|| AnnotationError::DanglingReference {
                    id: id.clone(),
                    target: event.clone(),
                })?;
            ev.arguments.push(Argument {
                role: *role,
                text: ent.0,
                span: ent.1,
            });
            argument_count += 1;
        }
    }

    let mut ordered: Vec<Event> = events.into_values().collect();
    ordered.sort_by(|a, b| {
        a.span
            .cmp(&b.span)
            .then_with(|| natural_key(a.id.as_str()).cmp(&natural_key(b.id.as_str())))
    });
    for (i, e) in ordered.iter_mut().enumerate() {
        e.index = i + 1;
        e.arguments
            .sort_by(|a, b| a.role.cmp(&b.role).then(a.span.cmp(&b.span)));
    }
    let mut graph = TimelineGraph::new(ordered)?;

    let mut relation_count = 0;
    for entry in &entries {
        if let StandoffEntry::Relation {
            id,
            label,
            arg1,
            arg2,
        } = entry
        {
            for target in [arg1, arg2] {
                if !graph.contains(&EventId::new(target.clone())) {
                    return Err(AnnotationError::DanglingReference {
                        id: id.clone(),
                        target: target.clone(),
                    });
                }
            }
            let (a1, a2) = (EventId::new(arg1.clone()), EventId::new(arg2.clone()));
            match label.as_str() {
                // arg1 happened after arg2
                "AFTER" => graph.add_edge(a2, a1)?,
                _ => graph.add_coex(a1, a2)?,
            }
            relation_count += 1;
        }
    }

    Ok(ParsedAnnotation {
        graph,
        entities: entities.into_values().collect(),
        relation_count,
        argument_count,
    })
}

/// Sort key that orders `T2` before `T10`.
fn natural_key(id: &str) -> (String, u64, String) {
    let prefix: String = id.chars().take_while(|c| !c.is_ascii_digit()).collect();
    let digits: String = id[prefix.len()..]
        .chars()
        .take_while(|c| c.is_ascii_digit())
        .collect();
    let rest = id[prefix.len() + digits.len()..].to_string();
    (prefix, digits.parse().unwrap_or(0), rest)
}

/// How target events are highlighted in prompt text.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "lowercase")]
pub enum MarkerStyle {
    /// `[e1]death[/e1]`
    #[default]
    Eid,
    /// `**death**`
    Star,
    /// `[EVENT]death[ARG1]patient[/EVENT]`
    Structured,
}

impl MarkerStyle {
    pub fn as_str(&self) -> &'static str {
        match self {
            MarkerStyle::Eid => "eid",
            MarkerStyle::Star => "star",
            MarkerStyle::Structured => "structured",
        }
    }

    /// Short form used in "events are marked with ..." hints.
    pub fn hint(&self) -> &'static str {
        match self {
            MarkerStyle::Eid => "[e]",
            MarkerStyle::Star => "**",
            MarkerStyle::Structured => "[EVENT]",
        }
    }
}

impl FromStr for MarkerStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eid" => Ok(MarkerStyle::Eid),
            "star" => Ok(MarkerStyle::Star),
            "structured" => Ok(MarkerStyle::Structured),
            other => Err(format!("unknown representation `{other}`")),
        }
    }
}

/// Marked-up form of a single event mention.
pub fn event_ref(event: &Event, label: usize, style: MarkerStyle) -> String {
    match style {
        MarkerStyle::Eid => format!("[e{label}]{}[/e{label}]", event.mention),
        MarkerStyle::Star => format!("**{}**", event.mention),
        MarkerStyle::Structured => {
            let mut s = format!("[EVENT]{}", event.mention);
            for a in &event.arguments {
                s.push_str(&format!("[{}]{}", a.role.as_str(), a.text));
            }
            s.push_str("[/EVENT]");
            s
        }
    }
}

/// Wraps each `(event, label)` mention in `text`; all other bytes are copied.
pub fn render_events(
    text: &str,
    events: &[(&Event, usize)],
    style: MarkerStyle,
) -> Result<String, AnnotationError> {
    let mut sorted: Vec<&(&Event, usize)> = events.iter().collect();
    sorted.sort_by_key(|(e, _)| e.span);
    for w in sorted.windows(2) {
        if w[0].0.span.overlaps(&w[1].0.span) {
            return Err(AnnotationError::OverlappingSpans(
                w[0].0.id.clone(),
                w[1].0.id.clone(),
            ));
        }
    }
    let bounds = char_boundaries(text);
    let mut out = String::with_capacity(text.len() + 16 * events.len());
    let mut cursor = 0;
    for (event, label) in sorted {
        let (start, end) = (bounds[event.span.start], bounds[event.span.end]);
        out.push_str(&text[cursor..start]);
        out.push_str(&event_ref(event, *label, style));
        cursor = end;
    }
    out.push_str(&text[cursor..]);
    Ok(out)
}

/// Marks every event of `graph` with its document-level index.
pub fn render_markers(
    text: &str,
    graph: &TimelineGraph,
    style: MarkerStyle,
) -> Result<String, AnnotationError> {
    let events: Vec<(&Event, usize)> = graph.events().iter().map(|e| (e, e.index)).collect();
    render_events(text, &events, style)
}

/// Marks only `selected`, numbered 1.. by their textual order.
pub fn render_selected(
    text: &str,
    graph: &TimelineGraph,
    selected: &[EventId],
    style: MarkerStyle,
) -> Result<(String, BTreeMap<EventId, usize>), AnnotationError> {
    let mut chosen: Vec<&Event> = selected
        .iter()
        .map(|id| {
            graph
                .event(id)
                .ok_or_else(|| GraphError::UnknownEvent(id.clone()))
        })
        .collect::<Result<_, _>>()?;
    chosen.sort_by_key(|e| e.index);
    chosen.dedup_by_key(|e| e.index);
    let labels: BTreeMap<EventId, usize> = chosen
        .iter()
        .enumerate()
        .map(|(i, e)| (e.id.clone(), i + 1))
        .collect();
    let events: Vec<(&Event, usize)> = chosen.iter().map(|e| (*e, labels[&e.id])).collect();
    Ok((render_events(text, &events, style)?, labels))
}

fn marker_regex(style: MarkerStyle) -> &'static Regex {
    static EID: OnceLock<Regex> = OnceLock::new();
    static STAR: OnceLock<Regex> = OnceLock::new();
    static STRUCTURED: OnceLock<Regex> = OnceLock::new();
    match style {
        MarkerStyle::Eid => {
            EID.get_or_init(|| Regex::new(r"(?s)\[e(\d+)\](.*?)\[/e\d+\]").unwrap())
        }
        MarkerStyle::Star => STAR.get_or_init(|| Regex::new(r"(?s)\*\*()(.*?)\*\*").unwrap()),
        MarkerStyle::Structured => STRUCTURED.get_or_init(|| {
            Regex::new(r"(?s)\[EVENT\]()(.*?)(?:\[ARG[0-5]\][^\[]*)*\[/EVENT\]").unwrap()
        }),
    }
}

/// Removes markers added by [`render_markers`] in the given style.
pub fn strip_markers(text: &str, style: MarkerStyle) -> String {
    marker_regex(style).replace_all(text, "$2").into_owned()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Era {
    Old,
    New,
}

impl Era {
    /// Documents created in September 2022 or later are `New`.
    pub fn of(dct: NaiveDate) -> Era {
        let boundary = NaiveDate::from_ymd_opt(2022, 9, 1).expect("valid date");
        if dct >= boundary {
            Era::New
        } else {
            Era::Old
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Era::Old => "old",
            Era::New => "new",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Dev,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// One line of `manifest.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub title: String,
    pub dct: NaiveDate,
    pub topic: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub id: String,
    pub title: String,
    pub text: String,
    pub dct: NaiveDate,
    pub era: Era,
    pub topic: String,
    pub split: Split,
    pub graph: TimelineGraph,
    pub entities: Vec<Entity>,
    pub relation_count: usize,
    pub argument_count: usize,
    pub word_count: usize,
    pub sentence_count: usize,
}

impl DocumentRecord {
    pub fn from_parts(
        meta: &ManifestEntry,
        text: String,
        annotation: &str,
    ) -> Result<Self, AnnotationError> {
        let parsed = parse_standoff(annotation, &text)?;
        Ok(DocumentRecord {
            id: meta.id.clone(),
            title: meta.title.clone(),
            word_count: word_count(&text),
            sentence_count: sentence_count(&text),
            text,
            dct: meta.dct,
            era: Era::of(meta.dct),
            topic: meta.topic.clone(),
            split: meta.split,
            graph: parsed.graph,
            entities: parsed.entities,
            relation_count: parsed.relation_count,
            argument_count: parsed.argument_count,
        })
    }

    /// Character span of the first line.
    pub fn title_span(&self) -> Span {
        let len = self
            .text
            .lines()
            .next()
            .map(|l| l.chars().count())
            .unwrap_or(0);
        Span::new(0, len)
    }

    pub fn title_zone_events(&self) -> Vec<EventId> {
        let title = self.title_span();
        self.graph
            .events()
            .iter()
            .filter(|e| e.span.overlaps(&title))
            .map(|e| e.id.clone())
            .collect()
    }

    pub fn event_count(&self) -> usize {
        self.graph.len()
    }
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Lines without a sentence terminator (title, dateline) count as one sentence.
pub fn sentence_count(text: &str) -> usize {
    static END: OnceLock<Regex> = OnceLock::new();
    let end = END.get_or_init(|| Regex::new(r#"[.!?]+["'”’)\]]*(\s|$)"#).unwrap());
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| end.find_iter(l).count().max(1))
        .sum()
}

fn read(path: &Path) -> Result<String, AnnotationError> {
    fs::read_to_string(path).map_err(|source| AnnotationError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, AnnotationError> {
    let body = fs::read_to_string(path)
        .map_err(|e| AnnotationError::ManifestError(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(line)
            .map_err(|e| AnnotationError::ManifestError(format!("line {}: {e}", i + 1)))?;
        if !ids.insert(entry.id.clone()) {
            return Err(AnnotationError::ManifestError(format!(
                "duplicate id `{}`",
                entry.id
            )));
        }
        out.push(entry);
    }
    Ok(out)
}

/// Stems of `.txt`/`.ann` files in `root`, checking that each has both.
pub fn document_pairs(root: &Path) -> Result<BTreeSet<String>, AnnotationError> {
    let entries = fs::read_dir(root).map_err(|source| AnnotationError::Io {
        path: root.to_path_buf(),
        source,
    })?;
    let mut txt = BTreeSet::new();
    let mut ann = BTreeSet::new();
    for entry in entries.flatten() {
        let path = entry.path();
        let (Some(stem), Some(ext)) = (path.file_stem(), path.extension()) else {
            continue;
        };
        let stem = stem.to_string_lossy().into_owned();
        match ext.to_str() {
            Some("txt") => {
                txt.insert(stem);
            }
            Some("ann") => {
                ann.insert(stem);
            }
            _ => {}
        }
    }
    if let Some(orphan) = txt.symmetric_difference(&ann).next() {
        return Err(AnnotationError::MissingPair(orphan.clone()));
    }
    if txt.is_empty() {
        return Err(AnnotationError::MissingPair(root.display().to_string()));
    }
    Ok(txt)
}

/// Loads every document listed in `root/manifest.jsonl`, in manifest order.
pub fn load_corpus(root: &Path) -> Result<Vec<DocumentRecord>, AnnotationError> {
    let pairs = document_pairs(root)?;
    let manifest = read_manifest(&root.join(MANIFEST_FILE))?;
    let listed: BTreeSet<&String> = manifest.iter().map(|m| &m.id).collect();
    if let Some(extra) = pairs.iter().find(|p| !listed.contains(p)) {
        return Err(AnnotationError::ManifestError(format!(
            "`{extra}` has no manifest entry"
        )));
    }
    manifest
        .iter()
        .map(|meta| {
            if !pairs.contains(&meta.id) {
                return Err(AnnotationError::MissingPair(meta.id.clone()));
            }
            let text = read(&root.join(format!("{}.txt", meta.id)))?;
            let ann = read(&root.join(format!("{}.ann", meta.id)))?;
            DocumentRecord::from_parts(meta, text, &ann)
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub docs: usize,
    pub words: usize,
    pub sentences: usize,
    pub events: usize,
    pub relations: usize,
    pub arguments: usize,
}

impl SplitStats {
    fn add(&mut self, d: &DocumentRecord) {
        self.docs += 1;
        self.words += d.word_count;
        self.sentences += d.sentence_count;
        self.events += d.event_count();
        self.relations += d.relation_count;
        self.arguments += d.argument_count;
    }

    fn avg(&self, total: usize) -> f64 {
        if self.docs == 0 {
            0.0
        } else {
            total as f64 / self.docs as f64
        }
    }

    pub fn avg_words(&self) -> f64 {
        self.avg(self.words)
    }

    pub fn avg_sentences(&self) -> f64 {
        self.avg(self.sentences)
    }

    pub fn avg_events(&self) -> f64 {
        self.avg(self.events)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub dev: SplitStats,
    pub test: SplitStats,
    pub all: SplitStats,
}

pub fn corpus_stats(docs: &[DocumentRecord]) -> CorpusStats {
    let mut s = CorpusStats::default();
    for d in docs {
        match d.split {
            Split::Dev => s.dev.add(d),
            Split::Test => s.test.add(d),
        }
        s.all.add(d);
    }
    s
}
