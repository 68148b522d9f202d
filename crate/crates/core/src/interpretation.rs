//! Completion parsing and predicted-graph assembly.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Mutex, OnceLock};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{strip_markers, MarkerStyle};
use crate::formulations::{
    derive_seed, Formulation, MarkedEvent, PromptInstance, PromptTemplate, QueryPayload,
};
use crate::graph::{EventId, GraphError, RelationLabel, TimelineGraph};

#[derive(Debug, Error)]
pub enum InterpretationError {
    #[error("records mix formulations {0} and {1}")]
    MixedFormulations(Formulation, Formulation),
    #[error("record {instance} belongs to document {found}, expected {expected}")]
    WrongDocument {
        instance: String,
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliAnswer {
    Entail,
    NotEntail,
    Abstain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseStatus {
    Ok,
    Abstain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ParsedPayload {
    Binary(bool),
    Relation(RelationLabel),
    Events(Vec<EventId>),
    Layers(Vec<Vec<EventId>>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub instance_id: String,
    pub doc_id: String,
    pub formulation: Formulation,
    pub query: QueryPayload,
    pub raw: String,
    pub status: ParseStatus,
    pub payload: Option<ParsedPayload>,
    /// Timeline only: events the completion never placed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unplaced: Vec<EventId>,
}

fn word_regex(word: &str) -> Option<Regex> {
    static CACHE: OnceLock<Mutex<HashMap<String, Regex>>> = OnceLock::new();
    let mut cache = CACHE
        .get_or_init(Default::default)
        .lock()
        .expect("regex cache");
    if let Some(re) = cache.get(word) {
        return Some(re.clone());
    }
    let re = Regex::new(&format!(r"(?i)(?:^|\W)({})(?:\W|$)", regex::escape(word))).ok()?;
    cache.insert(word.to_string(), re.clone());
    Some(re)
}

/// Earliest case-insensitive, word-bounded occurrence of any vocabulary
/// word; ties go to the longer word.
pub(crate) fn first_match<T: Copy>(text: &str, vocab: &[(String, T)]) -> Option<T> {
    let mut best: Option<(usize, usize, T)> = None;
    for (word, value) in vocab {
        if word.trim().is_empty() {
            continue;
        }
        let word = word.trim();
        let Some(re) = word_regex(word) else { continue };
        if let Some(m) = re.captures(text).and_then(|c| c.get(1)) {
            let (start, len) = (m.start(), word.len());
            let better = match best {
                None => true,
                Some((s, l, _)) => start < s || (start == s && len > l),
            };
            if better {
                best = Some((start, len, *value));
            }
        }
    }
    best.map(|(_, _, v)| v)
}

pub fn parse_nli(completion: &str, template: &PromptTemplate) -> NliAnswer {
    match first_match(completion, &template.nli_vocabulary()) {
        Some(true) => NliAnswer::Entail,
        Some(false) => NliAnswer::NotEntail,
        None => NliAnswer::Abstain,
    }
}

/// Canonical label of the first answer word, or `None` to abstain.
pub fn parse_pairwise(completion: &str, template: &PromptTemplate) -> Option<RelationLabel> {
    first_match(completion, &template.label_vocabulary())
}

fn eid_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[e(\d+)\]|self\.event(\d+)\b").unwrap())
}

fn answer_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^\s*answer\s*:").unwrap())
}

fn layer_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:[-*]\s*)?\**T(\d+)\**\s*[:=]\s*(.*)$").unwrap())
}

/// Maps marker labels and surface mentions back to event ids.
struct Resolver<'a> {
    marked: &'a [MarkedEvent],
}

impl Resolver<'_> {
    fn by_label(&self, label: usize) -> Option<&EventId> {
        self.marked.iter().find(|m| m.label == label).map(|m| &m.id)
    }

    fn by_surface(&self, item: &str) -> Option<&EventId> {
        let mut s = item.to_string();
        for style in [MarkerStyle::Eid, MarkerStyle::Star, MarkerStyle::Structured] {
            s = strip_markers(&s, style);
        }
        let s = s
            .trim()
            .trim_start_matches(['-', '*', '•'])
            .trim()
            .trim_matches(|c: char| c == '"' || c == '\'' || c == '`')
            .trim_end_matches(['.', ';'])
            .trim()
            .to_lowercase();
        if s.is_empty() {
            return None;
        }
        let mut hits = self.marked.iter().filter(|m| m.mention.to_lowercase() == s);
        let first = hits.next()?;
        if hits.next().is_some() {
            log::warn!("mention `{s}` is ambiguous; using its first occurrence");
        }
        Some(&first.id)
    }

    /// Ids named in `text`: marker labels when present, otherwise surface
    /// matches over comma or newline separated items.
    fn resolve(&self, text: &str) -> Vec<EventId> {
        let mut out: Vec<EventId> = Vec::new();
        let mut push = |id: &EventId| {
            if !out.contains(id) {
                out.push(id.clone());
            }
        };
        let mut any_label = false;
        for cap in eid_regex().captures_iter(text) {
            any_label = true;
            let n = cap.get(1).or(cap.get(2)).expect("one group matches");
            match n.as_str().parse().ok().and_then(|l| self.by_label(l)) {
                Some(id) => push(id),
                None => log::debug!("dropping unknown event label {}", n.as_str()),
            }
        }
        if !any_label {
            for item in text.split([',', '\n']) {
                if let Some(id) = self.by_surface(item) {
                    push(id);
                }
            }
        }
        out
    }
}

/// Events named in an MRC completion, in first-mention order.
pub fn parse_mrc(completion: &str, marked: &[MarkedEvent]) -> Vec<EventId> {
    let text = match answer_regex().find_iter(completion).last() {
        Some(m) => &completion[m.end()..],
        None => completion,
    };
    Resolver { marked }.resolve(text)
}

/// Timeline parse: layers in ascending span number plus unplaced events.
/// `None` when no `T<k>:` line is present.
pub fn parse_timeline(
    completion: &str,
    marked: &[MarkedEvent],
) -> Option<(Vec<Vec<EventId>>, Vec<EventId>)> {
    let resolver = Resolver { marked };
    let mut spans: BTreeMap<usize, Vec<EventId>> = BTreeMap::new();
    let mut current: Option<usize> = None;
    let mut placed: BTreeSet<EventId> = BTreeSet::new();
    let mut place = |k: usize, ids: Vec<EventId>, spans: &mut BTreeMap<usize, Vec<EventId>>| {
        for id in ids {
            if placed.insert(id.clone()) {
                spans.entry(k).or_default().push(id);
            } else {
                log::debug!("event {id} placed twice; keeping the first placement");
            }
        }
    };
    for line in completion.lines() {
        if let Some(cap) = layer_regex().captures(line) {
            let k: usize = cap[1].parse().unwrap_or(usize::MAX);
            spans.entry(k).or_default();
            current = Some(k);
            let rest = cap[2].trim().trim_start_matches('[').trim_end_matches(']');
            if !rest.is_empty() {
                place(k, resolver.resolve(rest), &mut spans);
            }
        } else if let Some(k) = current {
            if !line.trim().is_empty() {
                place(k, resolver.resolve(line), &mut spans);
            }
        }
    }
    if spans.is_empty() {
        return None;
    }
    let layers: Vec<Vec<EventId>> = spans.into_values().filter(|l| !l.is_empty()).collect();
    let placed: BTreeSet<&EventId> = layers.iter().flatten().collect();
    let unplaced = marked
        .iter()
        .map(|m| &m.id)
        .filter(|id| !placed.contains(id))
        .cloned()
        .collect();
    Some((layers, unplaced))
}

/// Parses a completion for `instance` under `template`.
pub fn interpret(
    instance: &PromptInstance,
    template: &PromptTemplate,
    completion: &str,
) -> PredictionRecord {
    let mut unplaced = Vec::new();
    let payload = match instance.formulation {
        Formulation::Nli => match parse_nli(completion, template) {
            NliAnswer::Entail => Some(ParsedPayload::Binary(true)),
            NliAnswer::NotEntail => Some(ParsedPayload::Binary(false)),
            NliAnswer::Abstain => None,
        },
        Formulation::Pairwise => parse_pairwise(completion, template).map(ParsedPayload::Relation),
        // an MRC answer may legitimately be empty
        Formulation::Mrc => Some(ParsedPayload::Events(parse_mrc(
            completion,
            &instance.marked,
        ))),
        Formulation::Timeline => {
            parse_timeline(completion, &instance.marked).map(|(layers, rest)| {
                unplaced = rest;
                ParsedPayload::Layers(layers)
            })
        }
    };
    PredictionRecord {
        instance_id: instance.instance_id.clone(),
        doc_id: instance.doc_id.clone(),
        formulation: instance.formulation,
        query: instance.query.clone(),
        raw: completion.to_string(),
        status: if payload.is_some() {
            ParseStatus::Ok
        } else {
            ParseStatus::Abstain
        },
        payload,
        unplaced,
    }
}

/// Votes per event pair, keyed with the lower textual index first.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairVoteTable {
    votes: BTreeMap<(EventId, EventId), Vec<RelationLabel>>,
}

impl PairVoteTable {
    /// Records that `x` stands in `label` to `y`.
    pub fn add(&mut self, graph: &TimelineGraph, x: &EventId, y: &EventId, label: RelationLabel) {
        if label == RelationLabel::None || x == y {
            return;
        }
        let (Some(ex), Some(ey)) = (graph.event(x), graph.event(y)) else {
            log::warn!("vote on unknown events {x}, {y} ignored");
            return;
        };
        let (key, label) = if ex.index <= ey.index {
            ((x.clone(), y.clone()), label)
        } else {
            ((y.clone(), x.clone()), label.inverse())
        };
        self.votes.entry(key).or_default().push(label);
    }

    pub fn votes(&self, a: &EventId, b: &EventId) -> Option<&[RelationLabel]> {
        self.votes.get(&(a.clone(), b.clone())).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.votes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.votes.is_empty()
    }

    /// Majority label per pair; ties resolved by a per-pair seeded draw.
    pub fn decide(&self, seed: u64, doc_id: &str) -> Vec<((EventId, EventId), RelationLabel)> {
        self.votes
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|((a, b), votes)| {
                let mut counts: BTreeMap<RelationLabel, usize> = BTreeMap::new();
                for l in votes {
                    *counts.entry(*l).or_default() += 1;
                }
                let top = *counts.values().max().expect("non-empty");
                let tied: Vec<RelationLabel> = counts
                    .into_iter()
                    .filter(|(_, c)| *c == top)
                    .map(|(l, _)| l)
                    .collect();
                let label = if tied.len() == 1 {
                    tied[0]
                } else {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                        seed,
                        &[doc_id, a.as_str(), b.as_str()],
                    ));
                    *tied.choose(&mut rng).expect("non-empty")
                };
                ((a.clone(), b.clone()), label)
            })
            .collect()
    }
}

/// Predicted graph over the events of `gold` from one document's records.
pub fn assemble_graph(
    gold: &TimelineGraph,
    doc_id: &str,
    records: &[PredictionRecord],
    seed: u64,
) -> Result<TimelineGraph, InterpretationError> {
    let mut graph = gold.empty_like();
    let Some(first) = records.first() else {
        return Ok(graph);
    };
    for r in records {
        if r.formulation != first.formulation {
            return Err(InterpretationError::MixedFormulations(
                first.formulation,
                r.formulation,
            ));
        }
        if r.doc_id != doc_id {
            return Err(InterpretationError::WrongDocument {
                instance: r.instance_id.clone(),
                expected: doc_id.to_string(),
                found: r.doc_id.clone(),
            });
        }
    }

    if first.formulation == Formulation::Timeline {
        for r in records {
            if let Some(ParsedPayload::Layers(layers)) = &r.payload {
                add_layers(&mut graph, layers)?;
            }
        }
        return Ok(graph);
    }

    let mut table = PairVoteTable::default();
    for r in records {
        match (&r.query, &r.payload) {
            (QueryPayload::Statement { x, y, relation }, Some(ParsedPayload::Binary(true))) => {
                // "y <relation> x" read as a relation of x to y
                table.add(gold, x, y, relation.inverse());
            }
            (QueryPayload::Pair { x, y }, Some(ParsedPayload::Relation(l))) => {
                table.add(gold, x, y, *l)
            }
            (QueryPayload::Anchor { event, relation }, Some(ParsedPayload::Events(ids))) => {
                for y in ids {
                    table.add(gold, y, event, *relation);
                }
            }
            _ => {}
        }
    }
    for ((a, b), label) in table.decide(seed, doc_id) {
        match label {
            RelationLabel::Before => graph.add_edge(a, b)?,
            RelationLabel::After => graph.add_edge(b, a)?,
            RelationLabel::Coex => graph.add_coex(a, b)?,
            RelationLabel::None => {}
        }
    }
    Ok(graph)
}

fn add_layers(graph: &mut TimelineGraph, layers: &[Vec<EventId>]) -> Result<(), GraphError> {
    let known = |id: &EventId| graph.contains(id);
    let layers: Vec<Vec<EventId>> = layers
        .iter()
        .map(|l| l.iter().filter(|id| known(id)).cloned().collect::<Vec<_>>())
        .filter(|l: &Vec<EventId>| !l.is_empty())
        .collect();
    for pair in layers.windows(2) {
        for a in &pair[0] {
            for b in &pair[1] {
                graph.add_edge(a.clone(), b.clone())?;
            }
        }
    }
    for layer in &layers {
        for (i, a) in layer.iter().enumerate() {
            for b in &layer[i + 1..] {
                graph.add_coex(a.clone(), b.clone())?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formulations::TemplateSet;

    fn marked(names: &[&str]) -> Vec<MarkedEvent> {
        names
            .iter()
            .enumerate()
            .map(|(i, n)| MarkedEvent {
                label: i + 1,
                id: EventId::new(format!("T{}", i + 1)),
                mention: n.to_string(),
            })
            .collect()
    }

    fn ids(v: &[&str]) -> Vec<EventId> {
        v.iter().map(|s| EventId::new(*s)).collect()
    }

    #[test]
    fn nli_vocabulary() {
        let set = TemplateSet::builtin();
        let t2 = set.get(Formulation::Nli, "02").unwrap();
        let t1 = set.get(Formulation::Nli, "01").unwrap();
        assert_eq!(parse_nli("Yes", t2), NliAnswer::Entail);
        assert_eq!(parse_nli("no, it is not", t2), NliAnswer::NotEntail);
        assert_eq!(parse_nli("Entailment.", t1), NliAnswer::Entail);
        assert_eq!(parse_nli("not entailment", t1), NliAnswer::NotEntail);
        assert_eq!(parse_nli("Not_entailment", t1), NliAnswer::NotEntail);
        assert_eq!(parse_nli("maybe?", t2), NliAnswer::Abstain);
        // "no" inside another word is not an answer
        assert_eq!(parse_nli("nothing", t2), NliAnswer::Abstain);
    }

    #[test]
    fn pairwise_vocabulary() {
        let t = TemplateSet::builtin()
            .get(Formulation::Pairwise, "01")
            .unwrap()
            .clone();
        assert_eq!(
            parse_pairwise("Answer: AFTER", &t),
            Some(RelationLabel::After)
        );
        assert_eq!(parse_pairwise("VAGUE", &t), Some(RelationLabel::Coex));
        assert_eq!(parse_pairwise("none", &t), Some(RelationLabel::None));
        assert_eq!(
            parse_pairwise("before, not after", &t),
            Some(RelationLabel::Before)
        );
        assert_eq!(parse_pairwise("", &t), None);
    }

    #[test]
    fn mrc_ids_and_surfaces() {
        let m = marked(&["identified", "death", "diagnosed", "investigating"]);
        assert_eq!(
            parse_mrc("[e2]death[/e2], [e3]diagnosed[/e3]", &m),
            ids(&["T2", "T3"])
        );
        assert_eq!(parse_mrc("death, diagnosed.", &m), ids(&["T2", "T3"]));
        assert_eq!(parse_mrc("nothing happened", &m), Vec::<EventId>::new());
        assert_eq!(
            parse_mrc("[e9]x[/e9], [e2]death[/e2], [e2]death[/e2]", &m),
            ids(&["T2"])
        );
        let cot =
            "[e2]death[/e2] started after [e3]diagnosed[/e3].\nAnswer:\n- [e4]investigating[/e4]";
        assert_eq!(parse_mrc(cot, &m), ids(&["T4"]));
        let star = "**death**, **diagnosed**";
        assert_eq!(parse_mrc(star, &m), ids(&["T2", "T3"]));
    }

    #[test]
    fn timeline_grammar() {
        let m = marked(&["went", "bought", "visited"]);
        let (layers, unplaced) =
            parse_timeline("T1: visited \n T2: went \n T3: bought", &m).unwrap();
        assert_eq!(layers, vec![ids(&["T3"]), ids(&["T1"]), ids(&["T2"])]);
        assert!(unplaced.is_empty());

        let code = "        T2 = [self.event2]\n        T1 = [self.event3, self.event1]";
        let (layers, _) = parse_timeline(code, &m).unwrap();
        assert_eq!(layers, vec![ids(&["T3", "T1"]), ids(&["T2"])]);

        let (layers, unplaced) = parse_timeline("T1:\n- [e1]went[/e1]\nT2:\n", &m).unwrap();
        assert_eq!(layers, vec![ids(&["T1"])]);
        assert_eq!(unplaced, ids(&["T2", "T3"]));

        assert!(parse_timeline("garbage text", &m).is_none());
    }

    fn record(
        formulation: Formulation,
        query: QueryPayload,
        payload: ParsedPayload,
    ) -> PredictionRecord {
        PredictionRecord {
            instance_id: "i".into(),
            doc_id: "d".into(),
            formulation,
            query,
            raw: String::new(),
            status: ParseStatus::Ok,
            payload: Some(payload),
            unplaced: Vec::new(),
        }
    }

    #[test]
    fn majority_and_ties() {
        let g = TimelineGraph::with_ids(&["a", "b"]);
        let (a, b) = (EventId::new("a"), EventId::new("b"));
        let pair = |l| {
            record(
                Formulation::Pairwise,
                QueryPayload::Pair {
                    x: a.clone(),
                    y: b.clone(),
                },
                ParsedPayload::Relation(l),
            )
        };
        let recs = vec![
            pair(RelationLabel::Before),
            pair(RelationLabel::Before),
            pair(RelationLabel::Coex),
        ];
        let out = assemble_graph(&g, "d", &recs, 1).unwrap();
        assert!(out.edges().contains(&(a.clone(), b.clone())));
        assert!(out.coex_links().is_empty());

        let tie = vec![pair(RelationLabel::Before), pair(RelationLabel::After)];
        let first = assemble_graph(&g, "d", &tie, 5).unwrap();
        for _ in 0..5 {
            assert_eq!(assemble_graph(&g, "d", &tie, 5).unwrap(), first);
        }
        // across seeds both outcomes occur
        let outcomes: BTreeSet<_> = (0..32)
            .map(|s| assemble_graph(&g, "d", &tie, s).unwrap().edges().clone())
            .collect();
        assert_eq!(outcomes.len(), 2);
    }

    #[test]
    fn layers_become_edges_and_coex() {
        let g = TimelineGraph::with_ids(&["a", "b", "c"]);
        let rec = record(
            Formulation::Timeline,
            QueryPayload::Document,
            ParsedPayload::Layers(vec![ids(&["a"]), ids(&["b", "c"])]),
        );
        let out = assemble_graph(&g, "d", &[rec], 0).unwrap();
        let edges: Vec<_> = out.edges().iter().cloned().collect();
        assert_eq!(
            edges,
            vec![
                (EventId::new("a"), EventId::new("b")),
                (EventId::new("a"), EventId::new("c"))
            ]
        );
        assert_eq!(out.coex_links().len(), 1);
    }

    #[test]
    fn mixed_formulations_rejected() {
        let g = TimelineGraph::with_ids(&["a", "b"]);
        let r1 = record(
            Formulation::Timeline,
            QueryPayload::Document,
            ParsedPayload::Layers(vec![]),
        );
        let r2 = record(
            Formulation::Mrc,
            QueryPayload::Document,
            ParsedPayload::Events(vec![]),
        );
        assert!(matches!(
            assemble_graph(&g, "d", &[r1, r2], 0),
            Err(InterpretationError::MixedFormulations(..))
        ));
    }

    #[test]
    fn nli_not_entail_casts_no_vote() {
        let g = TimelineGraph::with_ids(&["a", "b"]);
        let q = QueryPayload::Statement {
            x: EventId::new("a"),
            y: EventId::new("b"),
            relation: RelationLabel::After,
        };
        let no = record(Formulation::Nli, q.clone(), ParsedPayload::Binary(false));
        assert!(assemble_graph(&g, "d", &[no], 0)
            .unwrap()
            .edges()
            .is_empty());
        let yes = record(Formulation::Nli, q, ParsedPayload::Binary(true));
        let out = assemble_graph(&g, "d", &[yes], 0).unwrap();
        assert!(out
            .edges()
            .contains(&(EventId::new("a"), EventId::new("b"))));
    }
}
