//! Closure-based timeline scores, agreement measures, benchmark metrics and
//! median/IQR aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ClosurePairSet, EventId, GraphError, TimelineGraph};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no documents to score")]
    Empty,
    #[error("predictions ({pred}) and gold ({gold}) differ in length")]
    LengthMismatch { pred: usize, gold: usize },
    #[error("unknown group field `{0}`")]
    UnknownField(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub const PERFECT: Prf = Prf {
        precision: 1.0,
        recall: 1.0,
        f1: 1.0,
    };

    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }

    /// Scores from overlap and set sizes. Both sets empty scores 1; one
    /// empty side scores 0 on its ratio.
    pub fn from_counts(overlap: usize, predicted: usize, gold: usize) -> Self {
        if predicted == 0 && gold == 0 {
            return Prf::PERFECT;
        }
        let ratio = |den: usize| {
            if den == 0 {
                0.0
            } else {
                overlap as f64 / den as f64
            }
        };
        Prf::new(ratio(predicted), ratio(gold))
    }

    /// Unweighted mean of each component.
    pub fn mean(items: &[Prf]) -> Option<Prf> {
        if items.is_empty() {
            return None;
        }
        let n = items.len() as f64;
        Some(Prf {
            precision: items.iter().map(|p| p.precision).sum::<f64>() / n,
            recall: items.iter().map(|p| p.recall).sum::<f64>() / n,
            f1: items.iter().map(|p| p.f1).sum::<f64>() / n,
        })
    }
}

/// Whether COEX pairs take part in the closure intersection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoexMode {
    #[default]
    Include,
    Exclude,
}

impl FromStr for CoexMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "include" => Ok(CoexMode::Include),
            "exclude" => Ok(CoexMode::Exclude),
            other => Err(format!("unknown coex mode `{other}`")),
        }
    }
}

fn overlap<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> usize {
    a.intersection(b).count()
}

/// Precision/recall of one closure against another.
pub fn closure_prf(gold: &ClosurePairSet, pred: &ClosurePairSet, mode: CoexMode) -> Prf {
    let mut hit = overlap(&gold.before_pairs, &pred.before_pairs);
    let mut n_pred = pred.before_pairs.len();
    let mut n_gold = gold.before_pairs.len();
    if mode == CoexMode::Include {
        hit += overlap(&gold.coex_pairs, &pred.coex_pairs);
        n_pred += pred.coex_pairs.len();
        n_gold += gold.coex_pairs.len();
    }
    Prf::from_counts(hit, n_pred, n_gold)
}

/// Temporal awareness of `pred` against `gold`, COEX included.
pub fn temporal_awareness(gold: &TimelineGraph, pred: &TimelineGraph) -> Prf {
    temporal_awareness_with(gold, pred, CoexMode::Include)
}

/// Both graphs are COEX-expanded before their closures are taken; predicted
/// items touching events outside `gold` are dropped.
pub fn temporal_awareness_with(gold: &TimelineGraph, pred: &TimelineGraph, mode: CoexMode) -> Prf {
    let extra: Vec<&EventId> = pred
        .events()
        .iter()
        .map(|e| &e.id)
        .filter(|id| !gold.contains(id))
        .collect();
    if !extra.is_empty() {
        log::warn!(
            "ignoring {} predicted events absent from gold: {:?}",
            extra.len(),
            extra
        );
    }
    let pred_closure = pred.expanded_closure().restrict(|id| gold.contains(id));
    closure_prf(&gold.expanded_closure(), &pred_closure, mode)
}

/// Reference scorer over transitive reductions: precision checks the
/// predicted reduction against the gold closure and recall the reverse.
pub fn temporal_awareness_reduced(
    gold: &TimelineGraph,
    pred: &TimelineGraph,
) -> Result<Prf, GraphError> {
    let items = |g: &TimelineGraph| -> Result<(ClosurePairSet, ClosurePairSet), GraphError> {
        let expanded = g.expand_coex();
        let closure = expanded.transitive_closure();
        let reduced = ClosurePairSet {
            before_pairs: expanded.transitive_reduction()?,
            coex_pairs: closure.coex_pairs.clone(),
        };
        Ok((reduced, closure))
    };
    let (gold_red, gold_cl) = items(gold)?;
    let (pred_red, pred_cl) = items(pred)?;
    let hits = |red: &ClosurePairSet, cl: &ClosurePairSet| {
        overlap(&red.before_pairs, &cl.before_pairs) + overlap(&red.coex_pairs, &cl.coex_pairs)
    };
    let p_hit = hits(&pred_red, &gold_cl);
    let r_hit = hits(&gold_red, &pred_cl);
    let (np, ng) = (pred_red.len(), gold_red.len());
    if np == 0 && ng == 0 {
        return Ok(Prf::PERFECT);
    }
    let ratio = |h: usize, d: usize| if d == 0 { 0.0 } else { h as f64 / d as f64 };
    Ok(Prf::new(ratio(p_hit, np), ratio(r_hit, ng)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocScore {
    pub doc_id: String,
    #[serde(flatten)]
    pub score: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_doc: Vec<DocScore>,
    /// Macro average over documents.
    pub macro_avg: Prf,
    #[serde(default)]
    pub keys: GroupKeys,
}

/// Macro-averaged temporal awareness over `(doc id, gold, pred)` triples.
pub fn corpus_pairwise_f1(
    docs: &[(String, &TimelineGraph, &TimelineGraph)],
    mode: CoexMode,
) -> Result<MetricReport, MetricsError> {
    let per_doc: Vec<DocScore> = docs
        .iter()
        .map(|(id, gold, pred)| DocScore {
            doc_id: id.clone(),
            score: temporal_awareness_with(gold, pred, mode),
        })
        .collect();
    let scores: Vec<Prf> = per_doc.iter().map(|d| d.score).collect();
    let macro_avg = Prf::mean(&scores).ok_or(MetricsError::Empty)?;
    Ok(MetricReport {
        per_doc,
        macro_avg,
        keys: GroupKeys::default(),
    })
}

/// Dice coefficient over event sets after mapping through `coref`
/// (ids absent from the map stand for themselves).
pub fn dice_span_f1<T: Ord + Clone>(
    a: &BTreeSet<T>,
    b: &BTreeSet<T>,
    coref: &BTreeMap<T, T>,
) -> f64 {
    let canon = |s: &BTreeSet<T>| -> BTreeSet<T> {
        s.iter()
            .map(|x| coref.get(x).unwrap_or(x).clone())
            .collect()
    };
    let (a, b) = (canon(a), canon(b));
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    2.0 * overlap(&a, &b) as f64 / (a.len() + b.len()) as f64
}

/// Fraction of predictions equal to gold; abstentions count as wrong.
pub fn accuracy<L: PartialEq>(pred: &[Option<L>], gold: &[L]) -> Result<f64, MetricsError> {
    if pred.len() != gold.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    if gold.is_empty() {
        return Err(MetricsError::Empty);
    }
    let right = pred
        .iter()
        .zip(gold)
        .filter(|(p, g)| p.as_ref() == Some(*g))
        .count();
    Ok(right as f64 / gold.len() as f64)
}

/// Micro-averaged F1. Labels equal to `negative` are excluded from both
/// predicted and gold positives; abstentions are never positives.
pub fn micro_f1<L: PartialEq>(
    pred: &[Option<L>],
    gold: &[L],
    negative: Option<&L>,
) -> Result<Prf, MetricsError> {
    if pred.len() != gold.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    let positive = |l: &L| negative != Some(l);
    let mut tp = 0;
    let mut pred_pos = 0;
    let mut gold_pos = 0;
    for (p, g) in pred.iter().zip(gold) {
        if positive(g) {
            gold_pos += 1;
        }
        if let Some(p) = p {
            if positive(p) {
                pred_pos += 1;
                if p == g {
                    tp += 1;
                }
            }
        }
    }
    let ratio = |d: usize| if d == 0 { 0.0 } else { tp as f64 / d as f64 };
    Ok(Prf::new(ratio(pred_pos), ratio(gold_pos)))
}

/// Mean over instances of the best exact-set match against any annotator.
pub fn exact_match_best<T: Ord>(
    pred: &[BTreeSet<T>],
    gold: &[Vec<BTreeSet<T>>],
) -> Result<f64, MetricsError> {
    if pred.len() != gold.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    if gold.is_empty() {
        return Err(MetricsError::Empty);
    }
    let hits = pred
        .iter()
        .zip(gold)
        .filter(|(p, answers)| answers.iter().any(|a| a == *p))
        .count();
    Ok(hits as f64 / gold.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IaaReport {
    pub dice: f64,
    /// Agreement over both annotators' full graphs.
    pub all_event: Prf,
    /// Agreement restricted to events both annotators marked.
    pub common_event: Prf,
}

/// Agreement between two annotations of one document. `coref_*` map each
/// annotator's event ids to shared canonical ids.
pub fn iaa(
    a: &TimelineGraph,
    b: &TimelineGraph,
    coref_a: &BTreeMap<EventId, EventId>,
    coref_b: &BTreeMap<EventId, EventId>,
    mode: CoexMode,
) -> IaaReport {
    let canon = |m: &BTreeMap<EventId, EventId>, id: &EventId| m.get(id).unwrap_or(id).clone();
    let ga = a.relabel(|id| canon(coref_a, id));
    let gb = b.relabel(|id| canon(coref_b, id));
    let ids = |g: &TimelineGraph| -> BTreeSet<EventId> {
        g.events().iter().map(|e| e.id.clone()).collect()
    };
    let (ea, eb) = (ids(&ga), ids(&gb));
    let dice = dice_span_f1(&ea, &eb, &BTreeMap::new());
    let (ca, cb) = (ga.expanded_closure(), gb.expanded_closure());
    let all_event = closure_prf(&ca, &cb, mode);
    let common: BTreeSet<&EventId> = ea.intersection(&eb).collect();
    let keep = |id: &EventId| common.contains(id);
    let common_event = closure_prf(&ca.restrict(keep), &cb.restrict(keep), mode);
    IaaReport {
        dice,
        all_event,
        common_event,
    }
}

/// Linear-interpolation quantile of sorted data (`q` in [0, 1]).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub min: f64,
    pub max: f64,
    /// Most extreme points within 1.5 IQR of the box.
    pub whisker_low: f64,
    pub whisker_high: f64,
}

impl AggregateStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        let iqr = q3 - q1;
        let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let whisker_low = v.iter().copied().find(|x| *x >= lo_fence).unwrap_or(v[0]);
        let whisker_high = v
            .iter()
            .rev()
            .copied()
            .find(|x| *x <= hi_fence)
            .unwrap_or(v[v.len() - 1]);
        Some(AggregateStats {
            count: v.len(),
            median,
            q1,
            q3,
            iqr,
            min: v[0],
            max: v[v.len() - 1],
            whisker_low,
            whisker_high,
        })
    }
}

/// Grouping dimensions of a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupField {
    Model,
    Formulation,
    TemplateId,
    NDemos,
    Representation,
    Flavor,
    Era,
    WordBin,
    EventBin,
}

impl GroupField {
    pub const ALL: [GroupField; 9] = [
        GroupField::Model,
        GroupField::Formulation,
        GroupField::TemplateId,
        GroupField::NDemos,
        GroupField::Representation,
        GroupField::Flavor,
        GroupField::Era,
        GroupField::WordBin,
        GroupField::EventBin,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            GroupField::Model => "model",
            GroupField::Formulation => "formulation",
            GroupField::TemplateId => "template_id",
            GroupField::NDemos => "n_demos",
            GroupField::Representation => "representation",
            GroupField::Flavor => "flavor",
            GroupField::Era => "era",
            GroupField::WordBin => "word_bin",
            GroupField::EventBin => "event_bin",
        }
    }
}

impl fmt::Display for GroupField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GroupField {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GroupField::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| MetricsError::UnknownField(s.to_string()))
    }
}

/// Values of the grouping dimensions for one score.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupKeys {
    pub model: String,
    pub formulation: String,
    pub template_id: String,
    pub n_demos: usize,
    pub representation: String,
    pub flavor: String,
    pub era: String,
    pub word_bin: String,
    pub event_bin: String,
}

impl GroupKeys {
    pub fn get(&self, field: GroupField) -> String {
        match field {
            GroupField::Model => self.model.clone(),
            GroupField::Formulation => self.formulation.clone(),
            GroupField::TemplateId => self.template_id.clone(),
            GroupField::NDemos => self.n_demos.to_string(),
            GroupField::Representation => self.representation.clone(),
            GroupField::Flavor => self.flavor.clone(),
            GroupField::Era => self.era.clone(),
            GroupField::WordBin => self.word_bin.clone(),
            GroupField::EventBin => self.event_bin.clone(),
        }
    }

    /// Run-level part of the key: one data point per distinct value.
    fn configuration(&self) -> (String, String, String, usize, String, String) {
        (
            self.model.clone(),
            self.formulation.clone(),
            self.template_id.clone(),
            self.n_demos,
            self.representation.clone(),
            self.flavor.clone(),
        )
    }
}

/// One document's score under one run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    #[serde(flatten)]
    pub keys: GroupKeys,
    pub seed: u64,
    pub doc_id: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub group: BTreeMap<String, String>,
    #[serde(flatten)]
    pub stats: AggregateStats,
}

/// Median/IQR of F1 per group. Within a group each run configuration
/// (template, demonstrations and the other run-level keys) contributes one
/// point: the mean F1 over its documents and seeds.
pub fn aggregate(rows: &[ScoreRow], group_by: &[GroupField]) -> Vec<AggregateRow> {
    type Config = (String, String, String, usize, String, String);
    let mut groups: BTreeMap<Vec<String>, BTreeMap<Config, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        let gk: Vec<String> = group_by.iter().map(|f| r.keys.get(*f)).collect();
        groups
            .entry(gk)
            .or_default()
            .entry(r.keys.configuration())
            .or_default()
            .push(r.f1);
    }
    groups
        .into_iter()
        .filter_map(|(gk, configs)| {
            let points: Vec<f64> = configs
                .values()
                .map(|v| v.iter().sum::<f64>() / v.len() as f64)
                .collect();
            let stats = AggregateStats::from_values(&points)?;
            let group = group_by
                .iter()
                .map(|f| f.as_str().to_string())
                .zip(gk)
                .collect();
            Some(AggregateRow { group, stats })
        })
        .collect()
}

const STAT_COLUMNS: [&str; 9] = [
    "count",
    "median",
    "q1",
    "q3",
    "iqr",
    "min",
    "max",
    "whisker_low",
    "whisker_high",
];

/// CSV with the group columns in `group_by` order followed by the statistics.
pub fn write_aggregate_csv<W: Write>(
    rows: &[AggregateRow],
    group_by: &[GroupField],
    out: W,
) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<&str> = group_by
        .iter()
        .map(|f| f.as_str())
        .chain(STAT_COLUMNS)
        .collect();
    w.write_record(&header)?;
    for r in rows {
        let s = &r.stats;
        let mut rec: Vec<String> = group_by
            .iter()
            .map(|f| r.group.get(f.as_str()).cloned().unwrap_or_default())
            .collect();
        rec.push(s.count.to_string());
        for v in [
            s.median,
            s.q1,
            s.q3,
            s.iqr,
            s.min,
            s.max,
            s.whisker_low,
            s.whisker_high,
        ] {
            rec.push(format!("{v:.6}"));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate_json<W: Write>(rows: &[AggregateRow], out: W) -> Result<(), MetricsError> {
    serde_json::to_writer_pretty(out, rows)?;
    Ok(())
}

/// Bin edges; a value `v` falls in the first bin whose upper edge is ≥ `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bins {
    pub edges: Vec<f64>,
}

impl Bins {
    /// Quartile edges of `values`.
    pub fn quartiles(values: &[f64]) -> Self {
        if values.is_empty() {
            return Bins { edges: Vec::new() };
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let mut edges: Vec<f64> = [0.25, 0.5, 0.75].iter().map(|q| quantile(&v, *q)).collect();
        edges.dedup();
        Bins { edges }
    }

    pub fn label(&self, value: f64) -> String {
        let fmt = |x: f64| {
            if x.fract() == 0.0 {
                format!("{x:.0}")
            } else {
                format!("{x:.1}")
            }
        };
        let mut lo: Option<f64> = None;
        for &e in &self.edges {
            if value <= e {
                return match lo {
                    None => format!("<={}", fmt(e)),
                    Some(l) => format!("{}-{}", fmt(l), fmt(e)),
                };
            }
            lo = Some(e);
        }
        match lo {
            None => "all".into(),
            Some(l) => format!(">{}", fmt(l)),
        }
    }
}
