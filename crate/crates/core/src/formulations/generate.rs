use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    derive_seed, Flavor, Formulation, FormulationError, GoldPayload, MarkedEvent, PromptInstance,
    PromptTemplate, QueryPayload,
};
use crate::annotation::{event_ref, render_markers, render_selected, DocumentRecord, MarkerStyle};
use crate::graph::{Event, EventId, RelationLabel, TimelineGraph};

const QUESTION_RELATIONS: [RelationLabel; 3] = [
    RelationLabel::Before,
    RelationLabel::After,
    RelationLabel::Coex,
];
const STATEMENT_RELATIONS: [RelationLabel; 3] = [
    RelationLabel::After,
    RelationLabel::Before,
    RelationLabel::Coex,
];

/// Marked context, event labels and the marked events.
type PairContext = (String, BTreeMap<EventId, usize>, Vec<MarkedEvent>);

struct Base<'a> {
    doc: &'a DocumentRecord,
    template: &'a PromptTemplate,
    repr: MarkerStyle,
    seed: u64,
}

impl Base<'_> {
    fn instance(
        &self,
        key: &str,
        query: QueryPayload,
        gold: GoldPayload,
        marked: Vec<MarkedEvent>,
        slots: BTreeMap<String, String>,
    ) -> PromptInstance {
        let t = self.template;
        PromptInstance {
            instance_id: format!(
                "{}/{}/{}/{}/{}",
                self.doc.id,
                t.formulation,
                t.id,
                self.repr.as_str(),
                key
            ),
            doc_id: self.doc.id.clone(),
            formulation: t.formulation,
            template_id: t.id.clone(),
            flavor: t.meta.flavor,
            representation: self.repr,
            n_demos: 0,
            demo_doc_ids: Vec::new(),
            query,
            prompt: String::new(),
            gold,
            gold_text: String::new(),
            marked,
            seed: self.seed,
            slots,
        }
    }

    fn check(&self, expected: Formulation) -> Result<(), FormulationError> {
        if self.template.formulation != expected {
            return Err(FormulationError::FormulationMismatch {
                template: self.template.id.clone(),
                template_formulation: self.template.formulation,
                instance_formulation: expected,
            });
        }
        Ok(())
    }

    fn require(&self, min: usize) -> Result<(), FormulationError> {
        let n = self.doc.graph.len();
        if n < min {
            return Err(FormulationError::TooFewEvents {
                doc: self.doc.id.clone(),
                n,
                min,
            });
        }
        Ok(())
    }

    /// Context with only `x` and `y` marked, numbered by textual order.
    fn pair_context(&self, x: &Event, y: &Event) -> Result<PairContext, FormulationError> {
        let (context, labels) = render_selected(
            &self.doc.text,
            &self.doc.graph,
            &[x.id.clone(), y.id.clone()],
            self.repr,
        )?;
        let mut marked: Vec<MarkedEvent> = [x, y]
            .iter()
            .map(|e| MarkedEvent {
                label: labels[&e.id],
                id: e.id.clone(),
                mention: e.mention.clone(),
            })
            .collect();
        marked.sort_by_key(|m| m.label);
        Ok((context, labels, marked))
    }

    fn doc_marked(&self) -> Vec<MarkedEvent> {
        self.doc
            .graph
            .events()
            .iter()
            .map(|e| MarkedEvent {
                label: e.index,
                id: e.id.clone(),
                mention: e.mention.clone(),
            })
            .collect()
    }

    fn common_slots(&self, context: String) -> BTreeMap<String, String> {
        let mut slots = BTreeMap::new();
        slots.insert("premise".into(), context.clone());
        slots.insert("context".into(), context);
        slots.insert("marker".into(), self.repr.hint().into());
        slots
    }
}

fn r(doc: &DocumentRecord, id: &EventId, label: usize, repr: MarkerStyle) -> String {
    let e = doc.graph.event(id).expect("event of this document");
    event_ref(e, label, repr)
}

fn sorted_by_index(graph: &TimelineGraph, ids: impl IntoIterator<Item = EventId>) -> Vec<EventId> {
    let mut v: Vec<&Event> = ids.into_iter().filter_map(|id| graph.event(&id)).collect();
    v.sort_by_key(|e| e.index);
    v.into_iter().map(|e| e.id.clone()).collect()
}

/// NLI: every ordered pair with each of the three statement relations.
pub fn generate_nli(
    doc: &DocumentRecord,
    template: &PromptTemplate,
    repr: MarkerStyle,
    seed: u64,
) -> Result<Vec<PromptInstance>, FormulationError> {
    let base = Base {
        doc,
        template,
        repr,
        seed,
    };
    base.check(Formulation::Nli)?;
    base.require(2)?;
    let expanded = doc.graph.expand_coex();
    let closure = expanded.transitive_closure();
    let cluster_of: BTreeMap<EventId, usize> = expanded
        .coex_clusters()
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.members.iter().map(move |m| (m.clone(), i)))
        .collect();
    let same_cluster = |a: &EventId, b: &EventId| matches!((cluster_of.get(a), cluster_of.get(b)), (Some(p), Some(q)) if p == q);

    let events = doc.graph.events();
    let mut out = Vec::with_capacity(Formulation::Nli.instance_count(events.len()));
    for x in events {
        for y in events {
            if x.id == y.id {
                continue;
            }
            let (context, labels, marked) = base.pair_context(x, y)?;
            let (rx, ry) = (
                event_ref(x, labels[&x.id], repr),
                event_ref(y, labels[&y.id], repr),
            );
            for relation in STATEMENT_RELATIONS {
                let entails = match relation {
                    RelationLabel::After => {
                        closure.before_pairs.contains(&(x.id.clone(), y.id.clone()))
                    }
                    RelationLabel::Before => {
                        closure.before_pairs.contains(&(y.id.clone(), x.id.clone()))
                    }
                    _ => same_cluster(&x.id, &y.id),
                };
                let hypothesis = template.meta.hypothesis[&relation]
                    .replace("{x}", &rx)
                    .replace("{y}", &ry);
                let mut slots = base.common_slots(context.clone());
                slots.insert("hypothesis".into(), hypothesis);
                let answers = &template.meta.answers;
                let target = if entails { &answers.yes } else { &answers.no };
                slots.insert("target".into(), target.clone());
                out.push(base.instance(
                    &format!("{}>{}:{}", x.id, y.id, relation),
                    QueryPayload::Statement {
                        x: x.id.clone(),
                        y: y.id.clone(),
                        relation,
                    },
                    GoldPayload::Binary(entails),
                    marked.clone(),
                    slots,
                ));
            }
        }
    }
    Ok(out)
}

/// Pairwise: one instance per ordered pair.
pub fn generate_pairwise(
    doc: &DocumentRecord,
    template: &PromptTemplate,
    repr: MarkerStyle,
    seed: u64,
) -> Result<Vec<PromptInstance>, FormulationError> {
    let base = Base {
        doc,
        template,
        repr,
        seed,
    };
    base.check(Formulation::Pairwise)?;
    base.require(2)?;
    let reach = doc.graph.expand_coex().reachability();
    let choices: String = RelationLabel::ALL
        .iter()
        .filter_map(|l| {
            template
                .meta
                .choices
                .get(l)
                .map(|d| format!("{}: {d}", template.surface(*l)))
        })
        .collect::<Vec<_>>()
        .join("\n");

    let events = doc.graph.events();
    let mut out = Vec::with_capacity(Formulation::Pairwise.instance_count(events.len()));
    for x in events {
        for y in events {
            if x.id == y.id {
                continue;
            }
            let (context, labels, marked) = base.pair_context(x, y)?;
            let gold = reach.relation(&x.id, &y.id)?;
            let mut slots = base.common_slots(context);
            slots.insert("arg1".into(), event_ref(x, labels[&x.id], repr));
            slots.insert("arg2".into(), event_ref(y, labels[&y.id], repr));
            slots.insert("choices".into(), choices.clone());
            slots.insert("target".into(), template.surface(gold).to_string());
            out.push(base.instance(
                &format!("{},{}", x.id, y.id),
                QueryPayload::Pair {
                    x: x.id.clone(),
                    y: y.id.clone(),
                },
                GoldPayload::Relation(gold),
                marked,
                slots,
            ));
        }
    }
    Ok(out)
}

fn event_list(doc: &DocumentRecord, repr: MarkerStyle, flavor: Flavor) -> String {
    doc.graph
        .events()
        .iter()
        .map(|e| {
            let rf = event_ref(e, e.index, repr);
            match flavor {
                Flavor::Code => format!("        self.event{i} = events[{i}] # {rf}", i = e.index),
                _ => format!("- {rf}"),
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Answer text for an MRC event set.
pub(crate) fn mrc_answer(
    doc: &DocumentRecord,
    template: &PromptTemplate,
    repr: MarkerStyle,
    answer: &[EventId],
) -> String {
    if answer.is_empty() {
        return template
            .meta
            .empty_answer
            .clone()
            .unwrap_or_else(|| "None".into());
    }
    let refs: Vec<String> = answer
        .iter()
        .map(|id| r(doc, id, doc.graph.event(id).map_or(0, |e| e.index), repr))
        .collect();
    match &template.meta.answer_prefix {
        Some(prefix) => refs
            .iter()
            .map(|s| format!("{prefix}{s}"))
            .collect::<Vec<_>>()
            .join("\n"),
        None => refs.join(", "),
    }
}

/// MRC: one question per event and relation.
pub fn generate_mrc(
    doc: &DocumentRecord,
    template: &PromptTemplate,
    repr: MarkerStyle,
    seed: u64,
) -> Result<Vec<PromptInstance>, FormulationError> {
    let base = Base {
        doc,
        template,
        repr,
        seed,
    };
    base.check(Formulation::Mrc)?;
    let closure = doc.graph.expanded_closure();
    let context = render_markers(&doc.text, &doc.graph, repr)?;
    let events_slot = event_list(doc, repr, template.meta.flavor);
    let cot = generate_cot_rationale(doc, repr);
    let marked = base.doc_marked();

    let events = doc.graph.events();
    let mut out = Vec::with_capacity(Formulation::Mrc.instance_count(events.len()));
    for anchor in events {
        for relation in QUESTION_RELATIONS {
            let members = events.iter().map(|e| &e.id).filter(|y| {
                let (a, y) = ((*y).clone(), anchor.id.clone());
                match relation {
                    RelationLabel::Before => closure.before_pairs.contains(&(a, y)),
                    RelationLabel::After => closure.before_pairs.contains(&(y, a)),
                    _ => closure
                        .coex_pairs
                        .contains(&crate::graph::UnorderedPair::new(a, y)),
                }
            });
            let answer = sorted_by_index(&doc.graph, members.cloned());
            let question = template.meta.questions[&relation]
                .replace("{event}", &event_ref(anchor, anchor.index, repr));
            let mut slots = base.common_slots(context.clone());
            slots.insert("question".into(), question);
            slots.insert("events".into(), events_slot.clone());
            slots.insert("cot".into(), cot.clone());
            slots.insert("target".into(), mrc_answer(doc, template, repr, &answer));
            out.push(base.instance(
                &format!("{}:{}", anchor.id, relation),
                QueryPayload::Anchor {
                    event: anchor.id.clone(),
                    relation,
                },
                GoldPayload::Events(answer),
                marked.clone(),
                slots,
            ));
        }
    }
    Ok(out)
}

/// Serialized timeline in the template's answer format.
pub(crate) fn timeline_answer(
    doc: &DocumentRecord,
    layers: &[Vec<EventId>],
    repr: MarkerStyle,
    flavor: Flavor,
) -> String {
    let index = |id: &EventId| doc.graph.event(id).map_or(0, |e| e.index);
    let mut lines = Vec::new();
    for (i, layer) in layers.iter().enumerate() {
        match flavor {
            Flavor::Code => {
                let members: Vec<String> = layer
                    .iter()
                    .map(|id| format!("self.event{}", index(id)))
                    .collect();
                lines.push(format!("        T{} = [{}]", i + 1, members.join(", ")));
            }
            _ => {
                lines.push(format!("T{}:", i + 1));
                for id in layer {
                    lines.push(format!("- {}", r(doc, id, index(id), repr)));
                }
            }
        }
    }
    lines.join("\n")
}

/// Timeline: one instance per document.
pub fn generate_timeline(
    doc: &DocumentRecord,
    template: &PromptTemplate,
    repr: MarkerStyle,
    seed: u64,
) -> Result<PromptInstance, FormulationError> {
    let base = Base {
        doc,
        template,
        repr,
        seed,
    };
    base.check(Formulation::Timeline)?;
    let layers = doc.graph.layering()?;
    let context = render_markers(&doc.text, &doc.graph, repr)?;
    let mut slots = base.common_slots(context);
    slots.insert("events".into(), event_list(doc, repr, template.meta.flavor));
    slots.insert("cot".into(), generate_cot_rationale(doc, repr));
    slots.insert(
        "target".into(),
        timeline_answer(doc, &layers, repr, template.meta.flavor),
    );
    Ok(base.instance(
        "doc",
        QueryPayload::Document,
        GoldPayload::Layers(layers),
        base.doc_marked(),
        slots,
    ))
}

/// Instances of any formulation.
pub fn generate_for(
    doc: &DocumentRecord,
    template: &PromptTemplate,
    repr: MarkerStyle,
    seed: u64,
) -> Result<Vec<PromptInstance>, FormulationError> {
    match template.formulation {
        Formulation::Nli => generate_nli(doc, template, repr, seed),
        Formulation::Pairwise => generate_pairwise(doc, template, repr, seed),
        Formulation::Mrc => generate_mrc(doc, template, repr, seed),
        Formulation::Timeline => generate_timeline(doc, template, repr, seed).map(|i| vec![i]),
    }
}

/// One sentence per direct edge or COEX link of the gold graph.
pub fn generate_cot_rationale(doc: &DocumentRecord, repr: MarkerStyle) -> String {
    let g = &doc.graph;
    let ev = |id: &EventId| g.event(id).expect("event of this document");
    let rf = |e: &Event| event_ref(e, e.index, repr);
    let mut sentences: Vec<((usize, usize), String)> = Vec::new();
    for (before, after) in g.edges() {
        let (b, a) = (ev(before), ev(after));
        let key = (b.index.min(a.index), b.index.max(a.index));
        sentences.push((key, format!("{} started after {}.", rf(a), rf(b))));
    }
    for pair in g.coex_links() {
        let (mut p, mut q) = (ev(&pair.0), ev(&pair.1));
        if q.index < p.index {
            std::mem::swap(&mut p, &mut q);
        }
        sentences.push((
            (p.index, q.index),
            format!(
                "{} started around the same time, but the temporal relationship with {} is not clear.",
                rf(p),
                rf(q)
            ),
        ));
    }
    sentences.sort();
    sentences
        .into_iter()
        .map(|(_, s)| s)
        .collect::<Vec<_>>()
        .join("\n")
}

/// Uniform sample of `n_demos` development documents other than `query_doc`.
pub fn select_demonstrations(
    dev_ids: &[String],
    query_doc: &str,
    n_demos: usize,
    seed: u64,
) -> Result<Vec<String>, FormulationError> {
    if n_demos == 0 {
        return Ok(Vec::new());
    }
    let pool: Vec<&String> = dev_ids
        .iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|id| id.as_str() != query_doc)
        .collect();
    if pool.len() < n_demos {
        return Err(FormulationError::InsufficientDevDocs {
            needed: n_demos,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[query_doc, &n_demos.to_string()]));
    Ok(pool
        .choose_multiple(&mut rng, n_demos)
        .map(|s| s.to_string())
        .collect())
}
