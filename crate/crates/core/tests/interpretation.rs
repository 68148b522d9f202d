mod common;

use timeline_eval::annotation::MarkerStyle;
use timeline_eval::formulations::{
    approx_tokens, build_instances, Flavor, Formulation, GenerationConfig, TemplateSet,
};
use timeline_eval::interpretation::*;

fn oracle_graph(
    doc: &timeline_eval::annotation::DocumentRecord,
    formulation: Formulation,
    template_id: &str,
    repr: MarkerStyle,
) -> timeline_eval::graph::TimelineGraph {
    let set = TemplateSet::builtin();
    let t = set.get(formulation, template_id).unwrap();
    let config = GenerationConfig {
        representation: repr,
        ..GenerationConfig::default()
    };
    let records: Vec<PredictionRecord> = build_instances(doc, &[], t, &config, approx_tokens)
        .unwrap()
        .into_iter()
        .map(|i| {
            let i = i.unwrap();
            interpret(&i, t, &i.gold_text)
        })
        .collect();
    assert!(records.iter().all(|r| r.status == ParseStatus::Ok));
    assemble_graph(&doc.graph, &doc.id, &records, 0).unwrap()
}

#[test]
fn oracle_round_trip_reproduces_gold_closure() {
    let set = TemplateSet::builtin();
    for doc in common::corpus() {
        let gold = doc.graph.expanded_closure();
        for f in [Formulation::Nli, Formulation::Pairwise, Formulation::Mrc] {
            for t in set
                .select(f, Flavor::Plain)
                .into_iter()
                .chain(set.select(f, Flavor::Cot))
            {
                let reprs: &[MarkerStyle] = if t.id == "01" {
                    &[MarkerStyle::Eid, MarkerStyle::Star, MarkerStyle::Structured]
                } else {
                    &[MarkerStyle::Eid]
                };
                for &repr in reprs {
                    let pred = oracle_graph(&doc, f, &t.id, repr);
                    assert_eq!(
                        pred.expanded_closure(),
                        gold,
                        "{} {f} {} {repr:?}",
                        doc.id,
                        t.id
                    );
                }
            }
        }
    }
}

#[test]
fn oracle_timeline_has_full_recall() {
    let set = TemplateSet::builtin();
    for doc in common::corpus() {
        let gold = doc.graph.expanded_closure();
        for flavor in [Flavor::Plain, Flavor::Cot, Flavor::Code] {
            for t in set.select(Formulation::Timeline, flavor) {
                let pred = oracle_graph(&doc, Formulation::Timeline, &t.id, MarkerStyle::Eid)
                    .expanded_closure();
                assert!(
                    pred.before_pairs.is_superset(&gold.before_pairs),
                    "{} {}",
                    doc.id,
                    t.id
                );
            }
        }
    }
}

#[test]
fn timeline_demonstration_parses_to_layers() {
    let doc = common::doc("monkeypox");
    let text = "T1:\n- [e3]diagnosed[/e3]\nT2:\n- [e2]death[/e2]\nT3:\n- [e1]identified[/e1]\n- [e4]investigating[/e4]";
    let marked: Vec<_> = doc
        .graph
        .events()
        .iter()
        .map(|e| timeline_eval::formulations::MarkedEvent {
            label: e.index,
            id: e.id.clone(),
            mention: e.mention.clone(),
        })
        .collect();
    let (layers, unplaced) = parse_timeline(text, &marked).unwrap();
    let names: Vec<Vec<&str>> = layers
        .iter()
        .map(|l| {
            l.iter()
                .map(|id| doc.graph.event(id).unwrap().mention.as_str())
                .collect()
        })
        .collect();
    assert_eq!(
        names,
        vec![
            vec!["diagnosed"],
            vec!["death"],
            vec!["identified", "investigating"]
        ]
    );
    assert!(unplaced.is_empty());
}

#[test]
fn records_round_trip_as_json() {
    let doc = common::doc("bookstore");
    let set = TemplateSet::builtin();
    let t = set.get(Formulation::Mrc, "01").unwrap();
    let inst = build_instances(&doc, &[], t, &GenerationConfig::default(), approx_tokens)
        .unwrap()
        .remove(0)
        .unwrap();
    let rec = interpret(&inst, t, &inst.gold_text);
    let line = serde_json::to_string(&rec).unwrap();
    assert_eq!(
        serde_json::from_str::<PredictionRecord>(&line).unwrap(),
        rec
    );
}
