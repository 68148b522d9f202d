use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use timeline_eval::annotation::{parse_standoff, render_markers, strip_markers, MarkerStyle};
use timeline_eval::graph::{ClosurePairSet, Event, EventId, Span, TimelineGraph, UnorderedPair};
use timeline_eval::metrics::{
    dice_span_f1, quantile, temporal_awareness, temporal_awareness_reduced,
    temporal_awareness_with, CoexMode,
};

fn id(i: usize) -> EventId {
    EventId::new(format!("e{i:02}"))
}

#[derive(Debug, Clone)]
struct Spec {
    n: usize,
    edges: Vec<(usize, usize)>,
    coex: Vec<(usize, usize)>,
}

impl Spec {
    fn graph(&self) -> TimelineGraph {
        let ids: Vec<String> = (0..self.n).map(|i| id(i).0).collect();
        let mut g = TimelineGraph::with_ids(&ids);
        for &(a, b) in &self.edges {
            g.add_edge(id(a), id(b)).unwrap();
        }
        for &(a, b) in &self.coex {
            g.add_coex(id(a), id(b)).unwrap();
        }
        g
    }
}

/// Forward-only edges, so the plain graph is acyclic.
fn dag(max_n: usize, with_coex: bool) -> impl Strategy<Value = Spec> {
    (1..=max_n).prop_flat_map(move |n| {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .collect();
        let k = pairs.len();
        let coex_k = if with_coex { k.min(3) } else { 0 };
        (
            Just(n),
            proptest::collection::vec(any::<bool>(), k),
            proptest::collection::vec(
                proptest::sample::select(if pairs.is_empty() {
                    vec![(0, 0)]
                } else {
                    pairs.clone()
                }),
                0..=coex_k,
            ),
        )
            .prop_map(move |(n, mask, coex)| {
                let pairs: Vec<(usize, usize)> = (0..n)
                    .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
                    .collect();
                Spec {
                    n,
                    edges: pairs
                        .iter()
                        .zip(&mask)
                        .filter(|(_, &m)| m)
                        .map(|(p, _)| *p)
                        .collect(),
                    coex: coex.into_iter().filter(|(a, b)| a != b).collect(),
                }
            })
    })
}

/// Independent closure: cluster-lift every cross edge, then Floyd-Warshall.
fn brute_closure(s: &Spec) -> ClosurePairSet {
    let n = s.n;
    let mut cluster: Vec<usize> = (0..n).collect();
    for _ in 0..n {
        for &(a, b) in &s.coex {
            let m = cluster[a].min(cluster[b]);
            cluster[a] = m;
            cluster[b] = m;
        }
    }
    for _ in 0..n {
        for i in 0..n {
            cluster[i] = cluster[cluster[i]];
        }
    }
    let mut r = vec![vec![false; n]; n];
    for &(a, b) in &s.edges {
        if cluster[a] == cluster[b] {
            r[a][b] = true;
            continue;
        }
        for x in (0..n).filter(|&x| cluster[x] == cluster[a]) {
            for y in (0..n).filter(|&y| cluster[y] == cluster[b]) {
                r[x][y] = true;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if r[i][k] && r[k][j] {
                    r[i][j] = true;
                }
            }
        }
    }
    let mut out = ClosurePairSet::default();
    for i in 0..n {
        for j in 0..n {
            if i != j && r[i][j] {
                out.before_pairs.insert((id(i), id(j)));
            }
            if i < j && cluster[i] == cluster[j] && !r[i][j] && !r[j][i] {
                out.coex_pairs.insert(UnorderedPair::new(id(i), id(j)));
            }
        }
    }
    out
}

fn ratio(hit: usize, total: usize, other_total: usize) -> f64 {
    match (total, other_total) {
        (0, 0) => 1.0,
        (0, _) => 0.0,
        _ => hit as f64 / total as f64,
    }
}

proptest! {
    #[test]
    fn closure_matches_brute_force(s in dag(8, true)) {
        prop_assert_eq!(s.graph().expanded_closure(), brute_closure(&s));
    }

    #[test]
    fn closure_is_idempotent(s in dag(8, false)) {
        let g = s.graph();
        let c = g.transitive_closure();
        let mut h = g.empty_like();
        for (a, b) in &c.before_pairs {
            h.add_edge(a.clone(), b.clone()).unwrap();
        }
        prop_assert_eq!(h.transitive_closure(), c);
    }

    #[test]
    fn expansion_is_idempotent(s in dag(7, true)) {
        let once = s.graph().expand_coex();
        prop_assert_eq!(once.expand_coex(), once);
    }

    #[test]
    fn dag_closure_is_antisymmetric(s in dag(8, false)) {
        let c = s.graph().transitive_closure();
        for (a, b) in &c.before_pairs {
            prop_assert_ne!(a, b);
            prop_assert!(!c.before_pairs.contains(&(b.clone(), a.clone())));
        }
    }

    #[test]
    fn self_score_is_perfect(s in dag(8, true)) {
        let g = s.graph();
        for mode in [CoexMode::Include, CoexMode::Exclude] {
            let p = temporal_awareness_with(&g, &g, mode);
            prop_assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn ta_matches_pair_intersection(gold in dag(7, false), mask in proptest::collection::vec(any::<bool>(), 21), extra in proptest::collection::vec((0usize..7, 0usize..7), 0..4)) {
        let mut pred = Spec { n: gold.n, edges: Vec::new(), coex: Vec::new() };
        pred.edges = gold.edges.iter().zip(&mask).filter(|(_, &m)| m).map(|(p, _)| *p).collect();
        pred.edges.extend(extra.into_iter().filter(|&(a, b)| a < b && b < gold.n));
        pred.edges.sort();
        pred.edges.dedup();
        let (g, p) = (brute_closure(&gold), brute_closure(&pred));
        let hit = g.before_pairs.intersection(&p.before_pairs).count();
        let precision = ratio(hit, p.len(), g.len());
        let recall = ratio(hit, g.len(), p.len());
        let score = temporal_awareness(&gold.graph(), &pred.graph());
        prop_assert!((score.precision - precision).abs() < 1e-12);
        prop_assert!((score.recall - recall).abs() < 1e-12);
        let reduced = temporal_awareness_reduced(&gold.graph(), &pred.graph()).unwrap();
        prop_assert!(reduced.f1 >= 0.0 && reduced.f1 <= 1.0);
    }

    #[test]
    fn subgraph_predictions_are_precise_and_monotone(gold in dag(8, true), cut in 0usize..30) {
        let g = gold.graph();
        let mut small = Spec { n: gold.n, edges: gold.edges.clone(), coex: gold.coex.clone() };
        small.edges.truncate(cut.min(small.edges.len()));
        let mut smaller = small.clone();
        smaller.edges.truncate(small.edges.len() / 2);
        let a = temporal_awareness(&g, &small.graph());
        let b = temporal_awareness(&g, &smaller.graph());
        if !small.graph().expanded_closure().is_empty() {
            // Every predicted pair is implied by the gold graph.
            let gc = g.expanded_closure();
            let pc = small.graph().expanded_closure();
            if pc.before_pairs.is_subset(&gc.before_pairs) && pc.coex_pairs.is_subset(&gc.coex_pairs) {
                prop_assert_eq!(a.precision, 1.0);
            }
        }
        prop_assert!(b.recall <= a.recall + 1e-12);
    }

    #[test]
    fn dice_is_symmetric(a in proptest::collection::btree_set(0u8..20, 0..10), b in proptest::collection::btree_set(0u8..20, 0..10)) {
        let none = BTreeMap::new();
        let ab = dice_span_f1(&a, &b, &none);
        prop_assert_eq!(ab, dice_span_f1(&b, &a, &none));
        prop_assert!((0.0..=1.0).contains(&ab));
        if a == b && !a.is_empty() {
            prop_assert_eq!(ab, 1.0);
        }
    }

    #[test]
    fn quantile_stays_within_neighbours(mut v in proptest::collection::vec(-1e3f64..1e3, 1..40), q in 0.0f64..=1.0) {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let x = quantile(&v, q);
        let pos = q * (v.len() - 1) as f64;
        prop_assert!(x >= v[pos.floor() as usize] - 1e-9 && x <= v[pos.ceil() as usize] + 1e-9);
    }
}

const WORDS: &[&str] = &[
    "rain", "fell", "crowds", "left", "the", "city", "voted", "again", "later", "storm",
];

fn sentence() -> impl Strategy<Value = (Vec<&'static str>, Vec<bool>)> {
    (2usize..12).prop_flat_map(|n| {
        (
            proptest::collection::vec(proptest::sample::select(WORDS), n),
            proptest::collection::vec(any::<bool>(), n),
        )
    })
}

fn marked(words: &[&str], chosen: &[bool]) -> (String, TimelineGraph) {
    let text = format!("{}.", words.join(" "));
    let mut events = Vec::new();
    let mut at = 0;
    for (i, w) in words.iter().enumerate() {
        let len = w.chars().count();
        if chosen[i] {
            events.push(Event {
                id: id(i),
                mention: w.to_string(),
                span: Span::new(at, at + len),
                index: events.len() + 1,
                arguments: Vec::new(),
            });
        }
        at += len + 1;
    }
    (text, TimelineGraph::new(events).unwrap())
}

proptest! {
    #[test]
    fn markers_round_trip((words, chosen) in sentence()) {
        let (text, g) = marked(&words, &chosen);
        for style in [MarkerStyle::Eid, MarkerStyle::Star, MarkerStyle::Structured] {
            let rendered = render_markers(&text, &g, style).unwrap();
            prop_assert_eq!(strip_markers(&rendered, style), text.clone());
        }
    }

    #[test]
    fn standoff_parse_ignores_line_order((words, _) in sentence(), seed in any::<u64>()) {
        let text = format!("{}.", words.join(" "));
        let mut lines = Vec::new();
        let mut at = 0;
        for (i, w) in words.iter().enumerate() {
            let len = w.chars().count();
            lines.push(format!("T{}\tEvent {} {}\t{}", i + 1, at, at + len, w));
            at += len + 1;
        }
        for i in 1..words.len() {
            let label = if i % 3 == 0 { "COEX" } else { "AFTER" };
            lines.push(format!("R{i}\t{label} Arg1:T{} Arg2:T{}", i + 1, i));
        }
        let forward = parse_standoff(&lines.join("\n"), &text).unwrap();
        let mut shuffled = lines.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let back = parse_standoff(&shuffled.join("\n"), &text).unwrap();
        prop_assert_eq!(&forward.graph, &back.graph);
        let order: BTreeSet<usize> = forward.graph.events().iter().map(|e| e.index).collect();
        prop_assert_eq!(order, (1..=words.len()).collect::<BTreeSet<_>>());
    }
}
