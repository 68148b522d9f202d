//! Partial-order timeline graphs.
//!
//! A [`TimelineGraph`] holds events, directed precedence edges (`x -> y` means
//! "x starts before y starts") and undirected COEX links. COEX links group
//! events into clusters whose external precedence edges can be expanded to
//! every member; see [`TimelineGraph::expand_coex`].

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("unknown event `{0}`")]
    UnknownEvent(EventId),
    #[error("duplicate event `{0}`")]
    DuplicateEvent(EventId),
    #[error("self relation on `{0}`")]
    SelfRelation(EventId),
    #[error("graph contains a cycle: {}", format_cycle(.0))]
    CyclicGraph(Vec<EventId>),
}

fn format_cycle(cycle: &[EventId]) -> String {
    cycle
        .iter()
        .map(|e| e.as_str())
        .collect::<Vec<_>>()
        .join(" -> ")
}

/// Document-unique event identifier (the standoff `T` id for gold data).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventId(pub String);

impl EventId {
    pub fn new(id: impl Into<String>) -> Self {
        EventId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EventId {
    fn from(s: &str) -> Self {
        EventId(s.to_string())
    }
}

/// Half-open character span, counted in Unicode scalar values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// PropBank-style numbered argument role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArgRole {
    #[serde(rename = "ARG0")]
    Arg0,
    #[serde(rename = "ARG1")]
    Arg1,
    #[serde(rename = "ARG2")]
    Arg2,
    #[serde(rename = "ARG3")]
    Arg3,
    #[serde(rename = "ARG4")]
    Arg4,
    #[serde(rename = "ARG5")]
    Arg5,
}

impl ArgRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            ArgRole::Arg0 => "ARG0",
            ArgRole::Arg1 => "ARG1",
            ArgRole::Arg2 => "ARG2",
            ArgRole::Arg3 => "ARG3",
            ArgRole::Arg4 => "ARG4",
            ArgRole::Arg5 => "ARG5",
        }
    }
}

impl FromStr for ArgRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ARG0" => Ok(ArgRole::Arg0),
            "ARG1" => Ok(ArgRole::Arg1),
            "ARG2" => Ok(ArgRole::Arg2),
            "ARG3" => Ok(ArgRole::Arg3),
            "ARG4" => Ok(ArgRole::Arg4),
            "ARG5" => Ok(ArgRole::Arg5),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Argument {
    pub role: ArgRole,
    pub text: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub id: EventId,
    pub mention: String,
    pub span: Span,
    /// 1-based position in textual order.
    pub index: usize,
    #[serde(default)]
    pub arguments: Vec<Argument>,
}

impl Event {
    /// An event without text grounding, useful for synthetic graphs.
    pub fn bare(id: impl Into<String>, index: usize) -> Self {
        let id = id.into();
        Event {
            mention: id.clone(),
            id: EventId(id),
            span: Span::new(0, 0),
            index,
            arguments: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RelationLabel {
    Before,
    After,
    Coex,
    None,
}

impl RelationLabel {
    pub const ALL: [RelationLabel; 4] = [
        RelationLabel::Before,
        RelationLabel::After,
        RelationLabel::Coex,
        RelationLabel::None,
    ];

    /// The label seen from the other event of the pair.
    pub fn inverse(self) -> Self {
        match self {
            RelationLabel::Before => RelationLabel::After,
            RelationLabel::After => RelationLabel::Before,
            other => other,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RelationLabel::Before => "BEFORE",
            RelationLabel::After => "AFTER",
            RelationLabel::Coex => "COEX",
            RelationLabel::None => "NONE",
        }
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "BEFORE" => Ok(RelationLabel::Before),
            "AFTER" => Ok(RelationLabel::After),
            "COEX" => Ok(RelationLabel::Coex),
            "NONE" => Ok(RelationLabel::None),
            _ => Err(s.to_string()),
        }
    }
}

/// An unordered event pair, stored with the smaller id first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UnorderedPair(pub EventId, pub EventId);

impl UnorderedPair {
    pub fn new(a: EventId, b: EventId) -> Self {
        if a <= b {
            UnorderedPair(a, b)
        } else {
            UnorderedPair(b, a)
        }
    }

    pub fn contains(&self, id: &EventId) -> bool {
        &self.0 == id || &self.1 == id
    }
}

/// Connected component of the COEX-link subgraph (at least two members).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoexCluster {
    pub members: BTreeSet<EventId>,
}

/// Transitive closure of a timeline: reachability pairs plus COEX pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosurePairSet {
    pub before_pairs: BTreeSet<(EventId, EventId)>,
    pub coex_pairs: BTreeSet<UnorderedPair>,
}

impl ClosurePairSet {
    pub fn is_empty(&self) -> bool {
        self.before_pairs.is_empty() && self.coex_pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.before_pairs.len() + self.coex_pairs.len()
    }

    /// Keeps only pairs whose endpoints both satisfy `keep`.
    pub fn restrict(&self, keep: impl Fn(&EventId) -> bool) -> ClosurePairSet {
        ClosurePairSet {
            before_pairs: self
                .before_pairs
                .iter()
                .filter(|(x, y)| keep(x) && keep(y))
                .cloned()
                .collect(),
            coex_pairs: self
                .coex_pairs
                .iter()
                .filter(|p| keep(&p.0) && keep(&p.1))
                .cloned()
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineGraph {
    events: Vec<Event>,
    edges: BTreeSet<(EventId, EventId)>,
    coex_links: BTreeSet<UnorderedPair>,
}

impl TimelineGraph {
    /// Builds a graph over `events`; events are kept sorted by textual index.
    pub fn new(mut events: Vec<Event>) -> Result<Self, GraphError> {
        events.sort_by(|a, b| a.index.cmp(&b.index).then_with(|| a.id.cmp(&b.id)));
        let mut seen = BTreeSet::new();
        for e in &events {
            if !seen.insert(e.id.clone()) {
                return Err(GraphError::DuplicateEvent(e.id.clone()));
            }
        }
        Ok(TimelineGraph {
            events,
            edges: BTreeSet::new(),
            coex_links: BTreeSet::new(),
        })
    }

    /// Synthetic graph with bare events indexed in the given order.
    pub fn with_ids<S: AsRef<str>>(ids: &[S]) -> Self {
        let events = ids
            .iter()
            .enumerate()
            .map(|(i, id)| Event::bare(id.as_ref(), i + 1))
            .collect();
        TimelineGraph::new(events).expect("ids must be unique")
    }

    /// Same events, no relations.
    pub fn empty_like(&self) -> Self {
        TimelineGraph {
            events: self.events.clone(),
            edges: BTreeSet::new(),
            coex_links: BTreeSet::new(),
        }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn event(&self, id: &EventId) -> Option<&Event> {
        self.events.iter().find(|e| &e.id == id)
    }

    pub fn event_by_index(&self, index: usize) -> Option<&Event> {
        self.events.iter().find(|e| e.index == index)
    }

    pub fn contains(&self, id: &EventId) -> bool {
        self.events.iter().any(|e| &e.id == id)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn edges(&self) -> &BTreeSet<(EventId, EventId)> {
        &self.edges
    }

    pub fn coex_links(&self) -> &BTreeSet<UnorderedPair> {
        &self.coex_links
    }

    fn check_pair(&self, x: &EventId, y: &EventId) -> Result<(), GraphError> {
        for id in [x, y] {
            if !self.contains(id) {
                return Err(GraphError::UnknownEvent(id.clone()));
            }
        }
        if x == y {
            return Err(GraphError::SelfRelation(x.clone()));
        }
        Ok(())
    }

    /// Inserts `event`, keeping events sorted by textual index.
    pub fn add_event(&mut self, event: Event) -> Result<(), GraphError> {
        if self.contains(&event.id) {
            return Err(GraphError::DuplicateEvent(event.id));
        }
        let at = self
            .events
            .partition_point(|e| (e.index, &e.id) < (event.index, &event.id));
        self.events.insert(at, event);
        Ok(())
    }

    /// Adds `before -> after`.
    pub fn add_edge(&mut self, before: EventId, after: EventId) -> Result<(), GraphError> {
        self.check_pair(&before, &after)?;
        self.edges.insert((before, after));
        Ok(())
    }

    pub fn add_coex(&mut self, a: EventId, b: EventId) -> Result<(), GraphError> {
        self.check_pair(&a, &b)?;
        self.coex_links.insert(UnorderedPair::new(a, b));
        Ok(())
    }

    fn index_map(&self) -> BTreeMap<&EventId, usize> {
        self.events
            .iter()
            .enumerate()
            .map(|(i, e)| (&e.id, i))
            .collect()
    }

    fn successors(&self) -> Vec<Vec<usize>> {
        let idx = self.index_map();
        let mut succ = vec![Vec::new(); self.events.len()];
        for (x, y) in &self.edges {
            succ[idx[x]].push(idx[y]);
        }
        succ
    }

    /// Connected components of the COEX-link subgraph with two or more members.
    pub fn coex_clusters(&self) -> Vec<CoexCluster> {
        let idx = self.index_map();
        let mut parent: Vec<usize> = (0..self.events.len()).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for UnorderedPair(a, b) in &self.coex_links {
            let (ra, rb) = (find(&mut parent, idx[a]), find(&mut parent, idx[b]));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut groups: BTreeMap<usize, BTreeSet<EventId>> = BTreeMap::new();
        for i in 0..self.events.len() {
            let root = find(&mut parent, i);
            groups
                .entry(root)
                .or_default()
                .insert(self.events[i].id.clone());
        }
        groups
            .into_values()
            .filter(|m| m.len() >= 2)
            .map(|members| CoexCluster { members })
            .collect()
    }

    /// Propagates precedence edges across COEX clusters.
    ///
    /// An edge `x -> m` with `m` in cluster `C` and `x` outside `C` yields
    /// `x -> m'` for every member `m'`; outgoing edges are expanded the same
    /// way. Intra-cluster edges are kept as they are. Runs to a fixpoint, so
    /// the operation is idempotent.
    pub fn expand_coex(&self) -> TimelineGraph {
        let clusters = self.coex_clusters();
        if clusters.is_empty() {
            return self.clone();
        }
        let mut cluster_of: BTreeMap<&EventId, usize> = BTreeMap::new();
        for (ci, c) in clusters.iter().enumerate() {
            for m in &c.members {
                cluster_of.insert(m, ci);
            }
        }
        let mut edges = self.edges.clone();
        loop {
            let mut added = Vec::new();
            for (x, y) in &edges {
                let cx = cluster_of.get(x).copied();
                let cy = cluster_of.get(y).copied();
                if cx.is_some() && cx == cy {
                    continue;
                }
                if let Some(c) = cy {
                    for m in &clusters[c].members {
                        if !edges.contains(&(x.clone(), m.clone())) {
                            added.push((x.clone(), m.clone()));
                        }
                    }
                }
                if let Some(c) = cx {
                    for m in &clusters[c].members {
                        if !edges.contains(&(m.clone(), y.clone())) {
                            added.push((m.clone(), y.clone()));
                        }
                    }
                }
            }
            if added.is_empty() {
                break;
            }
            edges.extend(added);
        }
        TimelineGraph {
            events: self.events.clone(),
            edges,
            coex_links: self.coex_links.clone(),
        }
    }

    /// Reachability matrix over the graph as given (no COEX expansion).
    pub fn reachability(&self) -> Reachability {
        let n = self.events.len();
        let succ = self.successors();
        let mut reach = vec![vec![false; n]; n];
        for (start, row) in reach.iter_mut().enumerate() {
            let mut queue: VecDeque<usize> = succ[start].iter().copied().collect();
            while let Some(v) = queue.pop_front() {
                if row[v] {
                    continue;
                }
                row[v] = true;
                queue.extend(succ[v].iter().copied().filter(|&w| !row[w]));
            }
        }
        let mut cluster = vec![None; n];
        let idx = self.index_map();
        for (ci, c) in self.coex_clusters().iter().enumerate() {
            for m in &c.members {
                cluster[idx[m]] = Some(ci);
            }
        }
        Reachability {
            ids: self.events.iter().map(|e| e.id.clone()).collect(),
            reach,
            cluster,
        }
    }

    /// All reachable ordered pairs plus unordered pairs that share a COEX
    /// cluster without being ordered by reachability.
    ///
    /// Cycles are tolerated: mutually reachable events appear in both
    /// directions. Gold graphs should be expanded first.
    pub fn transitive_closure(&self) -> ClosurePairSet {
        self.reachability().closure()
    }

    /// Closure of the COEX-expanded graph.
    pub fn expanded_closure(&self) -> ClosurePairSet {
        self.expand_coex().transitive_closure()
    }

    /// One vertex cycle per non-trivial strongly connected component.
    pub fn detect_cycles(&self) -> Vec<Vec<EventId>> {
        let n = self.events.len();
        let succ = self.successors();
        let comps = strongly_connected_components(&succ);
        let mut cycles = Vec::new();
        for comp in comps.into_iter().filter(|c| c.len() > 1) {
            let member: BTreeSet<usize> = comp.iter().copied().collect();
            let start = *comp.iter().min().expect("non-empty component");
            // BFS inside the component back to the start vertex.
            let mut prev = vec![usize::MAX; n];
            let mut queue = VecDeque::from([start]);
            let mut closing = None;
            'search: while let Some(v) = queue.pop_front() {
                for &w in &succ[v] {
                    if !member.contains(&w) {
                        continue;
                    }
                    if w == start {
                        closing = Some(v);
                        break 'search;
                    }
                    if prev[w] == usize::MAX {
                        prev[w] = v;
                        queue.push_back(w);
                    }
                }
            }
            let mut path = Vec::new();
            let mut cur = closing.expect("strongly connected component has a cycle");
            while cur != start {
                path.push(cur);
                cur = prev[cur];
            }
            path.push(start);
            path.reverse();
            cycles.push(
                path.into_iter()
                    .map(|i| self.events[i].id.clone())
                    .collect(),
            );
        }
        cycles.sort();
        cycles
    }

    /// Chronological layers of the COEX-expanded graph.
    ///
    /// Each event sits one layer after its deepest predecessor (sources are in
    /// the first layer), so every precedence pair crosses layers forwards.
    pub fn layering(&self) -> Result<Vec<Vec<EventId>>, GraphError> {
        let g = self.expand_coex();
        if let Some(cycle) = g.detect_cycles().into_iter().next() {
            return Err(GraphError::CyclicGraph(cycle));
        }
        let n = g.events.len();
        let succ = g.successors();
        let mut indeg = vec![0usize; n];
        for s in &succ {
            for &w in s {
                indeg[w] += 1;
            }
        }
        let mut depth = vec![0usize; n];
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        while let Some(v) = queue.pop_front() {
            for &w in &succ[v] {
                depth[w] = depth[w].max(depth[v] + 1);
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    queue.push_back(w);
                }
            }
        }
        let mut layers: Vec<Vec<EventId>> = Vec::new();
        // events are sorted by textual index, so layers are too
        for (v, &d) in depth.iter().enumerate() {
            if layers.len() <= d {
                layers.resize(d + 1, Vec::new());
            }
            layers[d].push(g.events[v].id.clone());
        }
        layers.retain(|l| !l.is_empty());
        Ok(layers)
    }

    /// Relation of `x` to `y` by reachability over the graph as given.
    pub fn pairwise_relation(&self, x: &EventId, y: &EventId) -> Result<RelationLabel, GraphError> {
        self.check_pair(x, y)?;
        self.reachability().relation(x, y)
    }

    /// Weakly connected components over edges and COEX links together.
    pub fn weak_components(&self) -> Vec<BTreeSet<EventId>> {
        let idx = self.index_map();
        let n = self.events.len();
        let mut adj = vec![Vec::new(); n];
        let links = self
            .edges
            .iter()
            .map(|(a, b)| (a, b))
            .chain(self.coex_links.iter().map(|p| (&p.0, &p.1)));
        for (a, b) in links {
            adj[idx[a]].push(idx[b]);
            adj[idx[b]].push(idx[a]);
        }
        let mut seen = vec![false; n];
        let mut comps = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            let mut comp = BTreeSet::new();
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(v) = stack.pop() {
                comp.insert(self.events[v].id.clone());
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            comps.push(comp);
        }
        comps
    }

    pub fn is_weakly_connected(&self) -> bool {
        self.weak_components().len() <= 1
    }

    /// Renames events through `map`; events mapped to the same id merge and
    /// relations that collapse onto a single event are dropped.
    pub fn relabel(&self, map: impl Fn(&EventId) -> EventId) -> TimelineGraph {
        let mut events: Vec<Event> = Vec::new();
        for e in &self.events {
            let id = map(&e.id);
            if events.iter().all(|x| x.id != id) {
                let mut e = e.clone();
                e.id = id;
                events.push(e);
            }
        }
        let mut g = TimelineGraph::new(events).expect("ids deduplicated");
        for (x, y) in &self.edges {
            let _ = g.add_edge(map(x), map(y));
        }
        for UnorderedPair(a, b) in &self.coex_links {
            let _ = g.add_coex(map(a), map(b));
        }
        g
    }

    /// Transitive reduction of an acyclic graph: edges not implied by a
    /// longer path.
    pub fn transitive_reduction(&self) -> Result<BTreeSet<(EventId, EventId)>, GraphError> {
        if let Some(cycle) = self.detect_cycles().into_iter().next() {
            return Err(GraphError::CyclicGraph(cycle));
        }
        let r = self.reachability();
        let idx = self.index_map();
        let succ = self.successors();
        let mut out = BTreeSet::new();
        for (x, y) in &self.edges {
            let (xi, yi) = (idx[x], idx[y]);
            let implied = succ[xi].iter().any(|&m| m != yi && r.reach[m][yi]);
            if !implied {
                out.insert((x.clone(), y.clone()));
            }
        }
        Ok(out)
    }
}

/// Precomputed reachability for repeated pair queries.
#[derive(Debug, Clone)]
pub struct Reachability {
    ids: Vec<EventId>,
    reach: Vec<Vec<bool>>,
    cluster: Vec<Option<usize>>,
}

impl Reachability {
    fn position(&self, id: &EventId) -> Result<usize, GraphError> {
        self.ids
            .iter()
            .position(|x| x == id)
            .ok_or_else(|| GraphError::UnknownEvent(id.clone()))
    }

    pub fn reaches(&self, x: &EventId, y: &EventId) -> Result<bool, GraphError> {
        Ok(self.reach[self.position(x)?][self.position(y)?])
    }

    /// BEFORE/AFTER for one-way reachability, COEX for unordered cluster
    /// mates, NONE otherwise (including mutual reachability).
    pub fn relation(&self, x: &EventId, y: &EventId) -> Result<RelationLabel, GraphError> {
        let (i, j) = (self.position(x)?, self.position(y)?);
        if i == j {
            return Err(GraphError::SelfRelation(x.clone()));
        }
        Ok(match (self.reach[i][j], self.reach[j][i]) {
            (true, false) => RelationLabel::Before,
            (false, true) => RelationLabel::After,
            (true, true) => RelationLabel::None,
            (false, false) => match (self.cluster[i], self.cluster[j]) {
                (Some(a), Some(b)) if a == b => RelationLabel::Coex,
                _ => RelationLabel::None,
            },
        })
    }

    pub fn closure(&self) -> ClosurePairSet {
        let n = self.ids.len();
        let mut out = ClosurePairSet::default();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                if self.reach[i][j] {
                    out.before_pairs
                        .insert((self.ids[i].clone(), self.ids[j].clone()));
                }
                if i < j
                    && !self.reach[i][j]
                    && !self.reach[j][i]
                    && self.cluster[i].is_some()
                    && self.cluster[i] == self.cluster[j]
                {
                    out.coex_pairs
                        .insert(UnorderedPair::new(self.ids[i].clone(), self.ids[j].clone()));
                }
            }
        }
        out
    }
}

/// Tarjan's algorithm, iterative.
fn strongly_connected_components(succ: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = succ.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut counter = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut work = vec![(root, 0usize)];
        while let Some(&(v, next)) = work.last() {
            if next == 0 && index[v] == usize::MAX {
                index[v] = counter;
                low[v] = counter;
                counter += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if next < succ[v].len() {
                let w = succ[v][next];
                work.last_mut().expect("non-empty").1 += 1;
                if index[w] == usize::MAX {
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            work.pop();
            if let Some(&(parent, _)) = work.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comps.push(comp);
            }
        }
    }
    comps
}
