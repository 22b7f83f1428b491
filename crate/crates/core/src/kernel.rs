//! Shared engine behind both dynamic programs.
//!
//! At a tree node `v` every routed path that touches the subtree `D(v)` is
//! one *piece*: its walk through the node's kernel, whose vertices are `v`,
//! the vertices of each child subtree incident to that child's boundary, and
//! the outside endpoints of boundary arcs of `v`. Inside a child subtree the
//! walk jumps from the entry port to the exit port; the child's record pays
//! for that part. Boundary behaviour is described by *traces*: the ordered
//! list of boundary arcs a path crosses.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::rc::Rc;

use crate::cost::Cost;
use crate::decomposition::SpanningTreeLayout;
use crate::error::{Result, SoacError};
use crate::model::{AgentId, ArcId, Instance, VertexId};

/// Ordered boundary arcs crossed by one path.
pub type Trace = Vec<ArcId>;

/// Boundary behaviour of a partial flow at a tree node.
///
/// Outgoing traces start and end with an exit; incoming traces start and end
/// with an entry; excursions belong to agents with both endpoints inside and
/// start with an exit and end with an entry; through traces belong to paths
/// with no endpoint inside, start with an entry and end with an exit.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Snapshot {
    pub outgoing: BTreeMap<AgentId, Trace>,
    pub incoming: BTreeMap<AgentId, Trace>,
    pub excursions: BTreeMap<AgentId, Trace>,
    /// Sorted multiset.
    pub through: Vec<Trace>,
}

impl Snapshot {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.outgoing.is_empty() && self.incoming.is_empty() && self.excursions.is_empty() && self.through.is_empty()
    }

    pub fn canonicalize(&mut self) {
        self.through.sort();
    }

    pub fn traces(&self) -> impl Iterator<Item = &Trace> {
        self.outgoing
            .values()
            .chain(self.incoming.values())
            .chain(self.excursions.values())
            .chain(self.through.iter())
    }

    /// Number of crossings per boundary arc.
    pub fn arc_usage(&self) -> BTreeMap<ArcId, usize> {
        let mut usage = BTreeMap::new();
        for trace in self.traces() {
            for &a in trace {
                *usage.entry(a).or_insert(0) += 1;
            }
        }
        usage
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Loc {
    V,
    Child(usize),
    Out,
}

/// Per-node data, computed once per layout.
#[derive(Clone, Debug)]
pub(crate) struct Node {
    pub v: VertexId,
    pub children: Vec<VertexId>,
    pub loc: Vec<Loc>,
    pub from_v: Vec<ArcId>,
    pub from_child: Vec<Vec<ArcId>>,
    /// Arcs with exactly one endpoint in `D(v)`.
    pub boundary: Vec<ArcId>,
    /// Arcs whose endpoints have `v` as lowest common ancestor.
    pub charged: Vec<ArcId>,
    pub outgoing: Vec<AgentId>,
    pub incoming: Vec<AgentId>,
    /// Agents with distinct endpoints, both in `D(v)`.
    pub local: Vec<AgentId>,
}

impl Node {
    pub fn inside(&self, x: VertexId) -> bool {
        self.loc[x] != Loc::Out
    }

    pub fn is_exit(&self, instance: &Instance, a: ArcId) -> bool {
        let arc = instance.graph.arc(a);
        self.inside(arc.tail) && !self.inside(arc.head)
    }

    /// Position of an inside vertex as a walk endpoint.
    fn endpoint(&self, x: VertexId) -> Endpoint {
        match self.loc[x] {
            Loc::V => Endpoint::V,
            Loc::Child(ci) => Endpoint::Child(ci, x),
            Loc::Out => Endpoint::Boundary,
        }
    }
}

pub(crate) fn build_nodes(instance: &Instance, layout: &SpanningTreeLayout) -> Vec<Node> {
    let n = instance.vertex_count();
    let rooted = layout.rooted();
    let mut nodes = Vec::with_capacity(n);
    for v in 0..n {
        let children = rooted.children[v].clone();
        let loc: Vec<Loc> = (0..n)
            .map(|x| {
                if x == v {
                    Loc::V
                } else if let Some(ci) = children.iter().position(|&w| rooted.contains(w, x)) {
                    Loc::Child(ci)
                } else {
                    Loc::Out
                }
            })
            .collect();
        let mut from_v = Vec::new();
        let mut from_child = vec![Vec::new(); children.len()];
        let mut boundary = Vec::new();
        let mut charged = Vec::new();
        for (a, arc) in instance.graph.arcs().iter().enumerate() {
            let (lt, lh) = (loc[arc.tail], loc[arc.head]);
            if lt == lh {
                continue;
            }
            match lt {
                Loc::V => from_v.push(a),
                Loc::Child(ci) => from_child[ci].push(a),
                Loc::Out => {}
            }
            if lt == Loc::Out || lh == Loc::Out {
                boundary.push(a);
            } else {
                charged.push(a);
            }
        }
        let inside = |x: VertexId| loc[x] != Loc::Out;
        let mut outgoing = Vec::new();
        let mut incoming = Vec::new();
        let mut local = Vec::new();
        for (i, agent) in instance.agents.iter().enumerate() {
            match (inside(agent.source), inside(agent.target)) {
                (true, false) => outgoing.push(i),
                (false, true) => incoming.push(i),
                (true, true) if agent.source != agent.target => local.push(i),
                _ => {}
            }
        }
        nodes.push(Node {
            v,
            children,
            loc,
            from_v,
            from_child,
            boundary,
            charged,
            outgoing,
            incoming,
            local,
        });
    }
    nodes
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Endpoint {
    V,
    Child(usize, VertexId),
    Boundary,
}

#[derive(Clone, Copy, Debug)]
enum Pos {
    V,
    /// Inside a child subtree, having arrived at (or started from) a vertex.
    Child(usize, VertexId),
    /// Outside `D(v)` after leaving through an arc with the given head.
    Out(Option<VertexId>),
}

/// Step counter shared by all enumerations of one solve.
pub(crate) struct Budget {
    pub limit: u64,
    pub used: u64,
}

impl Budget {
    pub fn tick(&mut self) -> Result<()> {
        self.used += 1;
        if self.used > self.limit {
            return Err(SoacError::BudgetExceeded {
                budget: self.limit,
                context: "dynamic program enumeration".to_string(),
            });
        }
        Ok(())
    }
}

struct WalkSearch<'a> {
    instance: &'a Instance,
    node: &'a Node,
    trace: &'a [ArcId],
    end: Endpoint,
    budget: &'a mut Budget,
    found: Vec<Vec<ArcId>>,
}

/// All kernel walks from `start` to `end` whose boundary crossings are
/// exactly `trace`. Zero-length walks that never leave a child are excluded.
pub(crate) fn kernel_walks(
    instance: &Instance,
    node: &Node,
    start: Endpoint,
    end: Endpoint,
    trace: &[ArcId],
    budget: &mut Budget,
) -> Result<Vec<Vec<ArcId>>> {
    let mut search = WalkSearch {
        instance,
        node,
        trace,
        end,
        budget,
        found: Vec::new(),
    };
    let mut visited = Vec::new();
    let mut arcs = Vec::new();
    let pos = match start {
        Endpoint::V => {
            visited.push(node.v);
            Pos::V
        }
        Endpoint::Child(ci, s) => {
            visited.push(s);
            Pos::Child(ci, s)
        }
        Endpoint::Boundary => Pos::Out(None),
    };
    search.dfs(pos, 0, &mut visited, &mut arcs)?;
    Ok(search.found)
}

impl WalkSearch<'_> {
    fn target(&self) -> Option<VertexId> {
        match self.end {
            Endpoint::V => Some(self.node.v),
            Endpoint::Child(_, t) => Some(t),
            Endpoint::Boundary => None,
        }
    }

    fn dfs(&mut self, pos: Pos, i: usize, visited: &mut Vec<VertexId>, arcs: &mut Vec<ArcId>) -> Result<()> {
        self.budget.tick()?;
        let done = i == self.trace.len();
        match pos {
            Pos::V => {
                if self.end == Endpoint::V {
                    if done {
                        self.found.push(arcs.clone());
                    }
                    return Ok(());
                }
                for &a in &self.node.from_v {
                    self.step(a, i, visited, arcs)?;
                }
            }
            Pos::Child(ci, cur) => {
                if let Endpoint::Child(cj, t) = self.end {
                    if cj == ci {
                        if done && !arcs.is_empty() && (t == cur || !visited.contains(&t)) {
                            self.found.push(arcs.clone());
                        }
                        if t == cur {
                            return Ok(());
                        }
                    }
                }
                let target = self.target();
                for &a in &self.node.from_child[ci] {
                    let y = self.instance.graph.arc(a).tail;
                    if y != cur && (visited.contains(&y) || Some(y) == target) {
                        continue;
                    }
                    let fresh = y != cur;
                    if fresh {
                        visited.push(y);
                    }
                    let r = self.step(a, i, visited, arcs);
                    if fresh {
                        visited.pop();
                    }
                    r?;
                }
            }
            Pos::Out(z) => {
                if done {
                    if self.end == Endpoint::Boundary {
                        self.found.push(arcs.clone());
                    }
                    return Ok(());
                }
                let a = self.trace[i];
                let arc = self.instance.graph.arc(a);
                if self.node.inside(arc.tail) || !self.node.inside(arc.head) {
                    return Ok(());
                }
                let fresh = Some(arc.tail) != z;
                if fresh {
                    if visited.contains(&arc.tail) {
                        return Ok(());
                    }
                    visited.push(arc.tail);
                }
                let r = self.enter(a, i + 1, visited, arcs);
                if fresh {
                    visited.pop();
                }
                r?;
            }
        }
        Ok(())
    }

    /// Follows a kernel arc leaving `v` or a child.
    fn step(&mut self, a: ArcId, i: usize, visited: &mut Vec<VertexId>, arcs: &mut Vec<ArcId>) -> Result<()> {
        let head = self.instance.graph.arc(a).head;
        if self.node.loc[head] == Loc::Out {
            if i >= self.trace.len() || self.trace[i] != a || visited.contains(&head) {
                return Ok(());
            }
            visited.push(head);
            arcs.push(a);
            let r = self.dfs(Pos::Out(Some(head)), i + 1, visited, arcs);
            arcs.pop();
            visited.pop();
            return r;
        }
        self.enter(a, i, visited, arcs)
    }

    /// Follows an arc whose head lies in `D(v)`.
    fn enter(&mut self, a: ArcId, i: usize, visited: &mut Vec<VertexId>, arcs: &mut Vec<ArcId>) -> Result<()> {
        let head = self.instance.graph.arc(a).head;
        if visited.contains(&head) {
            return Ok(());
        }
        let pos = match self.node.loc[head] {
            Loc::V => Pos::V,
            Loc::Child(cj) => Pos::Child(cj, head),
            Loc::Out => unreachable!("entering arc has an inside head"),
        };
        visited.push(head);
        arcs.push(a);
        let r = self.dfs(pos, i, visited, arcs);
        arcs.pop();
        visited.pop();
        r
    }
}

/// Identity of a piece inside a node's snapshot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) enum PieceKey {
    Agent(AgentId),
    /// Index into the sorted through-trace list.
    Through(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Fate {
    Walk(Vec<ArcId>),
    /// Both endpoints lie in one child, which decides the routing.
    Stay,
    Unrouted,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Spec {
    start: Endpoint,
    end: Endpoint,
    trace: Trace,
    stay_ok: bool,
    unrouted_ok: bool,
    key: PieceKey,
}

impl Spec {
    fn sort_key(&self) -> (Endpoint, Endpoint, &Trace, bool, bool, bool, PieceKey) {
        let agent = matches!(self.key, PieceKey::Agent(_));
        (
            self.start,
            self.end,
            &self.trace,
            self.stay_ok,
            self.unrouted_ok,
            agent,
            self.key,
        )
    }

    /// Pieces with equal signatures are interchangeable.
    fn same_shape(&self, other: &Spec) -> bool {
        self.start == other.start
            && self.end == other.end
            && self.trace == other.trace
            && self.stay_ok == other.stay_ok
            && self.unrouted_ok == other.unrouted_ok
            && matches!(self.key, PieceKey::Agent(_)) == matches!(other.key, PieceKey::Agent(_))
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Chosen {
    pub key: PieceKey,
    pub fate: Fate,
    /// Key of this piece in each child's snapshot, if it crosses that child.
    pub child_keys: Vec<Option<PieceKey>>,
}

#[derive(Clone, Debug)]
pub(crate) struct Choice {
    pub pieces: Vec<Chosen>,
    /// Snapshot and unrouted count handed to each child.
    pub children: Vec<(Snapshot, usize)>,
}

pub(crate) type RecordKey = (Snapshot, usize);

type Memoised = (Cost, Option<Rc<Choice>>);

pub(crate) struct Engine<'a> {
    pub instance: &'a Instance,
    pub nodes: Rc<Vec<Node>>,
    pub root: VertexId,
    /// `None` routes every agent; `Some(alpha)` allows unrouted agents.
    pub alpha: Option<usize>,
    caps: Vec<usize>,
    pub budget: Budget,
    memo: HashMap<(VertexId, Snapshot, usize), Memoised>,
    /// When set, child records are read from these tables instead of being
    /// computed recursively.
    pub tables: Option<HashMap<VertexId, HashMap<RecordKey, Cost>>>,
    pub missing_lookups: u64,
}

struct SearchState {
    specs: Vec<Spec>,
    cands: Vec<Vec<Fate>>,
    picks: Vec<usize>,
    loads: Vec<usize>,
    alpha_local: usize,
    u_boundary: usize,
    unrouted_boundary: Vec<AgentId>,
    best: Cost,
    best_choice: Option<Choice>,
}

impl<'a> Engine<'a> {
    pub fn new(instance: &'a Instance, layout: &SpanningTreeLayout, alpha: Option<usize>, budget: u64) -> Self {
        let (caps, _) = instance.capacities();
        Engine {
            instance,
            nodes: Rc::new(build_nodes(instance, layout)),
            root: layout.root,
            alpha,
            caps,
            budget: Budget { limit: budget, used: 0 },
            memo: HashMap::new(),
            tables: None,
            missing_lookups: 0,
        }
    }

    fn max_alpha(&self) -> usize {
        self.alpha.unwrap_or(0)
    }

    /// Record value, computed on demand with memoisation.
    pub fn evaluate(&mut self, v: VertexId, snapshot: &Snapshot, alpha_local: usize) -> Result<Cost> {
        let key = (v, snapshot.clone(), alpha_local);
        if let Some((cost, _)) = self.memo.get(&key) {
            return Ok(cost.clone());
        }
        let (cost, choice) = self.compute(v, snapshot, alpha_local)?;
        self.memo.insert(key, (cost.clone(), choice.map(Rc::new)));
        Ok(cost)
    }

    fn child_cost(&mut self, w: VertexId, snapshot: &Snapshot, alpha_local: usize) -> Result<Cost> {
        match &self.tables {
            Some(tables) => match tables.get(&w).and_then(|t| t.get(&(snapshot.clone(), alpha_local))) {
                Some(c) => Ok(c.clone()),
                None => {
                    self.missing_lookups += 1;
                    Ok(Cost::Infinite)
                }
            },
            None => self.evaluate(w, snapshot, alpha_local),
        }
    }

    /// Minimum charged cost inside `D(v)` over partial flows matching the
    /// snapshot, with exactly `alpha_local` unrouted agents having an
    /// endpoint in `D(v)`.
    pub fn compute(&mut self, v: VertexId, snapshot: &Snapshot, alpha_local: usize) -> Result<(Cost, Option<Choice>)> {
        let nodes = Rc::clone(&self.nodes);
        let node = &nodes[v];
        let minmax = self.alpha.is_some();
        let agents = &self.instance.agents;
        if alpha_local > self.max_alpha() {
            return Ok((Cost::Infinite, None));
        }
        let consistent = snapshot.outgoing.keys().all(|a| node.outgoing.contains(a))
            && snapshot.incoming.keys().all(|a| node.incoming.contains(a))
            && snapshot.excursions.keys().all(|a| node.local.contains(a))
            && (minmax
                || (snapshot.outgoing.len() == node.outgoing.len() && snapshot.incoming.len() == node.incoming.len()));
        if !consistent {
            return Ok((Cost::Infinite, None));
        }
        let unrouted_boundary: Vec<AgentId> = node
            .outgoing
            .iter()
            .filter(|a| !snapshot.outgoing.contains_key(a))
            .chain(node.incoming.iter().filter(|a| !snapshot.incoming.contains_key(a)))
            .copied()
            .collect();
        if unrouted_boundary.len() > alpha_local {
            return Ok((Cost::Infinite, None));
        }

        let mut specs = Vec::new();
        for (&a, trace) in &snapshot.outgoing {
            specs.push(Spec {
                start: node.endpoint(agents[a].source),
                end: Endpoint::Boundary,
                trace: trace.clone(),
                stay_ok: false,
                unrouted_ok: false,
                key: PieceKey::Agent(a),
            });
        }
        for (&a, trace) in &snapshot.incoming {
            specs.push(Spec {
                start: Endpoint::Boundary,
                end: node.endpoint(agents[a].target),
                trace: trace.clone(),
                stay_ok: false,
                unrouted_ok: false,
                key: PieceKey::Agent(a),
            });
        }
        for &a in &node.local {
            let (s, t) = (agents[a].source, agents[a].target);
            let spec = match snapshot.excursions.get(&a) {
                Some(trace) => Spec {
                    start: node.endpoint(s),
                    end: node.endpoint(t),
                    trace: trace.clone(),
                    stay_ok: false,
                    unrouted_ok: false,
                    key: PieceKey::Agent(a),
                },
                None => {
                    let same_child = matches!(node.loc[s], Loc::Child(_)) && node.loc[s] == node.loc[t];
                    Spec {
                        start: node.endpoint(s),
                        end: node.endpoint(t),
                        trace: Vec::new(),
                        stay_ok: same_child,
                        unrouted_ok: minmax && !same_child,
                        key: PieceKey::Agent(a),
                    }
                }
            };
            specs.push(spec);
        }
        for (j, trace) in snapshot.through.iter().enumerate() {
            specs.push(Spec {
                start: Endpoint::Boundary,
                end: Endpoint::Boundary,
                trace: trace.clone(),
                stay_ok: false,
                unrouted_ok: false,
                key: PieceKey::Through(j),
            });
        }
        // Group interchangeable pieces so symmetric choices can be skipped.
        specs.sort_by(|x, y| x.sort_key().cmp(&y.sort_key()));

        let mut cands = Vec::with_capacity(specs.len());
        for spec in &specs {
            let mut list: Vec<Fate> =
                kernel_walks(self.instance, node, spec.start, spec.end, &spec.trace, &mut self.budget)?
                    .into_iter()
                    .map(Fate::Walk)
                    .collect();
            if spec.stay_ok {
                list.push(Fate::Stay);
            }
            if spec.unrouted_ok {
                list.push(Fate::Unrouted);
            }
            if list.is_empty() {
                return Ok((Cost::Infinite, None));
            }
            cands.push(list);
        }

        let mut state = SearchState {
            picks: Vec::with_capacity(specs.len()),
            specs,
            cands,
            loads: vec![0; self.instance.graph.arc_count()],
            alpha_local,
            u_boundary: unrouted_boundary.len(),
            unrouted_boundary,
            best: Cost::Infinite,
            best_choice: None,
        };
        self.search(node, &mut state)?;
        Ok((state.best, state.best_choice))
    }

    fn search(&mut self, node: &Node, st: &mut SearchState) -> Result<()> {
        self.budget.tick()?;
        let idx = st.picks.len();
        if idx == st.specs.len() {
            return self.complete(node, st);
        }
        let lo = if idx > 0 && st.specs[idx].same_shape(&st.specs[idx - 1]) {
            st.picks[idx - 1]
        } else {
            0
        };
        for c in lo..st.cands[idx].len() {
            let mut fits = true;
            if let Fate::Walk(arcs) = &st.cands[idx][c] {
                for &a in arcs {
                    if is_internal(node, self.instance, a) {
                        st.loads[a] += 1;
                        if st.loads[a] > self.caps[a] {
                            fits = false;
                        }
                    }
                }
            }
            let result = if fits {
                st.picks.push(c);
                let r = self.search(node, st);
                st.picks.pop();
                r
            } else {
                Ok(())
            };
            if let Fate::Walk(arcs) = &st.cands[idx][c] {
                for &a in arcs {
                    if is_internal(node, self.instance, a) {
                        st.loads[a] -= 1;
                    }
                }
            }
            result?;
        }
        Ok(())
    }

    fn complete(&mut self, node: &Node, st: &mut SearchState) -> Result<()> {
        let mut charged = Cost::zero();
        for &a in &node.charged {
            if st.loads[a] > 0 {
                charged += self.instance.latencies[a].arc_cost(st.loads[a]);
            }
        }
        if charged.is_infinite() || (st.best.is_finite() && charged >= st.best) {
            return Ok(());
        }
        let agents = &self.instance.agents;
        let fates: Vec<&Fate> = st.picks.iter().enumerate().map(|(i, &c)| &st.cands[i][c]).collect();
        let mut unrouted = st.unrouted_boundary.clone();
        for (spec, fate) in st.specs.iter().zip(&fates) {
            if let (Fate::Unrouted, PieceKey::Agent(a)) = (fate, spec.key) {
                unrouted.push(a);
            }
        }
        let u_span = unrouted.len() - st.u_boundary;
        if st.u_boundary + u_span > st.alpha_local {
            return Ok(());
        }
        let remaining = st.alpha_local - st.u_boundary - u_span;
        let alpha = self.max_alpha();

        let k = node.children.len();
        let mut child_snaps = vec![Snapshot::empty(); k];
        let mut child_keys = vec![vec![None; k]; st.specs.len()];
        let mut stays = vec![0usize; k];
        for ci in 0..k {
            let in_child = |x: VertexId| node.loc[x] == Loc::Child(ci);
            let mut through: Vec<(Trace, usize)> = Vec::new();
            for (pi, (spec, fate)) in st.specs.iter().zip(&fates).enumerate() {
                let arcs = match fate {
                    Fate::Walk(arcs) => arcs,
                    Fate::Stay => {
                        if let PieceKey::Agent(a) = spec.key {
                            if in_child(agents[a].source) {
                                stays[ci] += 1;
                            }
                        }
                        continue;
                    }
                    Fate::Unrouted => continue,
                };
                let sub: Trace = arcs
                    .iter()
                    .copied()
                    .filter(|&a| {
                        let arc = self.instance.graph.arc(a);
                        in_child(arc.tail) != in_child(arc.head)
                    })
                    .collect();
                if sub.is_empty() {
                    continue;
                }
                let snap = &mut child_snaps[ci];
                match spec.key {
                    PieceKey::Agent(a) if in_child(agents[a].source) || in_child(agents[a].target) => {
                        match (in_child(agents[a].source), in_child(agents[a].target)) {
                            (true, false) => snap.outgoing.insert(a, sub),
                            (false, true) => snap.incoming.insert(a, sub),
                            _ => snap.excursions.insert(a, sub),
                        };
                        child_keys[pi][ci] = Some(PieceKey::Agent(a));
                    }
                    _ => through.push((sub, pi)),
                }
            }
            through.sort();
            for (j, (trace, pi)) in through.into_iter().enumerate() {
                child_keys[pi][ci] = Some(PieceKey::Through(j));
                child_snaps[ci].through.push(trace);
            }
        }

        // Unrouted agents with exactly one endpoint in a child count there.
        let mut forced = vec![0usize; k];
        for &a in &unrouted {
            let (s, t) = (agents[a].source, agents[a].target);
            for (ci, f) in forced.iter_mut().enumerate() {
                if (node.loc[s] == Loc::Child(ci)) != (node.loc[t] == Loc::Child(ci)) {
                    *f += 1;
                }
            }
        }
        if forced.iter().any(|&f| f > alpha) {
            return Ok(());
        }

        // Distribute the remaining unrouted count over children, knapsack style.
        let mut table: Vec<(Cost, Vec<usize>)> = vec![(Cost::Infinite, Vec::new()); remaining + 1];
        table[0] = (Cost::zero(), Vec::new());
        for ci in 0..k {
            let w = node.children[ci];
            let top = stays[ci].min(alpha - forced[ci]).min(remaining);
            let mut costs = Vec::with_capacity(top + 1);
            for x in 0..=top {
                costs.push(self.child_cost(w, &child_snaps[ci], forced[ci] + x)?);
            }
            let mut next: Vec<(Cost, Vec<usize>)> = vec![(Cost::Infinite, Vec::new()); remaining + 1];
            for (used, (base, split)) in table.iter().enumerate() {
                if base.is_infinite() {
                    continue;
                }
                for (x, c) in costs.iter().enumerate() {
                    if used + x > remaining || c.is_infinite() {
                        continue;
                    }
                    let total = base + c;
                    if next[used + x].0.is_infinite() || total < next[used + x].0 {
                        let mut s = split.clone();
                        s.push(x);
                        next[used + x] = (total, s);
                    }
                }
            }
            table = next;
        }
        let (child_total, split) = table.swap_remove(remaining);
        let total = charged + child_total;
        if total.is_finite() && (st.best.is_infinite() || total < st.best) {
            st.best = total;
            st.best_choice = Some(Choice {
                pieces: st
                    .specs
                    .iter()
                    .zip(&fates)
                    .zip(child_keys)
                    .map(|((spec, fate), keys)| Chosen {
                        key: spec.key,
                        fate: (*fate).clone(),
                        child_keys: keys,
                    })
                    .collect(),
                children: child_snaps
                    .into_iter()
                    .enumerate()
                    .map(|(ci, s)| (s, forced[ci] + split[ci]))
                    .collect(),
            });
        }
        Ok(())
    }
}

/// Arcs with both endpoints in `D(v)` but not inside a single child.
fn is_internal(node: &Node, instance: &Instance, a: ArcId) -> bool {
    let arc = instance.graph.arc(a);
    let (lt, lh) = (node.loc[arc.tail], node.loc[arc.head]);
    lt != Loc::Out && lh != Loc::Out && lt != lh
}

type Stretches = HashMap<PieceKey, VecDeque<Vec<ArcId>>>;
type Finished = BTreeMap<AgentId, Option<Vec<ArcId>>>;

impl Engine<'_> {
    /// Rebuilds the minimising partial flow below `v`: for each piece that
    /// crosses the boundary, its maximal runs of arcs inside `D(v)`; for
    /// agents settled inside `D(v)`, their full path or `None`.
    pub fn expand(&self, v: VertexId, snapshot: &Snapshot, alpha_local: usize) -> Result<(Stretches, Finished)> {
        let choice = self
            .memo
            .get(&(v, snapshot.clone(), alpha_local))
            .and_then(|(_, c)| c.clone())
            .ok_or_else(|| SoacError::InvalidLayout(format!("no finite record at node {v} to expand")))?;
        let node = &self.nodes[v];
        let agents = &self.instance.agents;
        let mut finished = Finished::new();
        let mut child_maps = Vec::with_capacity(node.children.len());
        for (ci, (snap, a)) in choice.children.iter().enumerate() {
            let (map, done) = self.expand(node.children[ci], snap, *a)?;
            finished.extend(done);
            child_maps.push(map);
        }
        let mut stretches = Stretches::new();
        for piece in &choice.pieces {
            let arcs = match (&piece.fate, piece.key) {
                (Fate::Walk(arcs), _) => arcs,
                (Fate::Unrouted, PieceKey::Agent(a)) => {
                    finished.insert(a, None);
                    continue;
                }
                _ => continue,
            };
            let mut pull = |ci: usize| -> Vec<ArcId> {
                let key = piece.child_keys[ci].expect("piece crosses the child it enters");
                child_maps[ci]
                    .get_mut(&key)
                    .and_then(VecDeque::pop_front)
                    .expect("child provides a run for every entry")
            };
            let mut runs = Vec::new();
            let mut current: Option<Vec<ArcId>> = None;
            if let PieceKey::Agent(a) = piece.key {
                let s = agents[a].source;
                if node.inside(s) {
                    let mut run = Vec::new();
                    if let Loc::Child(ci) = node.loc[s] {
                        run.extend(pull(ci));
                    }
                    current = Some(run);
                }
            }
            for &a in arcs {
                let arc = self.instance.graph.arc(a);
                match (node.loc[arc.tail], node.loc[arc.head]) {
                    (_, Loc::Out) => runs.push(current.take().expect("exit from inside")),
                    (Loc::Out, head) => {
                        let mut run = Vec::new();
                        if let Loc::Child(cj) = head {
                            run.extend(pull(cj));
                        }
                        current = Some(run);
                    }
                    (_, head) => {
                        let run = current.as_mut().expect("internal arc while inside");
                        run.push(a);
                        if let Loc::Child(cj) = head {
                            run.extend(pull(cj));
                        }
                    }
                }
            }
            if let Some(run) = current {
                runs.push(run);
            }
            match piece.key {
                PieceKey::Agent(a)
                    if node.inside(agents[a].source)
                        && node.inside(agents[a].target)
                        && !snapshot.excursions.contains_key(&a) =>
                {
                    finished.insert(a, Some(runs.pop().unwrap_or_default()));
                }
                key => {
                    stretches.insert(key, runs.into());
                }
            }
        }
        Ok((stretches, finished))
    }
}

/// Visit sequence of a trace, merging an arrival with an immediate
/// departure from the same vertex, must not repeat a vertex.
fn trace_is_simple(instance: &Instance, trace: &[ArcId], start: Option<VertexId>, end: Option<VertexId>) -> bool {
    let mut seq: Vec<VertexId> = Vec::new();
    let push = |x: VertexId, seq: &mut Vec<VertexId>| {
        if seq.last() != Some(&x) {
            seq.push(x);
        }
    };
    if let Some(s) = start {
        push(s, &mut seq);
    }
    for &a in trace {
        let arc = instance.graph.arc(a);
        push(arc.tail, &mut seq);
        push(arc.head, &mut seq);
    }
    if let Some(t) = end {
        push(t, &mut seq);
    }
    let mut sorted = seq.clone();
    sorted.sort_unstable();
    sorted.dedup();
    sorted.len() == seq.len()
}

/// All alternating traces over the boundary with distinct arcs, starting
/// with an exit when `first_exit` and ending with an exit when `last_exit`.
fn traces_of_shape(
    instance: &Instance,
    node: &Node,
    first_exit: bool,
    last_exit: bool,
    start: Option<VertexId>,
    end: Option<VertexId>,
) -> Vec<Trace> {
    let exits: Vec<ArcId> = node
        .boundary
        .iter()
        .copied()
        .filter(|&a| node.is_exit(instance, a))
        .collect();
    let entries: Vec<ArcId> = node
        .boundary
        .iter()
        .copied()
        .filter(|&a| !node.is_exit(instance, a))
        .collect();
    let mut out = Vec::new();
    let mut current = Vec::new();
    #[allow(clippy::too_many_arguments)]
    fn rec(
        instance: &Instance,
        exits: &[ArcId],
        entries: &[ArcId],
        want_exit: bool,
        last_exit: bool,
        start: Option<VertexId>,
        end: Option<VertexId>,
        current: &mut Vec<ArcId>,
        out: &mut Vec<Trace>,
    ) {
        let pool = if want_exit { exits } else { entries };
        for &a in pool {
            if current.contains(&a) {
                continue;
            }
            current.push(a);
            if trace_is_simple(instance, current, start, None) {
                if want_exit == last_exit && trace_is_simple(instance, current, start, end) {
                    out.push(current.clone());
                }
                rec(
                    instance, exits, entries, !want_exit, last_exit, start, end, current, out,
                );
            }
            current.pop();
        }
    }
    rec(
        instance,
        &exits,
        &entries,
        first_exit,
        last_exit,
        start,
        end,
        &mut current,
        &mut out,
    );
    out.sort();
    out
}

/// Every snapshot at `v` respecting per-arc capacities, paired with each
/// admissible unrouted count; deterministic order.
pub(crate) fn enumerate(instance: &Instance, node: &Node, alpha: Option<usize>) -> Vec<(Snapshot, usize)> {
    let (caps, _) = instance.capacities();
    let agents = &instance.agents;
    let minmax = alpha.is_some();
    // (slot kind, agent, options)
    let mut slots: Vec<(u8, AgentId, Vec<Trace>, bool)> = Vec::new();
    for &a in &node.outgoing {
        let opts = traces_of_shape(instance, node, true, true, Some(agents[a].source), None);
        slots.push((0, a, opts, minmax));
    }
    for &a in &node.incoming {
        let opts = traces_of_shape(instance, node, false, false, None, Some(agents[a].target));
        slots.push((1, a, opts, minmax));
    }
    for &a in &node.local {
        let opts = traces_of_shape(
            instance,
            node,
            true,
            false,
            Some(agents[a].source),
            Some(agents[a].target),
        );
        slots.push((2, a, opts, true));
    }
    let through = traces_of_shape(instance, node, false, true, None, None);

    let mut usage: HashMap<ArcId, usize> = HashMap::new();
    let mut out = Vec::new();
    let mut snap = Snapshot::empty();
    #[allow(clippy::too_many_arguments)]
    fn fits(trace: &Trace, usage: &HashMap<ArcId, usize>, caps: &[usize]) -> bool {
        trace.iter().all(|a| usage.get(a).copied().unwrap_or(0) < caps[*a])
    }
    fn add(trace: &Trace, usage: &mut HashMap<ArcId, usize>, delta: isize) {
        for a in trace {
            let e = usage.entry(*a).or_insert(0);
            *e = (*e as isize + delta) as usize;
        }
    }
    #[allow(clippy::too_many_arguments)]
    fn rec_through(
        through: &[Trace],
        from: usize,
        usage: &mut HashMap<ArcId, usize>,
        caps: &[usize],
        snap: &mut Snapshot,
        found: &mut Vec<Snapshot>,
    ) {
        found.push(snap.clone());
        for i in from..through.len() {
            if fits(&through[i], usage, caps) {
                add(&through[i], usage, 1);
                snap.through.push(through[i].clone());
                rec_through(through, i, usage, caps, snap, found);
                snap.through.pop();
                add(&through[i], usage, -1);
            }
        }
    }
    #[allow(clippy::too_many_arguments)]
    fn rec_slots(
        slots: &[(u8, AgentId, Vec<Trace>, bool)],
        i: usize,
        through: &[Trace],
        usage: &mut HashMap<ArcId, usize>,
        caps: &[usize],
        snap: &mut Snapshot,
        found: &mut Vec<Snapshot>,
    ) {
        if i == slots.len() {
            rec_through(through, 0, usage, caps, snap, found);
            return;
        }
        let (kind, agent, opts, optional) = &slots[i];
        if *optional {
            rec_slots(slots, i + 1, through, usage, caps, snap, found);
        }
        for trace in opts {
            if !fits(trace, usage, caps) {
                continue;
            }
            add(trace, usage, 1);
            let map = match kind {
                0 => &mut snap.outgoing,
                1 => &mut snap.incoming,
                _ => &mut snap.excursions,
            };
            map.insert(*agent, trace.clone());
            rec_slots(slots, i + 1, through, usage, caps, snap, found);
            let map = match kind {
                0 => &mut snap.outgoing,
                1 => &mut snap.incoming,
                _ => &mut snap.excursions,
            };
            map.remove(agent);
            add(trace, usage, -1);
        }
    }
    let mut snaps = Vec::new();
    rec_slots(&slots, 0, &through, &mut usage, &caps, &mut snap, &mut snaps);
    for s in snaps {
        let absent = node.outgoing.len() - s.outgoing.len() + node.incoming.len() - s.incoming.len();
        for a in absent..=alpha.unwrap_or(0) {
            out.push((s.clone(), a));
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Boundary behaviour of a concrete flow at node `v`.
pub(crate) fn snapshot_of(instance: &Instance, node: &Node, flow: &crate::model::FlowAssignment) -> (Snapshot, usize) {
    let mut snap = Snapshot::empty();
    let mut unrouted = 0;
    for (a, path) in flow.paths.iter().enumerate() {
        let agent = instance.agents[a];
        let (si, ti) = (node.inside(agent.source), node.inside(agent.target));
        let Some(path) = path else {
            if (si || ti) && agent.source != agent.target {
                unrouted += 1;
            }
            continue;
        };
        let trace: Trace = path
            .iter()
            .copied()
            .filter(|&e| {
                let arc = instance.graph.arc(e);
                node.inside(arc.tail) != node.inside(arc.head)
            })
            .collect();
        match (si, ti) {
            (true, false) => {
                snap.outgoing.insert(a, trace);
            }
            (false, true) => {
                snap.incoming.insert(a, trace);
            }
            _ if trace.is_empty() => {}
            (true, true) => {
                snap.excursions.insert(a, trace);
            }
            (false, false) => snap.through.push(trace),
        }
    }
    snap.canonicalize();
    (snap, unrouted)
}

#[derive(Clone, Debug)]
pub struct DpOptions {
    pub budget: u64,
    /// Adds one to the root record; used to check that comparisons catch a
    /// corrupted table.
    pub fault_inject: bool,
}

pub const DEFAULT_DP_BUDGET: u64 = 50_000_000;

impl Default for DpOptions {
    fn default() -> Self {
        DpOptions {
            budget: DEFAULT_DP_BUDGET,
            fault_inject: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DpSolution {
    pub cost: Cost,
    pub flow: Option<crate::model::FlowAssignment>,
    /// Enumeration steps used.
    pub steps: u64,
}

pub(crate) fn check_layout(instance: &Instance, layout: &SpanningTreeLayout) -> Result<()> {
    if layout.vertex_count != instance.vertex_count() || layout.skeleton != instance.graph.skeleton_edges() {
        return Err(SoacError::InvalidLayout(
            "layout does not belong to this instance".into(),
        ));
    }
    crate::decomposition::edge_cut_width(layout)?;
    Ok(())
}

pub(crate) fn solve(
    instance: &Instance,
    layout: &SpanningTreeLayout,
    alpha: Option<usize>,
    options: &DpOptions,
) -> Result<DpSolution> {
    check_layout(instance, layout)?;
    let m = instance.agent_count();
    if instance.vertex_count() == 0 {
        return Ok(DpSolution {
            cost: Cost::zero(),
            flow: Some(crate::model::FlowAssignment::new(vec![])),
            steps: 0,
        });
    }
    let mut engine = Engine::new(instance, layout, alpha, options.budget);
    let root = engine.root;
    let empty = Snapshot::empty();
    let mut best = (Cost::Infinite, 0);
    for a in 0..=alpha.unwrap_or(0).min(m) {
        let c = engine.evaluate(root, &empty, a)?;
        if c < best.0 {
            best = (c, a);
        }
    }
    let flow = if best.0.is_finite() {
        let (_, finished) = engine.expand(root, &empty, best.1)?;
        let paths = (0..m)
            .map(|i| {
                if instance.agents[i].source == instance.agents[i].target {
                    Some(Vec::new())
                } else {
                    finished.get(&i).cloned().flatten()
                }
            })
            .collect();
        Some(crate::model::FlowAssignment::new(paths))
    } else {
        None
    };
    let cost = if options.fault_inject { corrupt(best.0) } else { best.0 };
    Ok(DpSolution {
        cost,
        flow,
        steps: engine.budget.used,
    })
}

/// Deliberately wrong root value for fault-injection runs.
pub(crate) fn corrupt(cost: Cost) -> Cost {
    if cost.is_finite() {
        cost + Cost::from_integer(1)
    } else {
        Cost::zero()
    }
}
