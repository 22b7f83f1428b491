//! Rooted spanning-tree layouts `(H, T)` and their edge-cut width.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Result, SoacError};
use crate::model::{AgentId, ArcId, Digraph, Instance, VertexId};

pub type Edge = (VertexId, VertexId);

fn norm(u: VertexId, w: VertexId) -> Edge {
    (u.min(w), u.max(w))
}

/// A supergraph `H` of the skeleton together with a spanning tree `T` of
/// `H`, rooted at a leaf of `T`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpanningTreeLayout {
    pub vertex_count: usize,
    /// Skeleton edges of the instance graph.
    pub skeleton: Vec<Edge>,
    /// Edges of `H` that are not skeleton edges.
    pub extra_edges: Vec<Edge>,
    /// Parent of each vertex in `T`; `None` only at the root.
    pub parent: Vec<Option<VertexId>>,
    pub root: VertexId,
    pub width: usize,
}

impl SpanningTreeLayout {
    /// Builds and validates a layout from a parent array.
    pub fn new(graph: &Digraph, parent: Vec<Option<VertexId>>, extra_edges: Vec<Edge>) -> Result<Self> {
        let n = graph.vertex_count();
        let skeleton = graph.skeleton_edges();
        if parent.len() != n {
            return Err(SoacError::InvalidLayout(format!(
                "parent array has {} entries for {n} vertices",
                parent.len()
            )));
        }
        let mut extra: Vec<Edge> = extra_edges.into_iter().map(|(u, w)| norm(u, w)).collect();
        extra.sort_unstable();
        extra.dedup();
        for &(u, w) in &extra {
            if u == w || w >= n {
                return Err(SoacError::InvalidLayout(format!("bad extra edge {u}-{w}")));
            }
            if skeleton.binary_search(&(u, w)).is_ok() {
                return Err(SoacError::InvalidLayout(format!(
                    "extra edge {u}-{w} is already a skeleton edge"
                )));
            }
        }
        let roots: Vec<VertexId> = (0..n).filter(|&v| parent[v].is_none()).collect();
        if n > 0 && roots.len() != 1 {
            return Err(SoacError::InvalidLayout(format!(
                "expected exactly one root, found {}",
                roots.len()
            )));
        }
        let root = roots.first().copied().unwrap_or(0);
        let mut layout = SpanningTreeLayout {
            vertex_count: n,
            skeleton,
            extra_edges: extra,
            parent,
            root,
            width: 0,
        };
        let h: BTreeSet<Edge> = layout.h_edges().into_iter().collect();
        for v in 0..n {
            if let Some(p) = layout.parent[v] {
                if p >= n || !h.contains(&norm(v, p)) {
                    return Err(SoacError::InvalidLayout(format!(
                        "tree edge {v}-{p} is not an edge of H"
                    )));
                }
            }
        }
        let (width, _) = edge_cut_width(&layout)?;
        let tree_degree = layout.tree_degree(root);
        if n > 1 && tree_degree != 1 {
            return Err(SoacError::InvalidLayout(format!(
                "root {root} has {tree_degree} tree neighbours, expected a leaf"
            )));
        }
        layout.width = width;
        Ok(layout)
    }

    /// Builds a layout from an undirected spanning tree edge set, rooted at
    /// the lowest-id leaf.
    pub fn from_tree_edges(graph: &Digraph, tree: &[Edge], extra_edges: Vec<Edge>) -> Result<Self> {
        let n = graph.vertex_count();
        if n == 0 {
            return Self::new(graph, vec![], extra_edges);
        }
        let mut adj = vec![Vec::new(); n];
        for &(u, w) in tree {
            if u >= n || w >= n {
                return Err(SoacError::InvalidLayout(format!("bad tree edge {u}-{w}")));
            }
            adj[u].push(w);
            adj[w].push(u);
        }
        let root = (0..n).find(|&v| adj[v].len() <= 1).unwrap_or(0);
        let mut parent = vec![None; n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = Some(v);
                    queue.push_back(w);
                }
            }
        }
        if seen.iter().any(|s| !s) || tree.len() + 1 != n {
            return Err(SoacError::InvalidLayout("edge set is not a spanning tree".into()));
        }
        Self::new(graph, parent, extra_edges)
    }

    /// All edges of `H`, sorted.
    pub fn h_edges(&self) -> Vec<Edge> {
        let mut all: Vec<Edge> = self.skeleton.iter().chain(&self.extra_edges).copied().collect();
        all.sort_unstable();
        all
    }

    pub fn tree_edges(&self) -> Vec<Edge> {
        let mut edges: Vec<Edge> = (0..self.vertex_count)
            .filter_map(|v| self.parent[v].map(|p| norm(v, p)))
            .collect();
        edges.sort_unstable();
        edges
    }

    fn tree_degree(&self, v: VertexId) -> usize {
        self.parent[v].is_some() as usize + self.parent.iter().filter(|p| **p == Some(v)).count()
    }

    /// Child lists, traversal orders and subtree intervals.
    pub fn rooted(&self) -> RootedTree {
        RootedTree::new(&self.parent, self.root)
    }
}

/// Navigation helpers over the rooted tree of a layout.
#[derive(Clone, Debug)]
pub struct RootedTree {
    pub parent: Vec<Option<VertexId>>,
    pub root: VertexId,
    pub children: Vec<Vec<VertexId>>,
    pub depth: Vec<usize>,
    /// Children before parents.
    pub postorder: Vec<VertexId>,
    tin: Vec<usize>,
    tout: Vec<usize>,
}

impl RootedTree {
    fn new(parent: &[Option<VertexId>], root: VertexId) -> Self {
        let n = parent.len();
        let mut children = vec![Vec::new(); n];
        for v in 0..n {
            if let Some(p) = parent[v] {
                children[p].push(v);
            }
        }
        let mut depth = vec![0; n];
        let mut tin = vec![0; n];
        let mut tout = vec![0; n];
        let mut postorder = Vec::with_capacity(n);
        let mut clock = 0;
        if n > 0 {
            let mut stack = vec![(root, 0usize)];
            tin[root] = clock;
            clock += 1;
            while let Some((v, i)) = stack.pop() {
                if i < children[v].len() {
                    stack.push((v, i + 1));
                    let w = children[v][i];
                    depth[w] = depth[v] + 1;
                    tin[w] = clock;
                    clock += 1;
                    stack.push((w, 0));
                } else {
                    tout[v] = clock;
                    postorder.push(v);
                }
            }
        }
        RootedTree {
            parent: parent.to_vec(),
            root,
            children,
            depth,
            postorder,
            tin,
            tout,
        }
    }

    /// True when `x` is a descendant of `v` (including `v`).
    pub fn contains(&self, v: VertexId, x: VertexId) -> bool {
        self.tin[v] <= self.tin[x] && self.tin[x] < self.tout[v]
    }

    pub fn subtree(&self, v: VertexId) -> Vec<VertexId> {
        let mut out: Vec<VertexId> = (0..self.parent.len()).filter(|&x| self.contains(v, x)).collect();
        out.sort_unstable();
        out
    }

    /// Vertices on the tree path between `u` and `w`, endpoints included.
    pub fn path(&self, u: VertexId, w: VertexId) -> Vec<VertexId> {
        let (mut a, mut b) = (u, w);
        let mut left = Vec::new();
        let mut right = Vec::new();
        while a != b {
            if self.depth[a] >= self.depth[b] {
                left.push(a);
                a = self.parent[a].expect("non-root");
            } else {
                right.push(b);
                b = self.parent[b].expect("non-root");
            }
        }
        left.push(a);
        left.extend(right.into_iter().rev());
        left
    }
}

/// Width `1 + max_v |E_loc(v)|` and the per-vertex sets `E_loc(v)`: non-tree
/// edges of `H` whose tree path (endpoints included) visits `v`.
pub fn edge_cut_width(layout: &SpanningTreeLayout) -> Result<(usize, Vec<Vec<Edge>>)> {
    let n = layout.vertex_count;
    check_tree(&layout.parent, layout.root)?;
    let tree: BTreeSet<Edge> = layout.tree_edges().into_iter().collect();
    let rooted = layout.rooted();
    let mut local = vec![Vec::new(); n];
    for (u, w) in layout.h_edges() {
        if tree.contains(&(u, w)) {
            continue;
        }
        for x in rooted.path(u, w) {
            local[x].push((u, w));
        }
    }
    let width = 1 + local.iter().map(Vec::len).max().unwrap_or(0);
    Ok((width, local))
}

fn check_tree(parent: &[Option<VertexId>], root: VertexId) -> Result<()> {
    let n = parent.len();
    if n == 0 {
        return Ok(());
    }
    if root >= n || parent[root].is_some() {
        return Err(SoacError::InvalidLayout(format!("root {root} has a parent")));
    }
    // Every vertex must reach the root without revisiting.
    let mut state = vec![0u8; n];
    state[root] = 2;
    for start in 0..n {
        let mut trail = Vec::new();
        let mut v = start;
        while state[v] == 0 {
            state[v] = 1;
            trail.push(v);
            match parent[v] {
                Some(p) if p < n => v = p,
                _ => return Err(SoacError::InvalidLayout(format!("vertex {v} does not reach the root"))),
            }
        }
        if state[v] == 1 {
            return Err(SoacError::InvalidLayout(format!("tree has a cycle through {v}")));
        }
        for t in trail {
            state[t] = 2;
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct LayoutConfig {
    /// Exhaustive search runs when the number of candidate edge subsets
    /// `C(|E(H)|, n - 1)` is at most this.
    pub exhaustive_cap: u64,
    /// Forces exhaustive search regardless of the cap.
    pub exact: bool,
    /// Bound on heuristic improvement rounds.
    pub max_rounds: usize,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            exhaustive_cap: 200_000,
            exact: false,
            max_rounds: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayoutSearch {
    Found(SpanningTreeLayout),
    /// No layout within the budget was found; carries the best one seen.
    NoLayoutWithinBudget(SpanningTreeLayout),
}

impl LayoutSearch {
    pub fn layout(&self) -> &SpanningTreeLayout {
        match self {
            LayoutSearch::Found(l) | LayoutSearch::NoLayoutWithinBudget(l) => l,
        }
    }

    pub fn into_layout(self) -> SpanningTreeLayout {
        match self {
            LayoutSearch::Found(l) | LayoutSearch::NoLayoutWithinBudget(l) => l,
        }
    }

    pub fn is_found(&self) -> bool {
        matches!(self, LayoutSearch::Found(_))
    }
}

pub fn find_layout(instance: &Instance, width_budget: usize) -> Result<LayoutSearch> {
    find_layout_with(&instance.graph, width_budget, &LayoutConfig::default())
}

/// Searches for a layout of width at most `width_budget`. Disconnected
/// skeletons are joined by a chain of extra edges between the lowest vertex
/// of consecutive components; those edges are bridges of `H`, so they are
/// tree edges of every spanning tree and never add to the width.
pub fn find_layout_with(graph: &Digraph, width_budget: usize, config: &LayoutConfig) -> Result<LayoutSearch> {
    let n = graph.vertex_count();
    let skeleton = graph.skeleton_edges();
    let extra = connectors(n, &skeleton);
    let mut h: Vec<Edge> = skeleton.iter().chain(&extra).copied().collect();
    h.sort_unstable();

    let subsets = binomial(h.len() as u64, n.saturating_sub(1) as u64);
    let best = if config.exact || subsets <= config.exhaustive_cap {
        exhaustive(graph, &h, &extra)?
    } else {
        heuristic(graph, &h, &extra, config)?
    };
    Ok(if best.width <= width_budget {
        LayoutSearch::Found(best)
    } else {
        LayoutSearch::NoLayoutWithinBudget(best)
    })
}

fn connectors(n: usize, skeleton: &[Edge]) -> Vec<Edge> {
    let mut uf = UnionFind::new(n);
    for &(u, w) in skeleton {
        uf.union(u, w);
    }
    let mut reps = Vec::new();
    let mut seen = BTreeSet::new();
    for v in 0..n {
        if seen.insert(uf.find(v)) {
            reps.push(v);
        }
    }
    reps.windows(2).map(|p| norm(p[0], p[1])).collect()
}

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

/// Spanning trees of `h` as edge-index subsets, in lexicographic order.
pub fn spanning_trees(n: usize, h: &[Edge]) -> Vec<Vec<Edge>> {
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut chosen = Vec::new();
    rec_trees(n, h, 0, &mut chosen, &mut out);
    out
}

fn rec_trees(n: usize, h: &[Edge], next: usize, chosen: &mut Vec<Edge>, out: &mut Vec<Vec<Edge>>) {
    if chosen.len() == n - 1 {
        out.push(chosen.clone());
        return;
    }
    if h.len() - next < n - 1 - chosen.len() {
        return;
    }
    let mut uf = UnionFind::new(n);
    for &(u, w) in chosen.iter() {
        uf.union(u, w);
    }
    let (u, w) = h[next];
    if uf.find(u) != uf.find(w) {
        chosen.push((u, w));
        rec_trees(n, h, next + 1, chosen, out);
        chosen.pop();
    }
    rec_trees(n, h, next + 1, chosen, out);
}

fn exhaustive(graph: &Digraph, h: &[Edge], extra: &[Edge]) -> Result<SpanningTreeLayout> {
    let n = graph.vertex_count();
    if n == 0 {
        return SpanningTreeLayout::new(graph, vec![], vec![]);
    }
    let mut best: Option<SpanningTreeLayout> = None;
    for tree in spanning_trees(n, h) {
        let layout = SpanningTreeLayout::from_tree_edges(graph, &tree, extra.to_vec())?;
        if best.as_ref().is_none_or(|b| layout.width < b.width) {
            best = Some(layout);
        }
    }
    best.ok_or_else(|| SoacError::InvalidLayout("H has no spanning tree".into()))
}

fn score(n: usize, h: &[Edge], tree: &[Edge]) -> (usize, usize) {
    let tree_set: BTreeSet<Edge> = tree.iter().copied().collect();
    let mut adj = vec![Vec::new(); n];
    for &(u, w) in tree {
        adj[u].push(w);
        adj[w].push(u);
    }
    let mut count = vec![0usize; n];
    for &(u, w) in h {
        if tree_set.contains(&(u, w)) {
            continue;
        }
        for x in tree_path(&adj, u, w) {
            count[x] += 1;
        }
    }
    (1 + count.iter().max().copied().unwrap_or(0), count.iter().sum())
}

fn tree_path(adj: &[Vec<VertexId>], from: VertexId, to: VertexId) -> Vec<VertexId> {
    let mut prev = vec![usize::MAX; adj.len()];
    prev[from] = from;
    let mut queue = VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        if v == to {
            break;
        }
        for &w in &adj[v] {
            if prev[w] == usize::MAX {
                prev[w] = v;
                queue.push_back(w);
            }
        }
    }
    let mut path = vec![to];
    let mut v = to;
    while v != from {
        v = prev[v];
        path.push(v);
    }
    path
}

/// BFS tree from vertex 0, then improving single-edge swaps ranked by
/// (width, total local size) until none helps.
fn heuristic(graph: &Digraph, h: &[Edge], extra: &[Edge], config: &LayoutConfig) -> Result<SpanningTreeLayout> {
    let n = graph.vertex_count();
    if n == 0 {
        return SpanningTreeLayout::new(graph, vec![], vec![]);
    }
    let mut adj = vec![Vec::new(); n];
    for &(u, w) in h {
        adj[u].push(w);
        adj[w].push(u);
    }
    for list in adj.iter_mut() {
        list.sort_unstable();
    }
    let mut seen = vec![false; n];
    let mut tree = Vec::new();
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                tree.push(norm(v, w));
                queue.push_back(w);
            }
        }
    }
    tree.sort_unstable();
    let mut current = score(n, h, &tree);
    for _ in 0..config.max_rounds {
        let mut improved = false;
        let non_tree: Vec<Edge> = h.iter().filter(|e| tree.binary_search(e).is_err()).copied().collect();
        'search: for i in 0..tree.len() {
            for &f in &non_tree {
                let mut candidate = tree.clone();
                candidate[i] = f;
                let mut uf = UnionFind::new(n);
                if !candidate.iter().all(|&(u, w)| uf.union(u, w)) {
                    continue;
                }
                let s = score(n, h, &candidate);
                if s < current {
                    candidate.sort_unstable();
                    tree = candidate;
                    current = s;
                    improved = true;
                    break 'search;
                }
            }
        }
        if !improved {
            break;
        }
    }
    SpanningTreeLayout::from_tree_edges(graph, &tree, extra.to_vec())
}

/// Data the dynamic programs need about the subtree at one node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeContext {
    pub subtree: Vec<VertexId>,
    /// Arcs with exactly one endpoint in the subtree.
    pub boundary: Vec<ArcId>,
    /// Agents with source inside and target outside.
    pub outgoing: Vec<AgentId>,
    /// Agents with source outside and target inside.
    pub incoming: Vec<AgentId>,
    /// Children `w` such that `vw` is a bridge of `H`.
    pub simple_children: Vec<VertexId>,
    pub complex_children: Vec<VertexId>,
}

pub fn node_context(instance: &Instance, layout: &SpanningTreeLayout, v: VertexId) -> NodeContext {
    let rooted = layout.rooted();
    let inside = |x: VertexId| rooted.contains(v, x);
    let boundary = instance
        .graph
        .arcs()
        .iter()
        .enumerate()
        .filter(|(_, a)| inside(a.tail) != inside(a.head))
        .map(|(i, _)| i)
        .collect();
    let outgoing = (0..instance.agent_count())
        .filter(|&i| inside(instance.agents[i].source) && !inside(instance.agents[i].target))
        .collect();
    let incoming = (0..instance.agent_count())
        .filter(|&i| !inside(instance.agents[i].source) && inside(instance.agents[i].target))
        .collect();
    let h = layout.h_edges();
    let (mut simple, mut complex) = (Vec::new(), Vec::new());
    for &w in &rooted.children[v] {
        let crossing = h
            .iter()
            .filter(|&&(a, b)| rooted.contains(w, a) != rooted.contains(w, b))
            .count();
        if crossing == 1 {
            simple.push(w);
        } else {
            complex.push(w);
        }
    }
    NodeContext {
        subtree: rooted.subtree(v),
        boundary,
        outgoing,
        incoming,
        simple_children: simple,
        complex_children: complex,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn undirected(n: usize, edges: &[Edge]) -> Digraph {
        Digraph::new(n, edges.to_vec()).unwrap()
    }

    #[test]
    fn tree_has_width_one() {
        let g = undirected(4, &[(0, 1), (1, 2), (1, 3)]);
        let layout = SpanningTreeLayout::from_tree_edges(&g, &g.skeleton_edges(), vec![]).unwrap();
        let (width, local) = edge_cut_width(&layout).unwrap();
        assert_eq!(width, 1);
        assert!(local.iter().all(Vec::is_empty));
        assert_eq!(layout.root, 0);
    }

    #[test]
    fn root_must_be_leaf() {
        let g = undirected(3, &[(0, 1), (1, 2)]);
        assert!(SpanningTreeLayout::new(&g, vec![Some(1), None, Some(1)], vec![]).is_err());
        assert!(SpanningTreeLayout::new(&g, vec![None, Some(0), Some(1)], vec![]).is_ok());
    }

    #[test]
    fn malformed_trees_rejected() {
        let g = undirected(3, &[(0, 1), (1, 2), (0, 2)]);
        assert!(SpanningTreeLayout::new(&g, vec![None, Some(2), Some(1)], vec![]).is_err());
        let h = undirected(3, &[(0, 1)]);
        assert!(SpanningTreeLayout::new(&h, vec![None, Some(0), Some(1)], vec![]).is_err());
    }

    #[test]
    fn path_queries() {
        let g = undirected(5, &[(0, 1), (1, 2), (1, 3), (3, 4)]);
        let layout = SpanningTreeLayout::from_tree_edges(&g, &g.skeleton_edges(), vec![]).unwrap();
        let rooted = layout.rooted();
        assert_eq!(rooted.path(2, 4), vec![2, 1, 3, 4]);
        assert_eq!(rooted.path(4, 4), vec![4]);
        assert!(rooted.contains(1, 4));
        assert!(!rooted.contains(3, 2));
        assert_eq!(rooted.postorder.last(), Some(&0));
    }

    #[test]
    fn k4_layouts() {
        let edges: Vec<Edge> = vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        let g = undirected(4, &edges);
        let trees = spanning_trees(4, &g.skeleton_edges());
        assert_eq!(trees.len(), 16);
        let widths: Vec<usize> = trees
            .iter()
            .map(|t| SpanningTreeLayout::from_tree_edges(&g, t, vec![]).unwrap().width)
            .collect();
        assert_eq!(widths.iter().min(), Some(&4));
    }

    #[test]
    fn disconnected_skeleton_is_joined() {
        let g = undirected(5, &[(0, 1), (2, 3), (3, 4), (2, 4)]);
        let layout = find_layout_with(&g, 10, &LayoutConfig::default())
            .unwrap()
            .into_layout();
        assert_eq!(layout.extra_edges, vec![(0, 2)]);
        assert_eq!(layout.width, 2);
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(6, 3), 20);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(200, 100), u64::MAX);
    }
}
