//! Instance generators: hardness reductions from multidimensional unary
//! knapsack, edge-disjoint paths and exact 1-in-3 SAT, plus seeded random
//! instances. Each source problem has a brute-force decider.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SoacError};
use crate::model::{Agent, Digraph, Instance, LatencyTable, VertexId};

/// Pick at least `k` of the vectors so that their sum stays below `target`
/// in every coordinate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MuksInstance {
    pub vectors: Vec<Vec<u64>>,
    pub target: Vec<u64>,
    pub k: usize,
}

impl MuksInstance {
    pub fn new(vectors: Vec<Vec<u64>>, target: Vec<u64>, k: usize) -> Result<Self> {
        let muks = MuksInstance { vectors, target, k };
        muks.check()?;
        Ok(muks)
    }

    pub fn dimension(&self) -> usize {
        self.target.len()
    }

    pub fn check(&self) -> Result<()> {
        if self.target.is_empty() {
            return Err(SoacError::InvalidGeneratorInput("dimension must be at least 1".into()));
        }
        if let Some(i) = self.vectors.iter().position(|v| v.len() != self.target.len()) {
            return Err(SoacError::InvalidGeneratorInput(format!(
                "vector {i} has dimension {}, target has {}",
                self.vectors[i].len(),
                self.target.len()
            )));
        }
        Ok(())
    }

    fn row_sum(&self, i: usize) -> usize {
        self.vectors[i].iter().sum::<u64>() as usize
    }

    fn column_sum(&self, j: usize) -> usize {
        self.vectors.iter().map(|v| v[j]).sum::<u64>() as usize
    }

    /// One agent `(s_i, t_j)` per unit of `vectors[i][j]`.
    fn agents(&self, source: impl Fn(usize) -> VertexId, target: impl Fn(usize) -> VertexId) -> Vec<Agent> {
        let mut agents = Vec::new();
        for (i, v) in self.vectors.iter().enumerate() {
            for (j, &count) in v.iter().enumerate() {
                for _ in 0..count {
                    agents.push(Agent {
                        source: source(i),
                        target: target(j),
                    });
                }
            }
        }
        agents
    }
}

/// Edge-disjoint paths in `K_{3,j}`: left vertices are `0, 1, 2`, right
/// vertices `3 .. 3 + right`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdpInstance {
    pub right: usize,
    pub pairs: Vec<(VertexId, VertexId)>,
}

impl EdpInstance {
    pub fn new(right: usize, pairs: Vec<(VertexId, VertexId)>) -> Result<Self> {
        let edp = EdpInstance { right, pairs };
        edp.check()?;
        Ok(edp)
    }

    pub fn vertex_count(&self) -> usize {
        3 + self.right
    }

    pub fn edges(&self) -> Vec<(VertexId, VertexId)> {
        (0..3).flat_map(|u| (3..3 + self.right).map(move |w| (u, w))).collect()
    }

    pub fn check(&self) -> Result<()> {
        for &(u, w) in &self.pairs {
            if u == w || u >= self.vertex_count() || w >= self.vertex_count() {
                return Err(SoacError::InvalidGeneratorInput(format!("bad terminal pair {u}-{w}")));
            }
        }
        Ok(())
    }
}

/// Monotone formula whose clauses each hold three distinct variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CnfFormula {
    pub variable_count: usize,
    pub clauses: Vec<[usize; 3]>,
}

impl CnfFormula {
    pub fn new(variable_count: usize, clauses: Vec<[usize; 3]>) -> Result<Self> {
        for (j, c) in clauses.iter().enumerate() {
            if c.iter().any(|&x| x >= variable_count) || c[0] == c[1] || c[1] == c[2] || c[0] == c[2] {
                return Err(SoacError::InvalidGeneratorInput(format!(
                    "clause {j} needs three distinct variables below {variable_count}"
                )));
            }
        }
        Ok(CnfFormula {
            variable_count,
            clauses,
        })
    }

    /// Every variable occurs in exactly three clauses.
    pub fn is_cubic(&self) -> bool {
        let mut count = vec![0; self.variable_count];
        for c in &self.clauses {
            for &x in c {
                count[x] += 1;
            }
        }
        count.iter().all(|&c| c == 3)
    }
}

fn int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Sources `0..n`, hubs `n` and `n + 1`, targets `n + 2 ..`. Routing all of a
/// source's agents through the first hub is free and bounded by the target
/// capacities; using the second hub costs exactly 1 per source.
pub fn gen_muks_k2n(muks: &MuksInstance) -> Result<Instance> {
    muks.check()?;
    let n = muks.vectors.len();
    let d = muks.dimension();
    let (h0, h1) = (n, n + 1);
    let t = |j: usize| n + 2 + j;
    let mut arcs = Vec::new();
    let mut tables = Vec::new();
    for i in 0..n {
        let out = muks.row_sum(i);
        arcs.push((i, h0));
        tables.push(LatencyTable::zero(out));
        arcs.push((i, h1));
        tables.push(LatencyTable::reciprocal(out));
    }
    for j in 0..d {
        arcs.push((h0, t(j)));
        tables.push(LatencyTable::zero(muks.target[j] as usize));
        arcs.push((h1, t(j)));
        tables.push(LatencyTable::zero(muks.column_sum(j)));
    }
    let graph = Digraph::new(n + 2 + d, arcs)?;
    Instance::new(graph, tables, muks.agents(|i| i, t))
}

/// Leaves, left to right, of the heap-shaped full binary tree with `leaves`
/// leaves (node `k` has children `2k` and `2k + 1`; nodes `1..leaves` are
/// internal).
fn heap_leaves_in_order(leaves: usize) -> Vec<usize> {
    fn visit(k: usize, size: usize, leaves: usize, out: &mut Vec<usize>) {
        if k > size {
            return;
        }
        if k >= leaves {
            out.push(k);
            return;
        }
        visit(2 * k, size, leaves, out);
        visit(2 * k + 1, size, leaves, out);
    }
    let mut out = Vec::new();
    visit(1, 2 * leaves - 1, leaves, &mut out);
    out
}

/// Acyclic, maximum skeleton degree three. Each source `s_i` reaches the
/// chain `h_1 -> .. -> h_{n+1}` at `h_i` and the mirrored chain at `h'_i`;
/// binary trees hang below `h_{n+1}` and `h'_{n+1}` with the targets as
/// shared leaves. Arcs into targets from the first tree have capacity
/// `target[j]`; the arc `s_i -> h'_i` has latency `1/x`.
pub fn gen_muks_planar_dag(muks: &MuksInstance) -> Result<Instance> {
    muks.check()?;
    let n = muks.vectors.len();
    let d = muks.dimension();
    let m: usize = (0..n).map(|i| muks.row_sum(i)).sum();
    let h = |i: usize| n + i; // i in 0..=n
    let hp = |i: usize| 2 * n + 1 + i;
    let mut next = 3 * n + 2;
    // Heap node 1 is the chain end; internal nodes 2..d get fresh vertices.
    let tree_vertex = |root: usize, next: &mut usize| -> Vec<usize> {
        let mut map = vec![root];
        for _ in 2..d {
            map.push(*next);
            *next += 1;
        }
        map
    };
    let h_internal = tree_vertex(h(n), &mut next);
    let hp_internal = tree_vertex(hp(n), &mut next);
    let t0 = next;
    let t = |j: usize| t0 + j;
    let leaf_order = if d >= 2 { heap_leaves_in_order(d) } else { vec![1] };

    let mut arcs = Vec::new();
    let mut tables = Vec::new();
    for i in 0..n {
        arcs.push((i, h(i)));
        tables.push(LatencyTable::zero(m));
        arcs.push((i, hp(i)));
        tables.push(LatencyTable::reciprocal(muks.row_sum(i)));
    }
    for i in 0..n {
        arcs.push((h(i), h(i + 1)));
        tables.push(LatencyTable::zero(m));
        arcs.push((hp(i), hp(i + 1)));
        tables.push(LatencyTable::zero(m));
    }
    for (internal, first) in [(&h_internal, true), (&hp_internal, false)] {
        let vertex_of = |k: usize| -> usize {
            if d >= 2 && k >= d {
                let j = leaf_order.iter().position(|&l| l == k).expect("leaf");
                t(j)
            } else if d == 1 && k == 2 {
                t(0)
            } else {
                internal[k - 1]
            }
        };
        let edges: Vec<(usize, usize)> = if d == 1 {
            vec![(1, 2)]
        } else {
            (2..2 * d).map(|k| (k / 2, k)).collect()
        };
        for (p, c) in edges {
            let (tail, head) = (vertex_of(p), vertex_of(c));
            arcs.push((tail, head));
            let is_leaf = head >= t0;
            let cap = if first && is_leaf {
                muks.target[head - t0] as usize
            } else {
                m
            };
            tables.push(LatencyTable::zero(cap));
        }
    }
    let graph = Digraph::new(t0 + d, arcs)?;
    Instance::new(graph, tables, muks.agents(|i| i, t))
}

/// Replaces every edge `uv` of `K_{3,j}` by a gadget on four new vertices
/// `u', b, c, v'` whose bottleneck arc `b -> c` lets one path through in
/// either direction. All arcs have capacity one and latency zero.
pub fn gen_edp_gadget(edp: &EdpInstance) -> Result<Instance> {
    edp.check()?;
    let mut next = edp.vertex_count();
    let mut arcs = Vec::new();
    for (u, v) in edp.edges() {
        let (up, b, c, vp) = (next, next + 1, next + 2, next + 3);
        next += 4;
        arcs.extend([
            (u, up),
            (up, u),
            (v, vp),
            (vp, v),
            (up, b),
            (vp, b),
            (b, c),
            (c, up),
            (c, vp),
        ]);
    }
    let tables = vec![LatencyTable::zero(1); arcs.len()];
    let graph = Digraph::new(next, arcs)?;
    let agents = edp.pairs.iter().map(|&(s, t)| Agent { source: s, target: t }).collect();
    Instance::new(graph, tables, agents)
}

/// Layered acyclic network: variable `x_i` sends its three agents (one per
/// occurrence) either all through `x_i^T` or all through `x_i^F` for free;
/// each clause target admits one agent from its true side and two from its
/// false side.
pub fn gen_one_in_three(formula: &CnfFormula) -> Result<Instance> {
    if !formula.is_cubic() {
        return Err(SoacError::InvalidGeneratorInput(
            "every variable must occur in exactly three clauses".into(),
        ));
    }
    let n = formula.variable_count;
    let m = formula.clauses.len();
    let x = |i: usize| i;
    let xt = |i: usize| n + i;
    let xf = |i: usize| 2 * n + i;
    let ct = |j: usize| 3 * n + j;
    let cf = |j: usize| 3 * n + m + j;
    let c = |j: usize| 3 * n + 2 * m + j;
    let split = LatencyTable::new(vec![int(1), int(1), int(0)])?;
    let mut arcs = Vec::new();
    let mut tables = Vec::new();
    for i in 0..n {
        arcs.push((x(i), xt(i)));
        tables.push(split.clone());
        arcs.push((x(i), xf(i)));
        tables.push(split.clone());
    }
    let mut agents = Vec::new();
    for (j, clause) in formula.clauses.iter().enumerate() {
        for &i in clause {
            arcs.push((xt(i), ct(j)));
            tables.push(LatencyTable::zero(3));
            arcs.push((xf(i), cf(j)));
            tables.push(LatencyTable::zero(3));
            agents.push(Agent {
                source: x(i),
                target: c(j),
            });
        }
        arcs.push((ct(j), c(j)));
        tables.push(LatencyTable::zero(1));
        arcs.push((cf(j), c(j)));
        tables.push(LatencyTable::zero(2));
    }
    let graph = Digraph::new(3 * n + 3 * m, arcs)?;
    Instance::new(graph, tables, agents)
}

/// Latency values are `p / q` with `p <= max_numerator`, `1 <= q <= max_denominator`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatencyRange {
    pub max_numerator: u32,
    pub max_denominator: u32,
}

impl Default for LatencyRange {
    fn default() -> Self {
        LatencyRange {
            max_numerator: 4,
            max_denominator: 3,
        }
    }
}

/// Seeded random instance: a random spanning tree with random arc
/// directions, extra arcs between fresh ordered pairs, tables of random
/// length `1..=c_max`, and agents with distinct endpoints, drawn from the
/// pairs joined by a directed path whenever there are any.
pub fn gen_random(
    vertex_count: usize,
    arc_count: usize,
    agent_count: usize,
    c_max: usize,
    latency_range: LatencyRange,
    seed: u64,
) -> Result<Instance> {
    if vertex_count == 0 || c_max == 0 || latency_range.max_denominator == 0 {
        return Err(SoacError::InvalidGeneratorInput(
            "vertex count, c_max and denominator bound must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut arcs = Vec::new();
    for v in 1..vertex_count {
        let u = rng.gen_range(0..v);
        let arc = if rng.gen_bool(0.5) { (u, v) } else { (v, u) };
        pairs.insert(arc);
        arcs.push(arc);
    }
    let max_arcs = vertex_count * (vertex_count - 1);
    let mut free: Vec<(usize, usize)> = (0..vertex_count)
        .flat_map(|u| (0..vertex_count).map(move |v| (u, v)))
        .filter(|&(u, v)| u != v && !pairs.contains(&(u, v)))
        .collect();
    free.shuffle(&mut rng);
    let extra = arc_count.min(max_arcs).saturating_sub(arcs.len());
    arcs.extend(free.into_iter().take(extra));
    let tables = (0..arcs.len())
        .map(|_| {
            let len = rng.gen_range(1..=c_max);
            LatencyTable::new(
                (0..len)
                    .map(|_| {
                        let p = rng.gen_range(0..=latency_range.max_numerator);
                        let q = rng.gen_range(1..=latency_range.max_denominator);
                        BigRational::new(BigInt::from(p), BigInt::from(q))
                    })
                    .collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let graph = Digraph::new(vertex_count, arcs)?;
    let reachable = reachable_pairs(&graph);
    let agents = (0..agent_count)
        .map(|_| {
            if vertex_count == 1 {
                return Agent { source: 0, target: 0 };
            }
            if !reachable.is_empty() {
                let (s, t) = reachable[rng.gen_range(0..reachable.len())];
                return Agent { source: s, target: t };
            }
            let s = rng.gen_range(0..vertex_count);
            let mut t = rng.gen_range(0..vertex_count - 1);
            if t >= s {
                t += 1;
            }
            Agent { source: s, target: t }
        })
        .collect();
    Instance::new(graph, tables, agents)
}

/// Ordered pairs `(s, t)`, `s != t`, with a directed path from `s` to `t`.
fn reachable_pairs(graph: &Digraph) -> Vec<(VertexId, VertexId)> {
    let out = graph.out_arcs();
    let mut pairs = Vec::new();
    for s in 0..graph.vertex_count() {
        let mut seen = vec![false; graph.vertex_count()];
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(x) = stack.pop() {
            for &a in &out[x] {
                let h = graph.arc(a).head;
                if !seen[h] {
                    seen[h] = true;
                    stack.push(h);
                }
            }
        }
        pairs.extend((0..graph.vertex_count()).filter(|&t| t != s && seen[t]).map(|t| (s, t)));
    }
    pairs
}

/// Random cubic monotone formula with `n` variables and `n` clauses, or
/// `None` if rejection sampling gives up.
pub fn gen_cubic_formula(n: usize, seed: u64) -> Option<CnfFormula> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..10_000 {
        let mut slots: Vec<usize> = (0..n).flat_map(|i| [i, i, i]).collect();
        slots.shuffle(&mut rng);
        let clauses: Vec<[usize; 3]> = slots.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        if let Ok(f) = CnfFormula::new(n, clauses) {
            return Some(f);
        }
    }
    None
}

const DECIDER_LIMIT: usize = 24;

fn guard(what: &str, size: usize) -> Result<()> {
    if size > DECIDER_LIMIT {
        return Err(SoacError::BudgetExceeded {
            budget: DECIDER_LIMIT as u64,
            context: format!("{what} decider input too large ({size})"),
        });
    }
    Ok(())
}

/// Some subset of at least `k` vectors sums to at most the target.
pub fn decide_muks(muks: &MuksInstance) -> Result<bool> {
    muks.check()?;
    let n = muks.vectors.len();
    guard("knapsack", n)?;
    if muks.k > n {
        return Ok(false);
    }
    for mask in 0u32..(1u32 << n) {
        if (mask.count_ones() as usize) < muks.k {
            continue;
        }
        let fits = (0..muks.dimension()).all(|j| {
            let sum: u64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| muks.vectors[i][j]).sum();
            sum <= muks.target[j]
        });
        if fits {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Pairwise edge-disjoint paths join every terminal pair.
pub fn decide_edp(edp: &EdpInstance) -> Result<bool> {
    edp.check()?;
    guard("edge-disjoint paths", edp.vertex_count() + edp.pairs.len())?;
    let nv = edp.vertex_count();
    let edges = edp.edges();
    let mut adj = vec![Vec::new(); nv];
    for (e, &(u, w)) in edges.iter().enumerate() {
        adj[u].push((w, e));
        adj[w].push((u, e));
    }
    fn paths(adj: &[Vec<(usize, usize)>], s: usize, t: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut seen = vec![false; adj.len()];
        let mut cur = Vec::new();
        fn rec(
            adj: &[Vec<(usize, usize)>],
            at: usize,
            t: usize,
            seen: &mut [bool],
            cur: &mut Vec<usize>,
            out: &mut Vec<Vec<usize>>,
        ) {
            if at == t {
                out.push(cur.clone());
                return;
            }
            seen[at] = true;
            for &(w, e) in &adj[at] {
                if !seen[w] {
                    cur.push(e);
                    rec(adj, w, t, seen, cur, out);
                    cur.pop();
                }
            }
            seen[at] = false;
        }
        rec(adj, s, t, &mut seen, &mut cur, &mut out);
        out
    }
    let options: Vec<Vec<Vec<usize>>> = edp.pairs.iter().map(|&(s, t)| paths(&adj, s, t)).collect();
    fn choose(options: &[Vec<Vec<usize>>], i: usize, used: &mut Vec<bool>) -> bool {
        if i == options.len() {
            return true;
        }
        for p in &options[i] {
            if p.iter().all(|&e| !used[e]) {
                p.iter().for_each(|&e| used[e] = true);
                let ok = choose(options, i + 1, used);
                p.iter().for_each(|&e| used[e] = false);
                if ok {
                    return true;
                }
            }
        }
        false
    }
    Ok(choose(&options, 0, &mut vec![false; edges.len()]))
}

/// Some assignment makes exactly one variable true in every clause.
pub fn decide_one_in_three(formula: &CnfFormula) -> Result<bool> {
    guard("1-in-3 SAT", formula.variable_count)?;
    let n = formula.variable_count;
    Ok((0u32..(1u32 << n)).any(|mask| {
        formula
            .clauses
            .iter()
            .all(|c| c.iter().filter(|&&x| mask >> x & 1 == 1).count() == 1)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heap_leaf_order() {
        assert_eq!(heap_leaves_in_order(2), vec![2, 3]);
        assert_eq!(heap_leaves_in_order(3), vec![4, 5, 3]);
        assert_eq!(heap_leaves_in_order(4), vec![4, 5, 6, 7]);
    }

    #[test]
    fn k2n_shape() {
        let muks = MuksInstance::new(vec![vec![1], vec![2]], vec![2], 1).unwrap();
        let inst = gen_muks_k2n(&muks).unwrap();
        assert_eq!(inst.vertex_count(), 5);
        assert_eq!(inst.agent_count(), 3);
        assert_eq!(inst.graph.arc_count(), 6);
    }

    #[test]
    fn gadget_counts() {
        let edp = EdpInstance::new(1, vec![(0, 1)]).unwrap();
        let inst = gen_edp_gadget(&edp).unwrap();
        assert_eq!(inst.vertex_count(), 4 + 3 * 4);
        assert_eq!(inst.graph.arc_count(), 3 * 9);
        assert_eq!(inst.c_max(), 1);
    }

    #[test]
    fn one_in_three_rejects_non_cubic() {
        let f = CnfFormula::new(3, vec![[0, 1, 2]]).unwrap();
        assert!(gen_one_in_three(&f).is_err());
        assert!(CnfFormula::new(3, vec![[0, 0, 2]]).is_err());
    }

    #[test]
    fn random_is_deterministic() {
        let a = gen_random(6, 9, 3, 2, LatencyRange::default(), 7).unwrap();
        let b = gen_random(6, 9, 3, 2, LatencyRange::default(), 7).unwrap();
        assert_eq!(a, b);
        assert!(a.agents.iter().all(|ag| ag.source != ag.target));
        let one = gen_random(6, 9, 3, 1, LatencyRange::default(), 3).unwrap();
        assert!(one.latencies.iter().all(|t| t.capacity() <= 1));
    }

    #[test]
    fn deciders() {
        let muks = MuksInstance::new(vec![vec![1], vec![2]], vec![2], 1).unwrap();
        assert!(decide_muks(&muks).unwrap());
        let too_many = MuksInstance { k: 3, ..muks };
        assert!(!decide_muks(&too_many).unwrap());
        let f = CnfFormula::new(3, vec![[0, 1, 2]; 3]).unwrap();
        assert!(decide_one_in_three(&f).unwrap());
        let edp = EdpInstance::new(1, vec![(0, 1), (0, 2), (1, 2)]).unwrap();
        assert!(!decide_edp(&edp).unwrap());
    }
}
