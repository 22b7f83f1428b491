//! Instances, flow assignments and the exact cost semantics.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::cost::Cost;
use crate::error::{Result, SoacError};

pub type VertexId = usize;
pub type ArcId = usize;
pub type AgentId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Arc {
    pub tail: VertexId,
    pub head: VertexId,
}

/// A digraph whose arcs are identified by their index. Parallel arcs are
/// allowed, self-loops are not.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Digraph {
    vertex_count: usize,
    arcs: Vec<Arc>,
}

impl Digraph {
    pub fn new(vertex_count: usize, arcs: Vec<(VertexId, VertexId)>) -> Result<Self> {
        let arcs: Vec<Arc> = arcs.into_iter().map(|(tail, head)| Arc { tail, head }).collect();
        for (i, arc) in arcs.iter().enumerate() {
            if arc.tail >= vertex_count || arc.head >= vertex_count {
                return Err(SoacError::InvalidInstance(format!(
                    "arc {i} ({} -> {}) references a vertex outside 0..{vertex_count}",
                    arc.tail, arc.head
                )));
            }
            if arc.tail == arc.head {
                return Err(SoacError::InvalidInstance(format!(
                    "arc {i} is a self-loop at vertex {}",
                    arc.tail
                )));
            }
        }
        Ok(Digraph { vertex_count, arcs })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn arc(&self, id: ArcId) -> Arc {
        self.arcs[id]
    }

    /// Outgoing arc ids per vertex, in increasing arc order.
    pub fn out_arcs(&self) -> Vec<Vec<ArcId>> {
        let mut out = vec![Vec::new(); self.vertex_count];
        for (i, arc) in self.arcs.iter().enumerate() {
            out[arc.tail].push(i);
        }
        out
    }

    /// Undirected simple graph underlying the digraph, as sorted `(u, w)`
    /// pairs with `u < w`.
    pub fn skeleton_edges(&self) -> Vec<(VertexId, VertexId)> {
        let mut edges: Vec<(usize, usize)> = self
            .arcs
            .iter()
            .map(|a| (a.tail.min(a.head), a.tail.max(a.head)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// True when the digraph has no directed cycle.
    pub fn is_acyclic(&self) -> bool {
        let mut indegree = vec![0usize; self.vertex_count];
        for arc in &self.arcs {
            indegree[arc.head] += 1;
        }
        let out = self.out_arcs();
        let mut stack: Vec<usize> = (0..self.vertex_count).filter(|&v| indegree[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = stack.pop() {
            seen += 1;
            for &a in &out[v] {
                let h = self.arcs[a].head;
                indegree[h] -= 1;
                if indegree[h] == 0 {
                    stack.push(h);
                }
            }
        }
        seen == self.vertex_count
    }
}

/// Latency function of one arc: entry `i - 1` holds the latency at load `i`.
/// Loads beyond the table length have infinite latency, so the table length
/// is the arc's capacity.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct LatencyTable {
    values: Vec<BigRational>,
}

impl LatencyTable {
    pub fn new(values: Vec<BigRational>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| v.is_negative()) {
            return Err(SoacError::InvalidInstance(format!("negative latency {bad}")));
        }
        Ok(LatencyTable { values })
    }

    /// Convenience constructor from `(numerator, denominator)` pairs.
    pub fn from_ratios(values: &[(i64, i64)]) -> Result<Self> {
        Self::new(
            values
                .iter()
                .map(|&(p, q)| BigRational::new(BigInt::from(p), BigInt::from(q)))
                .collect(),
        )
    }

    /// `capacity` copies of the same latency value.
    pub fn constant(value: BigRational, capacity: usize) -> Self {
        LatencyTable {
            values: vec![value; capacity],
        }
    }

    pub fn zero(capacity: usize) -> Self {
        Self::constant(BigRational::zero(), capacity)
    }

    /// `l(x) = 1/x` for `x` in `1..=capacity`.
    pub fn reciprocal(capacity: usize) -> Self {
        LatencyTable {
            values: (1..=capacity)
                .map(|x| BigRational::new(BigInt::from(1), BigInt::from(x)))
                .collect(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[BigRational] {
        &self.values
    }

    /// `l(load)`; infinite above capacity. Load 0 has latency 0.
    pub fn latency(&self, load: usize) -> Cost {
        if load == 0 {
            Cost::zero()
        } else if load > self.values.len() {
            Cost::Infinite
        } else {
            Cost::Finite(self.values[load - 1].clone())
        }
    }

    /// Total contribution `load * l(load)` of the arc.
    pub fn arc_cost(&self, load: usize) -> Cost {
        self.latency(load).scaled(load)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Agent {
    pub source: VertexId,
    pub target: VertexId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub graph: Digraph,
    pub latencies: Vec<LatencyTable>,
    pub agents: Vec<Agent>,
    /// Decision threshold; the solvers always compute the optimum.
    pub lambda: Option<Cost>,
    /// Number of agents that may stay unrouted.
    pub alpha: Option<usize>,
}

impl Instance {
    pub fn new(graph: Digraph, latencies: Vec<LatencyTable>, agents: Vec<Agent>) -> Result<Self> {
        let instance = Instance {
            graph,
            latencies,
            agents,
            lambda: None,
            alpha: None,
        };
        instance.check()?;
        Ok(instance)
    }

    pub fn with_alpha(mut self, alpha: usize) -> Result<Self> {
        self.alpha = Some(alpha);
        self.check()?;
        Ok(self)
    }

    pub fn with_lambda(mut self, lambda: Cost) -> Self {
        self.lambda = Some(lambda);
        self
    }

    /// Re-checks the structural invariants.
    pub fn check(&self) -> Result<()> {
        if self.latencies.len() != self.graph.arc_count() {
            return Err(SoacError::InvalidInstance(format!(
                "{} latency tables for {} arcs",
                self.latencies.len(),
                self.graph.arc_count()
            )));
        }
        let n = self.graph.vertex_count();
        for (i, agent) in self.agents.iter().enumerate() {
            if agent.source >= n || agent.target >= n {
                return Err(SoacError::InvalidInstance(format!(
                    "agent {i} ({} -> {}) references a vertex outside 0..{n}",
                    agent.source, agent.target
                )));
            }
        }
        if let Some(alpha) = self.alpha {
            if alpha > self.agents.len() {
                return Err(SoacError::InvalidInstance(format!(
                    "alpha {alpha} exceeds the number of agents {}",
                    self.agents.len()
                )));
            }
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.graph.vertex_count()
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    /// Per-arc capacities and their maximum (0 for an arc-free graph).
    pub fn capacities(&self) -> (Vec<usize>, usize) {
        let caps: Vec<usize> = self.latencies.iter().map(LatencyTable::capacity).collect();
        let c_max = caps.iter().copied().max().unwrap_or(0);
        (caps, c_max)
    }

    pub fn c_max(&self) -> usize {
        self.capacities().1
    }
}

/// Per-agent routing: `None` marks an unrouted agent, otherwise the path is
/// the sequence of arc ids it traverses.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct FlowAssignment {
    pub paths: Vec<Option<Vec<ArcId>>>,
}

impl FlowAssignment {
    pub fn new(paths: Vec<Option<Vec<ArcId>>>) -> Self {
        FlowAssignment { paths }
    }

    pub fn routed_count(&self) -> usize {
        self.paths.iter().filter(|p| p.is_some()).count()
    }

    pub fn unrouted_count(&self) -> usize {
        self.paths.len() - self.routed_count()
    }
}

fn check_path(instance: &Instance, agent_id: AgentId, path: &[ArcId]) -> Result<()> {
    let agent = instance.agents[agent_id];
    let err = |reason: String| SoacError::InvalidFlow {
        agent: agent_id,
        reason,
    };
    let mut visited = vec![false; instance.vertex_count()];
    let mut at = agent.source;
    visited[at] = true;
    for (step, &arc_id) in path.iter().enumerate() {
        if arc_id >= instance.graph.arc_count() {
            return Err(err(format!("arc {arc_id} does not exist")));
        }
        let arc = instance.graph.arc(arc_id);
        if arc.tail != at {
            return Err(err(format!(
                "broken arc chain at step {step}: arc {arc_id} starts at {} but the path is at {at}",
                arc.tail
            )));
        }
        at = arc.head;
        if visited[at] {
            return Err(err(format!("non-simple path: vertex {at} repeats")));
        }
        visited[at] = true;
    }
    if at != agent.target {
        return Err(err(format!(
            "endpoint mismatch: path ends at {at}, target is {}",
            agent.target
        )));
    }
    Ok(())
}

/// Checks every routed path and that at most `alpha` agents are unrouted.
pub fn validate_flow_with_alpha(instance: &Instance, flow: &FlowAssignment, alpha: usize) -> Result<()> {
    if flow.paths.len() != instance.agent_count() {
        return Err(SoacError::InvalidFlow {
            agent: flow.paths.len().min(instance.agent_count()),
            reason: format!(
                "flow covers {} agents, instance has {}",
                flow.paths.len(),
                instance.agent_count()
            ),
        });
    }
    let mut unrouted = 0;
    for (i, path) in flow.paths.iter().enumerate() {
        match path {
            Some(p) => check_path(instance, i, p)?,
            None => {
                unrouted += 1;
                if unrouted > alpha {
                    return Err(SoacError::InvalidFlow {
                        agent: i,
                        reason: if alpha == 0 {
                            "unrouted agent in SOAC mode".to_string()
                        } else {
                            format!("more than {alpha} agents unrouted")
                        },
                    });
                }
            }
        }
    }
    Ok(())
}

/// Validates against the instance's own unrouted budget (0 when absent).
pub fn validate_flow(instance: &Instance, flow: &FlowAssignment) -> Result<()> {
    validate_flow_with_alpha(instance, flow, instance.alpha.unwrap_or(0))
}

/// Per-arc loads and the total cost `sum_e f(e) * l_e(f(e))`.
///
/// Only the paths are validated here; unrouted agents are accepted
/// regardless of any budget.
pub fn loads_and_cost(instance: &Instance, flow: &FlowAssignment) -> Result<(Vec<usize>, Cost)> {
    validate_flow_with_alpha(instance, flow, instance.agent_count())?;
    let mut loads = vec![0usize; instance.graph.arc_count()];
    for path in flow.paths.iter().flatten() {
        for &arc in path {
            loads[arc] += 1;
        }
    }
    let cost = total_cost(instance, &loads);
    Ok((loads, cost))
}

/// Cost of a load vector.
pub fn total_cost(instance: &Instance, loads: &[usize]) -> Cost {
    let mut cost = Cost::zero();
    for (arc, &load) in loads.iter().enumerate() {
        if load > 0 {
            cost += instance.latencies[arc].arc_cost(load);
            if cost.is_infinite() {
                break;
            }
        }
    }
    cost
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_arc(table: LatencyTable, agents: usize) -> Instance {
        let graph = Digraph::new(2, vec![(0, 1)]).unwrap();
        let agents = vec![Agent { source: 0, target: 1 }; agents];
        Instance::new(graph, vec![table], agents).unwrap()
    }

    #[test]
    fn capacities_and_c_max() {
        let graph = Digraph::new(3, vec![(0, 1), (1, 2), (0, 2)]).unwrap();
        let tables = vec![
            LatencyTable::zero(1),
            LatencyTable::zero(2),
            LatencyTable::from_ratios(&[(1, 1), (1, 2), (1, 3)]).unwrap(),
        ];
        let inst = Instance::new(graph, tables, vec![]).unwrap();
        let (caps, c_max) = inst.capacities();
        assert_eq!(caps, vec![1, 2, 3]);
        assert_eq!(c_max, 3);

        let empty = Instance::new(Digraph::new(1, vec![]).unwrap(), vec![], vec![]).unwrap();
        assert_eq!(empty.capacities().1, 0);
    }

    #[test]
    fn reciprocal_latency_contributes_one() {
        for x in 1..=3 {
            let inst = single_arc(LatencyTable::reciprocal(3), x);
            let flow = FlowAssignment::new(vec![Some(vec![0]); x]);
            let (loads, cost) = loads_and_cost(&inst, &flow).unwrap();
            assert_eq!(loads, vec![x]);
            assert_eq!(cost, Cost::from_integer(1));
        }
    }

    #[test]
    fn over_capacity_is_infinite() {
        let inst = single_arc(LatencyTable::zero(1), 2);
        let flow = FlowAssignment::new(vec![Some(vec![0]), Some(vec![0])]);
        assert_eq!(loads_and_cost(&inst, &flow).unwrap().1, Cost::Infinite);
    }

    #[test]
    fn unrouted_agents_cost_nothing() {
        let inst = single_arc(LatencyTable::zero(1), 2);
        let flow = FlowAssignment::new(vec![None, None]);
        let (loads, cost) = loads_and_cost(&inst, &flow).unwrap();
        assert_eq!(loads, vec![0]);
        assert!(cost.is_zero());
        assert!(matches!(
            validate_flow(&inst, &flow),
            Err(SoacError::InvalidFlow { agent: 0, .. })
        ));
    }

    #[test]
    fn validation_errors() {
        let graph = Digraph::new(3, vec![(0, 1), (1, 0), (1, 2)]).unwrap();
        let inst = Instance::new(
            graph,
            vec![LatencyTable::zero(2); 3],
            vec![Agent { source: 0, target: 2 }, Agent { source: 1, target: 1 }],
        )
        .unwrap();
        let ok = FlowAssignment::new(vec![Some(vec![0, 2]), Some(vec![])]);
        assert!(validate_flow(&inst, &ok).is_ok());

        let loop_path = FlowAssignment::new(vec![Some(vec![0, 1, 0, 2]), Some(vec![])]);
        let err = validate_flow(&inst, &loop_path).unwrap_err();
        assert!(err.to_string().contains("non-simple"), "{err}");

        let broken = FlowAssignment::new(vec![Some(vec![2]), Some(vec![])]);
        assert!(validate_flow(&inst, &broken)
            .unwrap_err()
            .to_string()
            .contains("broken"));

        let short = FlowAssignment::new(vec![Some(vec![0]), Some(vec![])]);
        assert!(validate_flow(&inst, &short)
            .unwrap_err()
            .to_string()
            .contains("endpoint"));
    }

    #[test]
    fn self_loops_rejected() {
        assert!(Digraph::new(2, vec![(1, 1)]).is_err());
        assert!(Digraph::new(2, vec![(0, 2)]).is_err());
    }

    #[test]
    fn acyclicity() {
        assert!(Digraph::new(3, vec![(0, 1), (1, 2), (0, 2)]).unwrap().is_acyclic());
        assert!(!Digraph::new(3, vec![(0, 1), (1, 2), (2, 0)]).unwrap().is_acyclic());
    }
}
