//! Exact dynamic program over a spanning-tree layout, routing every agent.

use std::collections::{BTreeMap, HashMap};

use crate::cost::Cost;
use crate::decomposition::SpanningTreeLayout;
use crate::error::{Result, SoacError};
use crate::kernel::{self, build_nodes, Engine, Loc};
use crate::model::{Agent, ArcId, Digraph, FlowAssignment, Instance, VertexId};

pub use crate::kernel::{DpOptions, DpSolution, Snapshot, Trace, DEFAULT_DP_BUDGET};

/// Record values of one node, keyed by snapshot.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RecordTable {
    pub entries: BTreeMap<Snapshot, Cost>,
}

impl RecordTable {
    pub fn get(&self, snapshot: &Snapshot) -> Cost {
        self.entries.get(snapshot).cloned().unwrap_or(Cost::Infinite)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Precheck {
    Ok,
    /// More agents must cross the boundary of `node` than its arcs admit.
    NoInstance {
        node: VertexId,
    },
}

/// Cheap necessary condition: at every node, the agents that must leave
/// (enter) the subtree fit into the total capacity of the leaving
/// (entering) boundary arcs, after dropping up to `slack` of them.
pub fn precheck_with_slack(instance: &Instance, layout: &SpanningTreeLayout, slack: usize) -> Precheck {
    let (caps, _) = instance.capacities();
    for node in build_nodes(instance, layout) {
        let (mut out_cap, mut in_cap) = (0usize, 0usize);
        for &a in &node.boundary {
            if node.is_exit(instance, a) {
                out_cap += caps[a];
            } else {
                in_cap += caps[a];
            }
        }
        if node.outgoing.len() > out_cap + slack || node.incoming.len() > in_cap + slack {
            return Precheck::NoInstance { node: node.v };
        }
    }
    Precheck::Ok
}

pub fn feasibility_precheck(instance: &Instance, layout: &SpanningTreeLayout) -> Precheck {
    precheck_with_slack(instance, layout, 0)
}

/// The complete list of snapshots at `v`, in a deterministic order.
pub fn enumerate_snapshots(instance: &Instance, layout: &SpanningTreeLayout, v: VertexId) -> Vec<Snapshot> {
    let nodes = build_nodes(instance, layout);
    kernel::enumerate(instance, &nodes[v], None)
        .into_iter()
        .map(|(s, _)| s)
        .collect()
}

/// The instance induced on `D(v)` plus the boundary arcs of `v` (with their
/// outside endpoints), keeping agents with both endpoints in `D(v)`.
#[derive(Clone, Debug)]
pub struct SubInstance {
    pub instance: Instance,
    /// Original id of each vertex of the sub-instance.
    pub vertices: Vec<VertexId>,
    /// Original id of each arc of the sub-instance.
    pub arcs: Vec<ArcId>,
}

pub fn build_subinstance(instance: &Instance, layout: &SpanningTreeLayout, v: VertexId) -> Result<SubInstance> {
    let rooted = layout.rooted();
    let inside = |x: VertexId| rooted.contains(v, x);
    let mut keep = vec![false; instance.vertex_count()];
    let mut arcs = Vec::new();
    for (a, arc) in instance.graph.arcs().iter().enumerate() {
        if inside(arc.tail) || inside(arc.head) {
            keep[arc.tail] = true;
            keep[arc.head] = true;
            arcs.push(a);
        }
    }
    for x in 0..instance.vertex_count() {
        keep[x] |= inside(x);
    }
    let vertices: Vec<VertexId> = (0..instance.vertex_count()).filter(|&x| keep[x]).collect();
    let index: HashMap<VertexId, usize> = vertices.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let graph = Digraph::new(
        vertices.len(),
        arcs.iter()
            .map(|&a| {
                let arc = instance.graph.arc(a);
                (index[&arc.tail], index[&arc.head])
            })
            .collect(),
    )?;
    let latencies = arcs.iter().map(|&a| instance.latencies[a].clone()).collect();
    let agents = instance
        .agents
        .iter()
        .filter(|ag| inside(ag.source) && inside(ag.target))
        .map(|ag| Agent {
            source: index[&ag.source],
            target: index[&ag.target],
        })
        .collect();
    Ok(SubInstance {
        instance: Instance::new(graph, latencies, agents)?,
        vertices,
        arcs,
    })
}

/// The contracted network a node enumerates flows in.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Kernel {
    pub v: VertexId,
    /// `v`, the boundary vertices of each child subtree, and the outside
    /// endpoints of boundary arcs of `v`; sorted.
    pub vertices: Vec<VertexId>,
    /// Boundary arcs of `v` and of every child; sorted.
    pub arcs: Vec<ArcId>,
    /// Arcs whose cost is charged at `v`.
    pub charged: Vec<ArcId>,
    pub boundary: Vec<ArcId>,
    pub children: Vec<VertexId>,
}

pub fn kernelize(instance: &Instance, layout: &SpanningTreeLayout, v: VertexId) -> Kernel {
    let nodes = build_nodes(instance, layout);
    let node = &nodes[v];
    let mut arcs: Vec<ArcId> = node.boundary.iter().chain(&node.charged).copied().collect();
    arcs.sort_unstable();
    let mut vertices = vec![v];
    for &a in &arcs {
        let arc = instance.graph.arc(a);
        for x in [arc.tail, arc.head] {
            if node.loc[x] != Loc::V {
                vertices.push(x);
            }
        }
    }
    vertices.sort_unstable();
    vertices.dedup();
    Kernel {
        v,
        vertices,
        arcs,
        charged: node.charged.clone(),
        boundary: node.boundary.clone(),
        children: node.children.clone(),
    }
}

/// Arcs charged at `v`: those whose endpoints have `v` as lowest common
/// ancestor in the layout tree.
pub fn charged_arcs(instance: &Instance, layout: &SpanningTreeLayout, v: VertexId) -> Vec<ArcId> {
    build_nodes(instance, layout).swap_remove(v).charged
}

fn table_engine<'a>(
    instance: &'a Instance,
    layout: &SpanningTreeLayout,
    child_records: &HashMap<VertexId, RecordTable>,
    budget: u64,
) -> Engine<'a> {
    let mut engine = Engine::new(instance, layout, None, budget);
    engine.tables = Some(
        child_records
            .iter()
            .map(|(&w, table)| {
                (
                    w,
                    table.entries.iter().map(|(s, c)| ((s.clone(), 0), c.clone())).collect(),
                )
            })
            .collect(),
    );
    engine
}

fn node_table(engine: &mut Engine, v: VertexId) -> Result<RecordTable> {
    let node = engine.nodes[v].clone();
    let mut entries = BTreeMap::new();
    for (snap, _) in kernel::enumerate(engine.instance, &node, None) {
        let (cost, _) = engine.compute(v, &snap, 0)?;
        entries.insert(snap, cost);
    }
    Ok(RecordTable { entries })
}

/// Record table of a leaf of the layout tree.
pub fn leaf_record(instance: &Instance, layout: &SpanningTreeLayout, v: VertexId) -> Result<RecordTable> {
    if !layout.rooted().children[v].is_empty() {
        return Err(SoacError::InvalidLayout(format!("vertex {v} is not a leaf")));
    }
    let mut engine = table_engine(instance, layout, &HashMap::new(), DEFAULT_DP_BUDGET);
    node_table(&mut engine, v)
}

/// Record table of `v` from the full tables of its children. Child
/// snapshots missing from the supplied tables count as infinite.
pub fn internal_record(
    instance: &Instance,
    layout: &SpanningTreeLayout,
    v: VertexId,
    child_records: &HashMap<VertexId, RecordTable>,
) -> Result<RecordTable> {
    let mut engine = table_engine(instance, layout, child_records, DEFAULT_DP_BUDGET);
    node_table(&mut engine, v)
}

/// Full record tables for every node, bottom-up.
pub fn all_records(instance: &Instance, layout: &SpanningTreeLayout) -> Result<HashMap<VertexId, RecordTable>> {
    let rooted = layout.rooted();
    let mut records = HashMap::new();
    for &v in &rooted.postorder {
        let table = if rooted.children[v].is_empty() {
            leaf_record(instance, layout, v)?
        } else {
            internal_record(instance, layout, v, &records)?
        };
        records.insert(v, table);
    }
    Ok(records)
}

pub fn solve_soac_dp(instance: &Instance, layout: &SpanningTreeLayout) -> Result<DpSolution> {
    solve_soac_dp_with(instance, layout, &DpOptions::default())
}

/// Optimal cost and a witness flow, routing every agent.
pub fn solve_soac_dp_with(instance: &Instance, layout: &SpanningTreeLayout, options: &DpOptions) -> Result<DpSolution> {
    kernel::check_layout(instance, layout)?;
    if let Precheck::NoInstance { .. } = feasibility_precheck(instance, layout) {
        let cost = if options.fault_inject {
            kernel::corrupt(Cost::Infinite)
        } else {
            Cost::Infinite
        };
        return Ok(DpSolution {
            cost,
            flow: None,
            steps: 0,
        });
    }
    kernel::solve(instance, layout, None, options)
}

/// Snapshot that a concrete flow induces at `v`.
pub fn snapshot_of_flow(
    instance: &Instance,
    layout: &SpanningTreeLayout,
    v: VertexId,
    flow: &FlowAssignment,
) -> Snapshot {
    let nodes = build_nodes(instance, layout);
    kernel::snapshot_of(instance, &nodes[v], flow).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{find_layout, SpanningTreeLayout};
    use crate::model::{loads_and_cost, LatencyTable};
    use crate::oracle::solve_soac_oracle;

    fn chain() -> Instance {
        let graph = Digraph::new(3, vec![(0, 1), (1, 2)]).unwrap();
        let tables = vec![
            LatencyTable::from_ratios(&[(2, 3)]).unwrap(),
            LatencyTable::from_ratios(&[(5, 7)]).unwrap(),
        ];
        Instance::new(graph, tables, vec![Agent { source: 0, target: 2 }]).unwrap()
    }

    #[test]
    fn chain_cost_matches_oracle_for_every_layout() {
        let inst = chain();
        for parent in [vec![None, Some(0), Some(1)], vec![Some(1), Some(2), None]] {
            let layout = SpanningTreeLayout::new(&inst.graph, parent, vec![]).unwrap();
            let sol = solve_soac_dp(&inst, &layout).unwrap();
            assert_eq!(sol.cost, Cost::ratio(2, 3) + Cost::ratio(5, 7));
            assert_eq!(sol.cost, solve_soac_oracle(&inst).unwrap().cost);
            let flow = sol.flow.unwrap();
            assert_eq!(loads_and_cost(&inst, &flow).unwrap().1, sol.cost);
        }
    }

    #[test]
    fn zero_agents_cost_nothing() {
        let graph = Digraph::new(2, vec![(0, 1)]).unwrap();
        let inst = Instance::new(graph, vec![LatencyTable::zero(1)], vec![]).unwrap();
        let layout = find_layout(&inst, 4).unwrap().into_layout();
        assert!(solve_soac_dp(&inst, &layout).unwrap().cost.is_zero());
        assert_eq!(
            enumerate_snapshots(&inst, &layout, layout.root),
            vec![Snapshot::empty()]
        );
    }

    #[test]
    fn precheck_flags_overfull_cut() {
        let graph = Digraph::new(2, vec![(0, 1)]).unwrap();
        let inst = Instance::new(
            graph,
            vec![LatencyTable::zero(1)],
            vec![Agent { source: 1, target: 0 }; 3],
        )
        .unwrap();
        let layout = SpanningTreeLayout::new(&inst.graph, vec![None, Some(0)], vec![]).unwrap();
        assert_eq!(feasibility_precheck(&inst, &layout), Precheck::NoInstance { node: 1 });
        assert_eq!(solve_soac_dp(&inst, &layout).unwrap().cost, Cost::Infinite);
    }

    #[test]
    fn snapshot_counts_on_two_boundary_arcs() {
        // Vertex 1 is a leaf with one entering arc (0 -> 1) and one leaving arc (1 -> 2).
        let graph = Digraph::new(3, vec![(0, 1), (1, 2), (0, 2)]).unwrap();
        let inst = Instance::new(graph, vec![LatencyTable::zero(1); 3], vec![]).unwrap();
        let layout = SpanningTreeLayout::new(&inst.graph, vec![None, Some(2), Some(0)], vec![]).unwrap();
        let snaps = enumerate_snapshots(&inst, &layout, 1);
        assert_eq!(snaps.len(), 2);
        assert!(snaps.iter().any(|s| s.through == vec![vec![0, 1]]));

        let graph = Digraph::new(2, vec![(0, 1)]).unwrap();
        let inst = Instance::new(graph, vec![LatencyTable::zero(1)], vec![Agent { source: 1, target: 0 }]).unwrap();
        let layout = SpanningTreeLayout::new(&inst.graph, vec![None, Some(0)], vec![]).unwrap();
        assert!(enumerate_snapshots(&inst, &layout, 1).is_empty());
        let inst = Instance::new(
            Digraph::new(2, vec![(1, 0)]).unwrap(),
            vec![LatencyTable::zero(1)],
            vec![Agent { source: 1, target: 0 }],
        )
        .unwrap();
        let snaps = enumerate_snapshots(&inst, &layout, 1);
        assert_eq!(snaps.len(), 1);
        assert_eq!(snaps[0].outgoing.get(&0), Some(&vec![0]));
    }

    #[test]
    fn leaf_records() {
        let inst = Instance::new(
            Digraph::new(2, vec![(1, 0)]).unwrap(),
            vec![LatencyTable::from_ratios(&[(3, 1)]).unwrap()],
            vec![Agent { source: 1, target: 0 }],
        )
        .unwrap();
        let layout = SpanningTreeLayout::new(&inst.graph, vec![None, Some(0)], vec![]).unwrap();
        let table = leaf_record(&inst, &layout, 1).unwrap();
        assert_eq!(table.entries.len(), 1);
        assert!(table.entries.values().all(Cost::is_zero));
        let root = internal_record(&inst, &layout, 0, &HashMap::from([(1, table)])).unwrap();
        assert_eq!(root.get(&Snapshot::empty()), Cost::from_integer(3));
    }

    #[test]
    fn parallel_arcs_and_over_capacity() {
        let graph = Digraph::new(2, vec![(0, 1), (0, 1)]).unwrap();
        let tables = vec![
            LatencyTable::from_ratios(&[(1, 1)]).unwrap(),
            LatencyTable::from_ratios(&[(4, 1)]).unwrap(),
        ];
        let inst = Instance::new(graph, tables, vec![Agent { source: 0, target: 1 }; 2]).unwrap();
        let layout = find_layout(&inst, 4).unwrap().into_layout();
        assert_eq!(solve_soac_dp(&inst, &layout).unwrap().cost, Cost::from_integer(5));
        let three = Instance::new(
            inst.graph.clone(),
            inst.latencies.clone(),
            vec![Agent { source: 0, target: 1 }; 3],
        )
        .unwrap();
        assert_eq!(solve_soac_dp(&three, &layout).unwrap().cost, Cost::Infinite);
    }

    #[test]
    fn charging_covers_each_arc_once() {
        let graph = Digraph::new(4, vec![(0, 1), (1, 2), (2, 3), (3, 0), (0, 2), (2, 0)]).unwrap();
        let inst = Instance::new(graph, vec![LatencyTable::zero(1); 6], vec![]).unwrap();
        let layout = find_layout(&inst, 4).unwrap().into_layout();
        let mut all: Vec<ArcId> = (0..4).flat_map(|v| charged_arcs(&inst, &layout, v)).collect();
        all.sort_unstable();
        assert_eq!(all, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn subinstance_and_kernel_shapes() {
        let inst = chain();
        let layout = SpanningTreeLayout::new(&inst.graph, vec![None, Some(0), Some(1)], vec![]).unwrap();
        let sub = build_subinstance(&inst, &layout, 0).unwrap();
        assert_eq!(sub.instance, inst);
        let leaf = build_subinstance(&inst, &layout, 2).unwrap();
        assert_eq!(leaf.vertices, vec![1, 2]);
        assert_eq!(leaf.instance.agent_count(), 0);
        let kernel = kernelize(&inst, &layout, 1);
        assert_eq!(kernel.vertices, vec![0, 1, 2]);
        assert_eq!(kernel.charged, vec![1]);
        assert_eq!(kernel.boundary, vec![0]);
    }
}
