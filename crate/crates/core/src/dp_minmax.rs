//! Dynamic program for the variant where up to `alpha` agents may stay
//! unrouted.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::cost::Cost;
use crate::decomposition::SpanningTreeLayout;
use crate::dp_soac::{precheck_with_slack, Precheck};
use crate::error::{Result, SoacError};
use crate::kernel::{self, build_nodes, DpOptions, DpSolution, Engine, Snapshot};
use crate::model::{AgentId, FlowAssignment, Instance, VertexId};

/// A snapshot plus the number of unrouted agents with an endpoint in the
/// subtree. Boundary agents missing from the snapshot's maps are unrouted.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MinMaxSnapshot {
    pub snapshot: Snapshot,
    pub alpha_local: usize,
}

impl MinMaxSnapshot {
    /// Routed outgoing agents.
    pub fn a_out(&self) -> BTreeSet<AgentId> {
        self.snapshot.outgoing.keys().copied().collect()
    }

    /// Routed incoming agents.
    pub fn a_in(&self) -> BTreeSet<AgentId> {
        self.snapshot.incoming.keys().copied().collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MinMaxRecordTable {
    pub entries: BTreeMap<MinMaxSnapshot, Cost>,
}

impl MinMaxRecordTable {
    pub fn get(&self, snapshot: &MinMaxSnapshot) -> Cost {
        self.entries.get(snapshot).cloned().unwrap_or(Cost::Infinite)
    }
}

pub fn enumerate_minmax_snapshots(
    instance: &Instance,
    layout: &SpanningTreeLayout,
    v: VertexId,
    alpha: usize,
) -> Vec<MinMaxSnapshot> {
    let nodes = build_nodes(instance, layout);
    kernel::enumerate(instance, &nodes[v], Some(alpha))
        .into_iter()
        .map(|(snapshot, alpha_local)| MinMaxSnapshot { snapshot, alpha_local })
        .collect()
}

fn table_engine<'a>(
    instance: &'a Instance,
    layout: &SpanningTreeLayout,
    alpha: usize,
    child_records: &HashMap<VertexId, MinMaxRecordTable>,
) -> Engine<'a> {
    let mut engine = Engine::new(instance, layout, Some(alpha), kernel::DEFAULT_DP_BUDGET);
    engine.tables = Some(
        child_records
            .iter()
            .map(|(&w, table)| {
                (
                    w,
                    table
                        .entries
                        .iter()
                        .map(|(s, c)| ((s.snapshot.clone(), s.alpha_local), c.clone()))
                        .collect(),
                )
            })
            .collect(),
    );
    engine
}

fn node_table(engine: &mut Engine, v: VertexId, alpha: usize) -> Result<MinMaxRecordTable> {
    let node = engine.nodes[v].clone();
    let mut entries = BTreeMap::new();
    for (snapshot, alpha_local) in kernel::enumerate(engine.instance, &node, Some(alpha)) {
        let (cost, _) = engine.compute(v, &snapshot, alpha_local)?;
        entries.insert(MinMaxSnapshot { snapshot, alpha_local }, cost);
    }
    Ok(MinMaxRecordTable { entries })
}

pub fn minmax_leaf_record(
    instance: &Instance,
    layout: &SpanningTreeLayout,
    v: VertexId,
    alpha: usize,
) -> Result<MinMaxRecordTable> {
    if !layout.rooted().children[v].is_empty() {
        return Err(SoacError::InvalidLayout(format!("vertex {v} is not a leaf")));
    }
    let mut engine = table_engine(instance, layout, alpha, &HashMap::new());
    node_table(&mut engine, v, alpha)
}

pub fn minmax_internal_record(
    instance: &Instance,
    layout: &SpanningTreeLayout,
    v: VertexId,
    child_records: &HashMap<VertexId, MinMaxRecordTable>,
    alpha: usize,
) -> Result<MinMaxRecordTable> {
    let mut engine = table_engine(instance, layout, alpha, child_records);
    node_table(&mut engine, v, alpha)
}

pub fn solve_minmax_dp(instance: &Instance, layout: &SpanningTreeLayout, alpha: usize) -> Result<DpSolution> {
    solve_minmax_dp_with(instance, layout, alpha, &DpOptions::default())
}

/// Optimal cost over flows routing at least `m - alpha` agents, with a
/// witness marking the unrouted ones.
pub fn solve_minmax_dp_with(
    instance: &Instance,
    layout: &SpanningTreeLayout,
    alpha: usize,
    options: &DpOptions,
) -> Result<DpSolution> {
    kernel::check_layout(instance, layout)?;
    if alpha > instance.agent_count() {
        return Err(SoacError::InvalidInstance(format!(
            "alpha {alpha} exceeds the number of agents {}",
            instance.agent_count()
        )));
    }
    if let Precheck::NoInstance { .. } = precheck_with_slack(instance, layout, alpha) {
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
    kernel::solve(instance, layout, Some(alpha), options)
}

/// Snapshot that a concrete (possibly partial) flow induces at `v`.
pub fn minmax_snapshot_of_flow(
    instance: &Instance,
    layout: &SpanningTreeLayout,
    v: VertexId,
    flow: &FlowAssignment,
) -> MinMaxSnapshot {
    let nodes = build_nodes(instance, layout);
    let (snapshot, alpha_local) = kernel::snapshot_of(instance, &nodes[v], flow);
    MinMaxSnapshot { snapshot, alpha_local }
}
